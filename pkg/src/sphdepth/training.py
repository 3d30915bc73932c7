"""Training loop, prediction and evaluation for the depth networks."""
from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import functional as F
from .checkpoint import save_checkpoint
from .data import IDENTITY_AUGMENT, AugmentConfig, ImagePair, augment, normalize, resize_pair, resize_rgb, to_batch
from .errors import EmptyDatasetError, ParamError
from .metrics import EvalReport, MetricAccumulator
from .model import Model, forward
from .optim import OptimizerState, lr_schedule, sgd_step
from .tensor import Tensor, no_grad


@dataclass(frozen=True)
class HyperParams:
    lr0: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 1e-4
    decay_factor: float = 0.8
    decay_every: int = 5
    batch_size: int = 16
    epochs: int = 30

    def __post_init__(self):
        if self.lr0 < 0:
            raise ParamError("lr0 must be >= 0")
        if self.batch_size < 1:
            raise ParamError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ParamError("epochs must be >= 0")
        if self.decay_every < 1:
            raise ParamError("decay_every must be >= 1")


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    l1: float
    wall_time: float


@dataclass
class TrainLog:
    records: list = field(default_factory=list)

    def append(self, rec: EpochRecord, path=None):
        self.records.append(rec)
        if path is not None:
            with open(path, "a") as fh:
                fh.write(json.dumps(asdict(rec)) + "\n")

    @property
    def losses(self):
        return [r.l1 for r in self.records]


def read_train_log(path) -> TrainLog:
    log = TrainLog()
    for line in Path(path).read_text().splitlines():
        if line.strip():
            log.records.append(EpochRecord(**json.loads(line)))
    return log


def _fit_to_model(pair: ImagePair, model: Model) -> ImagePair:
    _, H, W = model.spec.in_shape
    return resize_pair(pair, H, W)


def train(model: Model, dataset, hp: HyperParams, rng: np.random.Generator,
          out_dir=None, augment_cfg: AugmentConfig | None = None,
          norm_cfg: AugmentConfig = IDENTITY_AUGMENT, on_epoch=None) -> TrainLog:
    """Fit ``model`` with masked L1 loss and momentum SGD.

    ``dataset`` is a sequence of :class:`ImagePair`; pairs are resized to the
    model input size. With ``out_dir`` set, ``epoch_000.sdck`` holds the
    initial weights, one checkpoint follows every epoch and each epoch
    appends a JSON line to ``train_log.jsonl``. A truthy return from
    ``on_epoch(record)`` stops training after that epoch.
    """
    pairs = [_fit_to_model(p, model) for p in dataset]
    if not pairs:
        raise EmptyDatasetError("training split is empty")
    log_path = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        log_path = out_dir / "train_log.jsonl"
        log_path.write_text("")
        save_checkpoint(out_dir / "epoch_000.sdck", model.state_dict())

    opt = OptimizerState(hp.lr0, hp.momentum, hp.weight_decay, no_decay=model.no_decay_names())
    log = TrainLog()
    for epoch in range(hp.epochs):
        t0 = time.perf_counter()
        opt.epoch = epoch
        opt.learning_rate = lr_schedule(epoch, hp.lr0, hp.decay_factor, hp.decay_every)
        model.training = True
        order = rng.permutation(len(pairs))
        total, count = 0.0, 0
        for start in range(0, len(order), hp.batch_size):
            batch = [pairs[i] for i in order[start:start + hp.batch_size]]
            if augment_cfg is not None:
                batch = [augment(p, augment_cfg, rng) for p in batch]
            x, d, mask = to_batch(batch, norm_cfg)
            if not mask.any():
                continue
            loss = F.l1_loss(forward(model, Tensor(x)), d, mask)
            loss.backward()
            sgd_step(model.params, opt)
            n = int(mask.sum())
            total += loss.item() * n
            count += n
        model.training = False
        mean_l1 = total / count if count else float("nan")
        log.append(EpochRecord(epoch + 1, opt.learning_rate, mean_l1, time.perf_counter() - t0), log_path)
        if out_dir is not None:
            save_checkpoint(out_dir / f"epoch_{epoch + 1:03d}.sdck", model.state_dict())
        if on_epoch is not None and on_epoch(log.records[-1]):
            break
    return log


def predict(model: Model, rgb, norm_cfg: AugmentConfig = IDENTITY_AUGMENT) -> np.ndarray:
    """Depth map (meters) at the resolution of ``rgb``."""
    rgb = np.asarray(rgb)
    H, W = rgb.shape[:2]
    _, mh, mw = model.spec.in_shape
    x = normalize(resize_rgb(rgb, mh, mw) if (H, W) != (mh, mw) else rgb, norm_cfg)
    was = model.training
    model.training = False
    with no_grad():
        out = forward(model, Tensor(x[None])).data[0, 0]
    model.training = was
    return F.resize_bilinear(Tensor(out), (H, W)).data


def evaluate(model: Model, pairs, norm_cfg: AugmentConfig = IDENTITY_AUGMENT) -> EvalReport:
    """Metrics over every valid ground-truth pixel of ``pairs``."""
    acc = MetricAccumulator()
    for pair in pairs:
        acc.accumulate(predict(model, pair.rgb, norm_cfg), pair.depth)
    return acc.finalize()
