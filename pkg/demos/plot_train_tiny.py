"""
Overfitting a handful of panoramas
==================================

A few synthetic rooms are enough to watch the spherical network learn:
the L1 loss falls epoch by epoch and the evaluation metrics follow.
Sizes are kept small so this finishes in well under a minute.
"""
import numpy as np

from sphdepth.model import ModelSpec, StageSpec, build_model
from sphdepth.scenes import equirect_room
from sphdepth.synthesis import synthesize_pair
from sphdepth.training import HyperParams, evaluate, train

rng = np.random.default_rng(0)
rooms = [synthesize_pair(equirect_room(32, 64, rng, rid=f"room{i}")) for i in range(4)]

spec = ModelSpec(variant="spherical", in_shape=(3, 32, 64), stem_channels=8,
                 encoder=(StageSpec(8, 1, 1), StageSpec(16, 1, 2)), decoder=(16, 8))
model = build_model(spec, seed=0)
print("parameters:", model.num_parameters())

hp = HyperParams(batch_size=4, epochs=40, decay_every=20)
log = train(model, rooms, hp, np.random.default_rng(1),
            on_epoch=lambda r: print(f"epoch {r.epoch:2d}  lr {r.lr:.4f}  L1 {r.l1:.3f}") if r.epoch % 5 == 0 else None)

report = evaluate(model, rooms)
print(report.to_text())
