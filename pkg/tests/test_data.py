from dataclasses import replace

import numpy as np
import pytest
from PIL import Image

from sphdepth.data import (IDENTITY_AUGMENT, AugmentConfig, Equirect, ImagePair, Perspective, Record,
                           augment, center_crop, color_jitter, flip, load_pair, normalize, read_depth,
                           read_manifest, read_pfm, read_rgb, record_seed, rescale_angle_per_pixel,
                           roll, scale_factor, scale_perspective, to_batch, write_depth, write_manifest,
                           write_pfm, write_rgb)
from sphdepth.errors import AlignmentError, FormatError, ParamError, SizeError
from sphdepth.scenes import equirect_room, fronto_parallel_plane, perspective_room


def random_pair(rng, H=8, W=16, camera=None):
    rgb = rng.integers(0, 256, size=(H, W, 3), dtype=np.uint8)
    depth = rng.uniform(0.5, 9, size=(H, W))
    return ImagePair(rgb, depth, camera or Equirect(), "p")


def test_png_millimeters(tmp_path):
    Image.fromarray(np.array([[2500, 0]], dtype=np.uint16)).save(tmp_path / "d.png")
    d = read_depth(tmp_path / "d.png")
    assert d.tolist() == [[2.5, 0.0]]


def test_depth_png_round_trip(tmp_path, rng):
    depth = rng.uniform(0, 60, size=(7, 9))
    write_depth(tmp_path / "d.png", depth)
    back = read_depth(tmp_path / "d.png")
    assert np.max(np.abs(back - depth)) <= 0.0005 + 1e-12
    write_depth(tmp_path / "e.png", back)
    assert np.array_equal(read_depth(tmp_path / "e.png"), back)


def test_pfm_round_trip(tmp_path, rng):
    depth = rng.uniform(0, 10, size=(5, 6)).astype(np.float32).astype(np.float64)
    write_pfm(tmp_path / "d.pfm", depth)
    assert np.array_equal(read_pfm(tmp_path / "d.pfm"), depth)
    assert np.array_equal(read_depth(tmp_path / "d.pfm"), depth)
    raw = (tmp_path / "d.pfm").read_bytes()
    assert raw.startswith(b"Pf\n6 5\n-1.0\n")
    # first stored row is the bottom image row
    first = np.frombuffer(raw[len(b"Pf\n6 5\n-1.0\n"):][:24], "<f4")
    assert np.array_equal(first, depth[-1].astype(np.float32))


def test_bad_depth_files(tmp_path):
    (tmp_path / "x.pfm").write_bytes(b"P6\n1 1\n")
    with pytest.raises(FormatError):
        read_pfm(tmp_path / "x.pfm")
    with pytest.raises(FormatError):
        read_depth(tmp_path / "x.tif")
    Image.fromarray(np.zeros((2, 2, 3), np.uint8)).save(tmp_path / "c.png")
    with pytest.raises(FormatError):
        read_depth(tmp_path / "c.png")


def test_rgb_round_trip(tmp_path, rng):
    rgb = rng.integers(0, 256, size=(5, 7, 3), dtype=np.uint8)
    write_rgb(tmp_path / "a.png", rgb)
    assert np.array_equal(read_rgb(tmp_path / "a.png"), rgb)


def _write_pair(tmp_path, rid, H, W, rng, dH=None):
    write_rgb(tmp_path / f"{rid}.png", rng.integers(0, 256, size=(H, W, 3), dtype=np.uint8))
    write_depth(tmp_path / f"{rid}_d.png", rng.uniform(0.5, 5, size=(dH or H, W)))


def test_manifest_round_trip_and_load(tmp_path, rng):
    _write_pair(tmp_path, "a", 4, 8, rng)
    _write_pair(tmp_path, "b", 3, 5, rng)
    (tmp_path / "m.tsv").write_text(
        "# comment\n"
        "a\ta.png\ta_d.png\tequirect\t8x4\ttrain\n"
        "\n"
        "b\tb.png\tb_d.png\tperspective\t1.0\tval\n")
    recs = read_manifest(tmp_path / "m.tsv")
    assert [r.id for r in recs] == ["a", "b"]
    assert recs[0].dims == (8, 4) and recs[1].camera == Perspective(1.0)
    pair = load_pair(recs[0])
    assert pair.rgb.shape == (4, 8, 3) and pair.depth.shape == (4, 8)
    sub = tmp_path / "out"
    sub.mkdir()
    write_manifest(sub / "m2.tsv", recs)
    assert read_manifest(sub / "m2.tsv") == [replace(r, rgb=str(sub / ".." / f"{r.id}.png"),
                                                     depth=str(sub / ".." / f"{r.id}_d.png")) for r in recs]


def test_manifest_errors(tmp_path, rng):
    m = tmp_path / "m.tsv"
    m.write_text("a\ta.png\ta_d.png\tequirect\t8x4\n")
    with pytest.raises(FormatError):
        read_manifest(m)
    m.write_text("a\ta.png\ta_d.png\tfisheye\t-\ttrain\n")
    with pytest.raises(FormatError):
        read_manifest(m)
    m.write_text("a\ta.png\ta_d.png\tequirect\t-\ttrain\na\ta.png\ta_d.png\tequirect\t-\ttrain\n")
    with pytest.raises(FormatError):
        read_manifest(m)
    m.write_text("a\ta.png\ta_d.png\tequirect\t-\ttrain\n")
    with pytest.raises(FileNotFoundError):
        load_pair(read_manifest(m)[0])


def test_alignment_errors(tmp_path, rng):
    _write_pair(tmp_path, "a", 4, 8, rng, dH=5)
    rec = Record("a", str(tmp_path / "a.png"), str(tmp_path / "a_d.png"), Equirect())
    with pytest.raises(AlignmentError):
        load_pair(rec)
    _write_pair(tmp_path, "b", 4, 8, rng)
    rec = Record("b", str(tmp_path / "b.png"), str(tmp_path / "b_d.png"), Equirect(), dims=(16, 8))
    with pytest.raises(AlignmentError):
        load_pair(rec)
    with pytest.raises(AlignmentError):
        ImagePair(np.zeros((4, 6, 3), np.uint8), np.zeros((4, 6)), Equirect())


def test_record_seed_stable():
    assert record_seed(0, "a") == record_seed(0, "a")
    assert record_seed(0, "a") != record_seed(1, "a") != record_seed(0, "b")


@pytest.mark.parametrize("camera", [Equirect(), Perspective(1.2)])
def test_flip_involution(rng, camera):
    pair = random_pair(rng, camera=camera)
    twice = flip(flip(pair))
    assert np.array_equal(twice.rgb, pair.rgb) and np.array_equal(twice.depth, pair.depth)


def test_equirect_flip_negates_longitude(rng):
    pair = random_pair(rng)
    f = flip(pair)
    # column 0 sits at longitude -pi and column W/2 at 0; both are fixed
    assert np.array_equal(f.rgb[:, 0], pair.rgb[:, 0])
    assert np.array_equal(f.rgb[:, 8], pair.rgb[:, 8])
    assert np.array_equal(f.depth[:, 3], pair.depth[:, 13])


def test_jitter_leaves_depth(rng):
    pair = random_pair(rng)
    cfg = AugmentConfig(scale=(1, 1), rotation=(0, 0), flip_p=0.0, jitter=0.3, roll=False)
    out = augment(pair, cfg, rng)
    assert np.array_equal(out.depth, pair.depth)
    assert not np.array_equal(out.rgb, pair.rgb)
    assert np.array_equal(color_jitter(pair.rgb, 1, 1, 1), pair.rgb)


def test_identity_augment(rng):
    for camera in (Equirect(), Perspective(1.0)):
        pair = random_pair(rng, camera=camera)
        cfg = replace(IDENTITY_AUGMENT, crop=pair.shape)
        out = augment(pair, cfg, rng)
        assert np.array_equal(out.rgb, pair.rgb) and np.array_equal(out.depth, pair.depth)


def test_scale_matches_closer_pinhole_render():
    # zooming by s about the center equals rendering the plane s times closer
    s, d, fov = 1.2, 3.0, 1.0
    far = fronto_parallel_plane(60, 80, fov, d, period=0.5)
    near = fronto_parallel_plane(60, 80, fov, d / s, period=0.5)
    zoomed = scale_perspective(far, s)
    assert np.allclose(zoomed.depth, d / s, rtol=0, atol=1e-12)
    err = np.abs(zoomed.rgb.astype(float) - near.rgb).mean()
    baseline = np.abs(far.rgb.astype(float) - near.rgb).mean()
    assert err < 3.0 and err < 0.2 * baseline
    assert zoomed.camera == far.camera


def test_augment_keeps_alignment_and_positive_depth(rng):
    for pair in (equirect_room(16, 32, rng), perspective_room(24, 32, 1.2, rng)):
        out = augment(pair, AugmentConfig(), rng)
        assert out.rgb.shape[:2] == out.depth.shape == pair.shape
        assert np.all(out.depth >= 0)


def test_equirect_augment_is_roll_and_flip(rng):
    pair = random_pair(rng)
    cfg = AugmentConfig(jitter=0.0)
    out = augment(pair, cfg, np.random.default_rng(5))
    cands = [np.roll(p.depth, k, axis=1) for p in (pair, flip(pair)) for k in range(16)]
    assert any(np.array_equal(out.depth, c) for c in cands)


def test_center_crop_examples(rng):
    pair = random_pair(rng, 4, 4, Perspective(1.0))
    out = center_crop(pair, 2, 2)
    assert np.array_equal(out.depth, pair.depth[1:3, 1:3])
    assert out.camera.fov_x == pytest.approx(0.5)
    same = center_crop(pair, 4, 4)
    assert np.array_equal(same.rgb, pair.rgb)
    odd = center_crop(random_pair(rng, 5, 5, Perspective(1.0)), 2, 2)
    assert odd.depth.shape == (2, 2)
    with pytest.raises(SizeError):
        center_crop(pair, 5, 2)
    with pytest.raises(SizeError):
        center_crop(random_pair(rng), 4, 8)


def test_center_crop_odd_remainder(rng):
    pair = random_pair(rng, 5, 7, Perspective(1.0))
    out = center_crop(pair, 2, 2)
    assert np.array_equal(out.depth, pair.depth[1:3, 2:4])


def test_rescale_factor_example():
    assert scale_factor(1.0, 640, 2 * np.pi / 1024) == pytest.approx(0.254648, abs=1e-6)


def test_rescale_angle_per_pixel(rng):
    pair = random_pair(rng, 30, 40, Perspective(0.8))
    same = rescale_angle_per_pixel(pair, 0.8 / 40)
    assert np.array_equal(same.rgb, pair.rgb) and np.array_equal(same.depth, pair.depth)
    half = rescale_angle_per_pixel(pair, 0.8 / 20)
    assert half.shape == (15, 20)
    assert set(np.unique(half.depth)) <= set(np.unique(pair.depth))
    with pytest.raises(ParamError):
        rescale_angle_per_pixel(random_pair(rng), 0.01)


def test_normalize_and_batch(rng):
    pair = random_pair(rng)
    pair.depth[0, 0] = 0
    x = normalize(pair.rgb, AugmentConfig())
    assert x.shape == (3, 8, 16)
    assert x[0, 1, 2] == pytest.approx((pair.rgb[1, 2, 0] / 255 - 0.5) / 0.5)
    xb, d, mask = to_batch([pair, pair])
    assert xb.shape == (2, 3, 8, 16) and d.shape == mask.shape == (2, 1, 8, 16)
    assert not mask[0, 0, 0, 0] and mask.sum() == 2 * (8 * 16 - 1)


def test_augment_config_validation():
    with pytest.raises(ParamError):
        AugmentConfig(scale=(1.5, 1.0))
    with pytest.raises(ParamError):
        AugmentConfig(flip_p=1.5)
    with pytest.raises(ParamError):
        AugmentConfig(crop=(0, 4))


def test_roll(rng):
    pair = random_pair(rng)
    assert np.array_equal(roll(pair, 3).depth[:, 3], pair.depth[:, 0])
