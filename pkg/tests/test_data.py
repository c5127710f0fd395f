import json

import numpy as np
import pytest

from vidadapt.data import (
    ColorTransformSpec,
    Frame,
    FramePair,
    VideoClip,
    apply_transform_to_clip,
    iterate_pairs,
    load_clip,
    load_manifest,
    make_moving_shape_clip,
    sample_real_pair,
    save_frame,
    save_manifest,
    synthesize_domain_pair,
    write_synthetic_dataset,
)


def test_frame_validation():
    Frame(np.zeros((4, 4, 3)))
    Frame(np.zeros((4, 4, 3)) - 1.0, range_tag="signed")
    with pytest.raises(ValueError, match="outside"):
        Frame(np.full((2, 2, 3), 1.5))
    with pytest.raises(ValueError, match="outside"):
        Frame(np.full((2, 2, 3), -0.1))  # negative values need the signed tag
    with pytest.raises(ValueError, match="H×W×3"):
        Frame(np.zeros((4, 4)))
    with pytest.raises(ValueError, match="range_tag"):
        Frame(np.zeros((2, 2, 3)), range_tag="percent")


def test_frame_range_conversion_round_trip():
    rng = np.random.default_rng(0)
    f = Frame(rng.uniform(0, 1, (3, 3, 3)))
    back = f.to_signed().to_unit()
    assert np.allclose(back.pixels, f.pixels, atol=1e-12)


def test_clip_validation():
    frames = [Frame(np.zeros((2, 2, 3))) for _ in range(3)]
    clip = VideoClip("c", "A", frames, reference_index=1)
    assert clip.reference is frames[1]
    with pytest.raises(ValueError, match="domain"):
        VideoClip("c", "X", frames)
    with pytest.raises(ValueError, match="no frames"):
        VideoClip("c", "A", [])
    with pytest.raises(ValueError, match="reference_index"):
        VideoClip("c", "A", frames, reference_index=3)
    mixed = frames[:2] + [Frame(np.zeros((4, 4, 3)))]
    with pytest.raises(ValueError, match="differs"):
        VideoClip("c", "A", mixed)


def test_frame_pair_rejects_degenerate():
    f = Frame(np.zeros((2, 2, 3)))
    with pytest.raises(ValueError, match="equals"):
        FramePair(f, f, "c", source_index=0, reference_index=0)


def test_synthetic_dataset_and_manifest_round_trip(tmp_path):
    paths = write_synthetic_dataset(tmp_path, num_clips_per_domain=2, frames_per_clip=4, size=16)
    man_a = load_manifest(paths["a"])
    man_b = load_manifest(paths["b"])
    assert len(man_a.clips) == 2 and len(man_b.clips) == 2
    assert man_a.frame_count() == 8
    clip = load_clip(man_a, man_a.clip_ids()[0], size=16, divisor=4)
    assert len(clip) == 4
    assert clip.domain == "A"
    assert clip.frames[0].pixels.shape == (16, 16, 3)
    transform = ColorTransformSpec.from_dict(json.loads(paths["transform"].read_text()))
    assert transform.gain == (1.3, 1.0, 0.75)


def test_manifest_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_manifest(tmp_path / "missing.json")

    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ValueError, match="invalid JSON"):
        load_manifest(bad)

    # dangling frame reference names the missing file
    dangle = tmp_path / "dangle.json"
    dangle.write_text(json.dumps({"root": ".", "clips": [
        {"id": "c1", "domain": "A", "frames": ["nope.png"]}]}))
    with pytest.raises(FileNotFoundError, match="nope.png"):
        load_manifest(dangle)

    save_frame(Frame(np.zeros((4, 4, 3))), tmp_path / "f.png")
    dup = tmp_path / "dup.json"
    dup.write_text(json.dumps({"root": ".", "clips": [
        {"id": "c1", "domain": "A", "frames": ["f.png"]},
        {"id": "c1", "domain": "B", "frames": ["f.png"]}]}))
    with pytest.raises(ValueError, match="duplicate"):
        load_manifest(dup)

    missing_keys = tmp_path / "mk.json"
    missing_keys.write_text(json.dumps({"root": ".", "clips": [{"id": "c1"}]}))
    with pytest.raises(ValueError, match="missing keys"):
        load_manifest(missing_keys)

    bad_domain = tmp_path / "bd.json"
    bad_domain.write_text(json.dumps({"root": ".", "clips": [
        {"id": "c1", "domain": "C", "frames": ["f.png"]}]}))
    with pytest.raises(ValueError, match="domain"):
        load_manifest(bad_domain)

    undecodable = tmp_path / "junk.png"
    undecodable.write_bytes(b"not an image")
    ud = tmp_path / "ud.json"
    ud.write_text(json.dumps({"root": ".", "clips": [
        {"id": "c1", "domain": "A", "frames": ["junk.png"]}]}))
    with pytest.raises(ValueError, match="decode"):
        load_manifest(ud)


def test_load_clip_size_validation(tmp_path):
    paths = write_synthetic_dataset(tmp_path, num_clips_per_domain=2, frames_per_clip=3, size=16)
    man = load_manifest(paths["a"])
    with pytest.raises(ValueError, match="divisible"):
        load_clip(man, man.clip_ids()[0], size=20, divisor=32)
    with pytest.raises(KeyError):
        load_clip(man, "nonexistent", size=16, divisor=4)


def test_save_frame_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    frame = Frame(rng.uniform(0, 1, (8, 8, 3)))
    save_frame(frame, tmp_path / "c/f.png")
    man = tmp_path / "m.json"
    man.write_text(json.dumps({"root": ".", "clips": [
        {"id": "c", "domain": "A", "frames": ["c/f.png", "c/f.png"]}]}))
    clip = load_clip(load_manifest(man), "c", size=8, divisor=4)
    assert np.abs(clip.frames[0].pixels - frame.pixels).max() <= 1.0 / 255.0


def test_iterate_pairs():
    clip = make_moving_shape_clip("c", num_frames=5, size=16, rng_seed=2)
    pairs = iterate_pairs(clip)
    assert len(pairs) == 4
    assert [p.source_index for p in pairs] == [1, 2, 3, 4]
    for p in pairs:
        assert p.reference is clip.reference
        assert p.reference_index == clip.reference_index
        assert p.clip_id == "c"
    shuffled = iterate_pairs(clip, shuffle_seed=3)
    assert sorted(p.source_index for p in shuffled) == [1, 2, 3, 4]
    assert [p.source_index for p in iterate_pairs(clip, shuffle_seed=3)] == [
        p.source_index for p in shuffled
    ]

    single = VideoClip("s", "A", [Frame(np.zeros((2, 2, 3)))])
    with pytest.raises(ValueError, match="2 frames"):
        iterate_pairs(single)


def test_iterate_pairs_respects_reference_index():
    clip = make_moving_shape_clip("c", num_frames=4, size=16, rng_seed=2)
    moved = VideoClip("c", "A", clip.frames, reference_index=2)
    pairs = iterate_pairs(moved)
    assert [p.source_index for p in pairs] == [0, 1, 3]
    assert all(p.reference is moved.frames[2] for p in pairs)


def test_sample_real_pair_deterministic_and_exhaustive():
    clip = make_moving_shape_clip("c", num_frames=3, size=16, rng_seed=4)
    first = sample_real_pair(clip, 123)
    again = sample_real_pair(clip, 123)
    assert (first.source_index, first.reference_index) == (
        again.source_index,
        again.reference_index,
    )
    assert first.source_index != first.reference_index
    seen = set()
    for seed in range(200):
        p = sample_real_pair(clip, seed)
        seen.add(frozenset((p.source_index, p.reference_index)))
    assert seen == {frozenset(s) for s in ((0, 1), (0, 2), (1, 2))}


def test_color_transform_validation_and_apply():
    with pytest.raises(ValueError, match="gain"):
        ColorTransformSpec(gain=(5.0, 1.0, 1.0))
    with pytest.raises(ValueError, match="bias"):
        ColorTransformSpec(bias=(0.0, 0.6, 0.0))
    with pytest.raises(ValueError, match="gamma"):
        ColorTransformSpec(gamma=0.1)
    t = ColorTransformSpec(gain=(1.3, 1.0, 0.75), bias=(0.1, 0.0, -0.2), gamma=1.2)
    rng = np.random.default_rng(5)
    x = rng.uniform(0, 1, (4, 4, 3))
    expected = np.clip(
        np.array([1.3, 1.0, 0.75]) * x**1.2 + np.array([0.1, 0.0, -0.2]), 0, 1
    )
    assert np.allclose(t.apply(x), expected)
    assert ColorTransformSpec.from_dict(t.to_dict()) == t


def test_synthesize_domain_pair():
    base = [make_moving_shape_clip(f"c{k}", 4, 16, k) for k in range(4)]
    t = ColorTransformSpec(gain=(1.3, 1.0, 0.75), gamma=1.2)
    a1, b1 = synthesize_domain_pair(base, t, rng_seed=9)
    a2, b2 = synthesize_domain_pair(base, t, rng_seed=9)
    assert [c.clip_id for c in a1] == [c.clip_id for c in a2]
    assert len(a1) == 2 and len(b1) == 2
    ids_a = {c.clip_id for c in a1}
    ids_b = {c.clip_id for c in b1}
    assert not ids_a & ids_b
    assert all(c.domain == "A" for c in a1) and all(c.domain == "B" for c in b1)
    # domain B frames are exactly the transformed base frames
    source = {c.clip_id: c for c in base}
    for clip in b1:
        expected = apply_transform_to_clip(source[clip.clip_id], t)
        for f_got, f_exp in zip(clip.frames, expected.frames):
            assert np.allclose(f_got.pixels, f_exp.pixels)
    with pytest.raises(ValueError):
        synthesize_domain_pair([base[0]], t, 0)


def test_moving_shape_clip_properties():
    clip = make_moving_shape_clip("c", num_frames=6, size=24, rng_seed=8)
    again = make_moving_shape_clip("c", num_frames=6, size=24, rng_seed=8)
    assert len(clip) == 6
    for f1, f2 in zip(clip.frames, again.frames):
        assert np.array_equal(f1.pixels, f2.pixels)
        assert f1.pixels.min() >= 0.0 and f1.pixels.max() <= 1.0
    # shapes actually move
    assert not np.array_equal(clip.frames[0].pixels, clip.frames[3].pixels)


def test_save_manifest_round_trip(tmp_path):
    paths = write_synthetic_dataset(tmp_path, num_clips_per_domain=2, frames_per_clip=3, size=16)
    man = load_manifest(paths["a"])
    out = tmp_path / "copy.json"
    save_manifest(man, out, root=str(man.root))
    reloaded = load_manifest(out)
    assert reloaded.clip_ids() == man.clip_ids()
    assert reloaded.frame_count() == man.frame_count()
