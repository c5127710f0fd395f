import numpy as np
import pytest
import torch

from vidadapt.data import Frame
from vidadapt.networks import (
    ColorValidator,
    DenseFusionBlock,
    GeneratorConfig,
    PixelDiscriminator,
    XShapeGenerator,
    batch_to_frames,
    build_models,
    count_parameters,
    frames_to_batch,
    load_checkpoint,
    save_checkpoint,
)


def tiny_config(fusion_mode="dense_fusion"):
    return GeneratorConfig(
        frame_size=16,
        base_channels=8,
        bottleneck_channels=32,
        downsample_stages=2,
        fusion_mode=fusion_mode,
        disc_channels=8,
        validator_channels=8,
    )


def test_config_validation():
    with pytest.raises(ValueError, match="fusion_mode"):
        GeneratorConfig(fusion_mode="avg")
    with pytest.raises(ValueError, match="divisible"):
        GeneratorConfig(frame_size=100, downsample_stages=5)
    with pytest.raises(ValueError, match="unreachable"):
        GeneratorConfig(frame_size=64, base_channels=4, bottleneck_channels=512,
                        downsample_stages=2)
    cfg = tiny_config()
    assert cfg.encoder_channels() == [8, 16, 32]
    assert cfg.bottleneck_size == 4


def test_generator_shape_and_range():
    torch.manual_seed(0)
    gen = XShapeGenerator(tiny_config())
    src = torch.rand(2, 3, 16, 16) * 2 - 1
    ref = torch.rand(2, 3, 16, 16) * 2 - 1
    with torch.no_grad():
        out_src, out_ref = gen(src, ref)
    assert out_src.shape == src.shape and out_ref.shape == ref.shape
    for out in (out_src, out_ref):
        assert float(out.min()) >= -1.0 and float(out.max()) <= 1.0


def test_generator_streams_are_asymmetric():
    # the two inputs flow through separate streams, so swapping them is not a no-op
    torch.manual_seed(0)
    gen = XShapeGenerator(tiny_config())
    a = torch.rand(1, 3, 16, 16) * 2 - 1
    b = torch.rand(1, 3, 16, 16) * 2 - 1
    with torch.no_grad():
        out_ab = gen(a, b)
        out_ba = gen(b, a)
    assert not torch.allclose(out_ab[0], out_ba[1], atol=1e-4)


def test_generator_input_validation():
    gen = XShapeGenerator(tiny_config())
    ok = torch.zeros(1, 3, 16, 16)
    with pytest.raises(ValueError, match="16×16"):
        gen(torch.zeros(1, 3, 8, 8), torch.zeros(1, 3, 8, 8))
    with pytest.raises(ValueError, match="expected"):
        gen(torch.zeros(1, 1, 16, 16), ok)
    with pytest.raises(ValueError, match="match"):
        gen(ok, torch.zeros(2, 3, 16, 16))


def test_fusion_block_spatial_permutation_invariance():
    torch.manual_seed(1)
    block = DenseFusionBlock(channels=8, spatial=4)
    src = torch.randn(2, 8, 4, 4)
    ref = torch.randn(2, 8, 4, 4)
    base = block(src, ref)
    perm = torch.randperm(16)
    src_p = src.reshape(2, 8, 16)[:, :, perm].reshape(2, 8, 4, 4)
    ref_p = ref.reshape(2, 8, 16)[:, :, perm].reshape(2, 8, 4, 4)
    assert torch.allclose(block(src_p, ref_p), base, atol=1e-6)
    assert base.shape == (2, 8, 4, 4)


def test_fusion_block_shape_errors():
    block = DenseFusionBlock(channels=8, spatial=4)
    with pytest.raises(ValueError, match="differ"):
        block(torch.zeros(1, 8, 4, 4), torch.zeros(2, 8, 4, 4))
    with pytest.raises(ValueError, match="expects"):
        block(torch.zeros(1, 8, 2, 2), torch.zeros(1, 8, 2, 2))


def test_fusion_modes_parameter_ordering():
    dense = XShapeGenerator(tiny_config("dense_fusion"))
    shared = XShapeGenerator(tiny_config("weight_sharing"))
    none = XShapeGenerator(tiny_config("none"))
    assert count_parameters(shared) < count_parameters(dense)
    assert count_parameters(shared) < count_parameters(none)
    assert dense.fusion is not None and shared.fusion is None and none.fusion is None


def test_weight_sharing_ties_storage():
    gen = XShapeGenerator(tiny_config("weight_sharing"))
    tied_res = gen.source_encoder.stages[-1].blocks[-1]
    assert gen.reference_encoder.stages[-1].blocks[-1] is tied_res
    assert gen.reference_decoder.ups[0] is gen.source_decoder.ups[0]
    # shared parameters are literally the same storage
    p_src = dict(gen.source_decoder.ups[0].named_parameters())
    p_ref = dict(gen.reference_decoder.ups[0].named_parameters())
    for name in p_src:
        assert p_src[name].data_ptr() == p_ref[name].data_ptr()
    # and deduplicated in the parameter list
    ids = [id(p) for p in gen.parameters()]
    assert len(ids) == len(set(ids))


def test_all_generator_params_reached_by_gradient():
    gen = XShapeGenerator(tiny_config())
    out_src, out_ref = gen(torch.rand(1, 3, 16, 16) * 2 - 1, torch.rand(1, 3, 16, 16) * 2 - 1)
    (out_src.mean() + out_ref.mean()).backward()
    missing = [n for n, p in gen.named_parameters() if p.grad is None or p.grad.abs().max() == 0]
    assert not missing, f"parameters without gradient: {missing}"


def test_discriminator_output():
    disc = PixelDiscriminator(frame_size=16, channels=8)
    x = torch.rand(2, 3, 16, 16) * 2 - 1
    scores = disc(x)
    assert scores.shape == (2, 1, 16, 16)
    # unbounded scores: no squashing applied
    disc2 = PixelDiscriminator(frame_size=8, channels=8)
    assert disc2(torch.rand(1, 3, 8, 8)).shape == (1, 1, 8, 8)
    with pytest.raises(ValueError, match="expected"):
        disc(torch.zeros(2, 1, 16, 16))


def test_validator_output():
    val = ColorValidator(channels=8, bins=5)
    a = torch.rand(3, 3, 16, 16) * 2 - 1
    b = torch.rand(3, 3, 16, 16) * 2 - 1
    hist, iv = val(a, b)
    assert hist.shape == (3, 15)
    assert iv.shape == (3, 1)
    # order sensitivity: swapping the pair changes the regression
    hist_swapped, _ = val(b, a)
    assert not torch.allclose(hist, hist_swapped)
    with pytest.raises(ValueError, match="share"):
        val(a, b[:2])
    # stays finite on tiny frames
    h8, v8 = ColorValidator(channels=8)(torch.rand(1, 3, 8, 8), torch.rand(1, 3, 8, 8))
    assert torch.isfinite(h8).all() and torch.isfinite(v8).all()


def test_build_models_deterministic():
    cfg = tiny_config()
    b1 = build_models(cfg, seed=42)
    b2 = build_models(cfg, seed=42)
    for name, net in b1.networks().items():
        other = b2.networks()[name].state_dict()
        for key, value in net.state_dict().items():
            assert torch.equal(value, other[key]), f"{name}.{key}"
    b3 = build_models(cfg, seed=43)
    diffs = [
        not torch.equal(v, b3.gen_ab.state_dict()[k]) for k, v in b1.gen_ab.state_dict().items()
    ]
    assert any(diffs)


def test_init_weight_scale():
    bundle = build_models(tiny_config(), seed=0)
    w = bundle.gen_ab.source_decoder.head.weight.detach()
    assert 0.01 < float(w.std()) < 0.03
    assert float(bundle.gen_ab.source_decoder.head.bias.detach().abs().max()) == 0.0


def test_checkpoint_round_trip(tmp_path):
    bundle = build_models(tiny_config(), seed=7)
    bundle.step, bundle.epoch = 12, 3
    bundle.train_config = {"seed": 7}
    path = save_checkpoint(bundle, tmp_path / "ckpt.pt")
    restored = load_checkpoint(path)
    assert restored.step == 12 and restored.epoch == 3
    assert restored.train_config == {"seed": 7}
    assert restored.config == bundle.config
    for name, net in bundle.networks().items():
        other = restored.networks()[name].state_dict()
        for key, value in net.state_dict().items():
            assert torch.equal(value, other[key])


def test_checkpoint_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_checkpoint(tmp_path / "missing.pt")
    bundle = build_models(tiny_config(), seed=0)
    path = save_checkpoint(bundle, tmp_path / "c.pt")
    payload = torch.load(path, map_location="cpu", weights_only=True)
    payload["version"] = 99
    torch.save(payload, path)
    with pytest.raises(ValueError, match="version"):
        load_checkpoint(path)
    payload["version"] = 1
    del payload["models"]["gen_ab"]
    torch.save(payload, path)
    with pytest.raises(ValueError, match="gen_ab"):
        load_checkpoint(path)


def test_frame_batch_round_trip():
    rng = np.random.default_rng(6)
    frames = [Frame(rng.uniform(0, 1, (8, 8, 3))) for _ in range(3)]
    batch = frames_to_batch(frames)
    assert batch.shape == (3, 3, 8, 8)
    assert batch.dtype == torch.float32
    assert float(batch.min()) >= -1.0 and float(batch.max()) <= 1.0
    back = batch_to_frames(batch)
    for orig, rec in zip(frames, back):
        assert rec.range_tag == "unit"
        assert np.abs(orig.pixels - rec.pixels).max() < 1e-6
    with pytest.raises(ValueError, match="no frames"):
        frames_to_batch([])
