import numpy as np
import pytest
import torch

from vidadapt.data import Frame
from vidadapt.histogram import (
    HistogramVector,
    channel_bin_counts,
    channel_histogram,
    histogram_vector,
    relative_color_distribution,
    soft_channel_histogram,
    soft_histogram_torch,
)


def brute_force_counts(pixels: np.ndarray, bins: int) -> np.ndarray:
    """Independent oracle: per-pixel loop over explicit bin intervals."""
    counts = np.zeros((bins, 3), dtype=np.int64)
    h, w, _ = pixels.shape
    for i in range(h):
        for j in range(w):
            for c in range(3):
                v = pixels[i, j, c]
                for b in range(bins):
                    lo, hi = b / bins, (b + 1) / bins
                    if (lo <= v < hi) or (b == bins - 1 and lo <= v <= 1.0):
                        counts[b, c] += 1
                        break
    return counts


def test_counts_match_brute_force():
    rng = np.random.default_rng(7)
    for trial in range(30):
        size = int(rng.integers(1, 9))
        frame = Frame(rng.uniform(0.0, 1.0, size=(size, size, 3)))
        for bins in (2, 5, 8):
            got = channel_bin_counts(frame, bins)
            expected = brute_force_counts(frame.pixels, bins)
            assert np.array_equal(got, expected)


def test_counts_boundary_values():
    # exact bin edges land in the right-hand bin; 1.0 goes to the last bin
    pix = np.zeros((1, 6, 3))
    pix[0, :, 0] = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0]
    counts = channel_bin_counts(Frame(pix), 5)
    assert counts[:, 0].tolist() == [1, 1, 1, 1, 2]
    # other channels are all zero -> first bin
    assert counts[:, 1].tolist() == [6, 0, 0, 0, 0]


def test_histogram_known_red_frame():
    pix = np.zeros((2, 2, 3))
    pix[:, :, 0] = [[0.0, 0.1], [0.5, 0.95]]
    hist = channel_histogram(Frame(pix), 5)
    assert np.allclose(hist[:, 0], [0.5, 0.0, 0.25, 0.0, 0.25])
    assert np.allclose(hist[:, 1], [1.0, 0.0, 0.0, 0.0, 0.0])
    assert np.allclose(hist[:, 2], [1.0, 0.0, 0.0, 0.0, 0.0])


def test_histogram_unit_mass_per_channel():
    rng = np.random.default_rng(3)
    for _ in range(20):
        frame = Frame(rng.uniform(0.0, 1.0, size=(5, 7, 3)))
        for bins in (2, 5, 8):
            hist = channel_histogram(frame, bins)
            assert np.allclose(hist.sum(axis=0), 1.0, atol=1e-12)


def test_histogram_rejects_signed_frames():
    frame = Frame(np.zeros((2, 2, 3)) - 0.5, range_tag="signed")
    with pytest.raises(ValueError, match="unit-range"):
        channel_histogram(frame)


def test_histogram_rejects_few_bins():
    with pytest.raises(ValueError, match="bins"):
        channel_histogram(Frame(np.zeros((2, 2, 3))), bins=1)


def test_rcd_uniform_example():
    src = Frame(np.full((4, 4, 3), 0.1))
    ref = Frame(np.full((4, 4, 3), 0.9))
    rcd = relative_color_distribution(src, ref)
    expected = np.tile([-1.0, 0.0, 0.0, 0.0, 1.0], 3)
    assert np.allclose(rcd.values, expected)
    assert rcd.kind == "relative"


def test_rcd_antisymmetry_and_zero():
    rng = np.random.default_rng(11)
    for _ in range(25):
        a = Frame(rng.uniform(0.0, 1.0, size=(6, 6, 3)))
        b = Frame(rng.uniform(0.0, 1.0, size=(6, 6, 3)))
        fwd = relative_color_distribution(a, b).values
        bwd = relative_color_distribution(b, a).values
        assert np.abs(fwd + bwd).max() < 1e-12
        assert np.abs(relative_color_distribution(a, a).values).max() == 0.0
        assert np.abs(fwd.reshape(3, -1).sum(axis=1)).max() < 1e-9


def test_histogram_vector_layout():
    # channel blocks are ordered R, G, B
    pix = np.zeros((2, 2, 3))
    pix[:, :, 1] = 0.95  # all green mass in the last bin
    vec = histogram_vector(Frame(pix), 5)
    assert vec.values[0] == 1.0  # R: all zeros -> first bin
    assert vec.values[9] == 1.0  # G block, last bin
    assert vec.values[10] == 1.0  # B: first bin


def test_histogram_vector_invariants():
    with pytest.raises(ValueError):
        HistogramVector(np.array([0.5, 0.5, 0.1] * 5), kind="absolute")
    with pytest.raises(ValueError):
        HistogramVector(np.full(15, 0.2), kind="relative")
    with pytest.raises(ValueError):
        HistogramVector(np.zeros(14))


def test_soft_histogram_unit_mass_and_gradient_flow():
    values = torch.rand(10, 3, dtype=torch.float64, requires_grad=True)
    hist = soft_histogram_torch(values, bins=5, temperature=0.1)
    assert hist.shape == (5, 3)
    assert torch.allclose(hist.sum(dim=0), torch.ones(3, dtype=torch.float64), atol=1e-12)
    hist[0].sum().backward()
    assert values.grad is not None
    assert float(values.grad.abs().max()) > 0.0


def test_soft_histogram_converges_to_hard():
    rng = np.random.default_rng(5)
    # keep pixels away from bin edges so the hard assignment is unambiguous
    centers = (np.arange(5) + 0.5) / 5
    pix = centers[rng.integers(0, 5, size=(8, 8, 3))] + rng.uniform(-0.05, 0.05, (8, 8, 3))
    frame = Frame(np.clip(pix, 0.0, 1.0))
    hard = channel_histogram(frame, 5)
    soft = soft_channel_histogram(frame, 5, temperature=1e-3)
    assert np.abs(soft - hard).max() < 1e-6


def test_soft_histogram_validation():
    with pytest.raises(ValueError, match="temperature"):
        soft_histogram_torch(torch.rand(4, 3), bins=5, temperature=0.0)
    with pytest.raises(ValueError, match="bins"):
        soft_histogram_torch(torch.rand(4, 3), bins=1, temperature=0.1)
