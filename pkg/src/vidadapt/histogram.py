"""Per-channel color histograms and relative color distributions.

Bins partition [0, 1] uniformly; every bin is half-open [lo, hi) except the
last, which is closed at 1.0 so that a value of exactly 1.0 is counted.
Histograms are normalized to unit mass per channel.  The relative color
distribution of a frame pair is the concatenated per-channel difference
(reference minus source) — an order-sensitive signature of how color mass
moves between the two frames.

Inputs must already be in unit range; signed-range frames are rejected, not
silently rescaled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .data import Frame

DEFAULT_BINS = 5


@dataclass
class HistogramVector:
    """Flat per-channel histogram stack (R bins, then G, then B).

    kind "absolute": each channel block sums to 1 and is non-negative.
    kind "relative": a difference of two absolutes; each channel block sums
    to 0 with entries in [-1, 1].
    """

    values: np.ndarray
    kind: str = "absolute"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1 or self.values.size % 3 != 0 or self.values.size == 0:
            raise ValueError(f"expected a flat 3·bins vector, got shape {self.values.shape}")
        if self.kind not in ("absolute", "relative"):
            raise ValueError(f"unknown histogram kind {self.kind!r}")
        per_channel = self.values.reshape(3, -1)
        sums = per_channel.sum(axis=1)
        if self.kind == "absolute":
            if (per_channel < -1e-9).any():
                raise ValueError("absolute histogram has negative mass")
            if not np.allclose(sums, 1.0, atol=1e-6):
                raise ValueError(f"absolute histogram channel sums {sums} != 1")
        else:
            if not np.allclose(sums, 0.0, atol=1e-6):
                raise ValueError(f"relative histogram channel sums {sums} != 0")
            if (np.abs(self.values) > 1.0 + 1e-9).any():
                raise ValueError("relative histogram entries outside [-1, 1]")

    @property
    def bins(self) -> int:
        return self.values.size // 3


def _unit_pixels(frame: Frame) -> np.ndarray:
    if frame.range_tag != "unit":
        raise ValueError(
            f"histograms require unit-range frames, got range_tag={frame.range_tag!r}; "
            "convert explicitly with Frame.to_unit()"
        )
    return frame.pixels


def bin_edges(bins: int) -> np.ndarray:
    if bins < 2:
        raise ValueError(f"bins must be ≥ 2, got {bins}")
    return np.array([b / bins for b in range(bins + 1)], dtype=np.float64)


def channel_bin_counts(frame: Frame, bins: int = DEFAULT_BINS) -> np.ndarray:
    """Integer pixel counts per (bin, channel); shape (bins, 3).

    Bin b covers [b/bins, (b+1)/bins), last bin closed at 1.0.
    """
    pixels = _unit_pixels(frame)
    edges = bin_edges(bins)
    counts = np.empty((bins, 3), dtype=np.int64)
    for c in range(3):
        # searchsorted against the exact edge values keeps boundary pixels in
        # the half-open bin the definition assigns them to
        idx = np.searchsorted(edges, pixels[:, :, c].ravel(), side="right") - 1
        idx = np.minimum(idx, bins - 1)  # folds exact 1.0 into the closed last bin
        counts[:, c] = np.bincount(idx, minlength=bins)
    return counts


def channel_histogram(frame: Frame, bins: int = DEFAULT_BINS) -> np.ndarray:
    """Normalized per-channel histogram; shape (bins, 3), each column sums to 1."""
    counts = channel_bin_counts(frame, bins)
    total = frame.pixels.shape[0] * frame.pixels.shape[1]
    return counts.astype(np.float64) / total


def histogram_vector(frame: Frame, bins: int = DEFAULT_BINS) -> HistogramVector:
    """Flatten channel_histogram into (R bins, G bins, B bins) order."""
    hist = channel_histogram(frame, bins)
    return HistogramVector(hist.T.reshape(-1), kind="absolute")


def relative_color_distribution(
    source: Frame, reference: Frame, bins: int = DEFAULT_BINS
) -> HistogramVector:
    """Reference histogram minus source histogram, per channel, concatenated.

    With the default 5 bins this is the 15-element color-shift signature the
    pair critic regresses.  Antisymmetric in its arguments; zero when the two
    frames share a color distribution.
    """
    h_src = channel_histogram(source, bins)
    h_ref = channel_histogram(reference, bins)
    diff = h_ref - h_src
    return HistogramVector(diff.T.reshape(-1), kind="relative")


def soft_histogram_torch(
    pixels: torch.Tensor, bins: int = DEFAULT_BINS, temperature: float = 0.02
) -> torch.Tensor:
    """Differentiable histogram of unit-range values; shape (bins, channels).

    `pixels` is (..., channels).  Each value is assigned softmax weights over
    bin centers, −(v − center)² / temperature as logits, so every channel
    column sums to 1 exactly and the assignment sharpens to the hard
    histogram as temperature → 0.
    """
    if bins < 2:
        raise ValueError(f"bins must be ≥ 2, got {bins}")
    if temperature <= 0:
        raise ValueError(f"temperature must be > 0, got {temperature}")
    flat = pixels.reshape(-1, pixels.shape[-1])  # (N, C)
    centers = (torch.arange(bins, dtype=flat.dtype, device=flat.device) + 0.5) / bins
    logits = -((flat.unsqueeze(-1) - centers) ** 2) / temperature  # (N, C, bins)
    weights = torch.softmax(logits, dim=-1)
    return weights.sum(dim=0).transpose(0, 1) / flat.shape[0]  # (bins, C)


def soft_channel_histogram(
    frame: Frame, bins: int = DEFAULT_BINS, temperature: float = 0.02
) -> np.ndarray:
    """Soft histogram of a frame as a (bins, 3) array (no gradient retained)."""
    pixels = torch.from_numpy(_unit_pixels(frame))
    with torch.no_grad():
        hist = soft_histogram_torch(pixels, bins, temperature)
    return hist.numpy()


def rcd_to_tensor(rcd: HistogramVector, dtype=torch.float32) -> torch.Tensor:
    """Relative color distribution as a flat tensor regression target."""
    if rcd.kind != "relative":
        raise ValueError("expected a relative histogram vector")
    return torch.from_numpy(rcd.values).to(dtype)
