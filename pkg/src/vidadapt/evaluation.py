"""Translation quality metrics and the evaluation report writer.

Conventions, fixed here and echoed in every report:

  intra_video_color_std   population standard deviation (ddof 0) of the
                          per-frame channel means, one value per channel;
                          lower means steadier color across a clip
  content_preservation    mean structural similarity between original and
                          translated frames on the luminance plane
                          (0.299 R + 0.587 G + 0.114 B), uniform 8×8 window,
                          C1 = 0.01², C2 = 0.03², dynamic range 1, clipped
                          to [0, 1]
  color_target_error      mean absolute difference between 3·bins-vector
                          histograms of translated and ground-truth frames,
                          averaged over frames
  hist_rcd_preservation   mean absolute difference between each pair's
                          color-shift signature before and after translation
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy.ndimage import uniform_filter

from .data import (
    ColorTransformSpec,
    DatasetManifest,
    Frame,
    VideoClip,
    apply_transform_to_clip,
    load_clip,
    load_manifest,
)
from .histogram import histogram_vector, relative_color_distribution
from .networks import ModelBundle
from .trainer import translate_clip

LUMA = np.array([0.299, 0.587, 0.114])
SSIM_WINDOW = 8
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2


def intra_video_consistency(clip: VideoClip) -> np.ndarray:
    """Per-channel population std of frame-mean color; shape (3,)."""
    if len(clip) < 2:
        raise ValueError(f"clip {clip.clip_id!r}: consistency needs ≥ 2 frames")
    means = np.stack([f.to_unit().pixels.mean(axis=(0, 1)) for f in clip.frames])
    return means.std(axis=0, ddof=0)


def _ssim_luminance(a: np.ndarray, b: np.ndarray) -> float:
    win = SSIM_WINDOW
    mu_a = uniform_filter(a, win)
    mu_b = uniform_filter(b, win)
    var_a = uniform_filter(a * a, win) - mu_a**2
    var_b = uniform_filter(b * b, win) - mu_b**2
    cov = uniform_filter(a * b, win) - mu_a * mu_b
    num = (2 * mu_a * mu_b + SSIM_C1) * (2 * cov + SSIM_C2)
    den = (mu_a**2 + mu_b**2 + SSIM_C1) * (var_a + var_b + SSIM_C2)
    ssim_map = num / den
    pad = win // 2
    interior = ssim_map[pad:-pad, pad:-pad] if min(ssim_map.shape) > 2 * pad else ssim_map
    return float(interior.mean())


def content_preservation(original: VideoClip, translated: VideoClip) -> float:
    """Mean luminance SSIM across matching frames, clipped to [0, 1]."""
    if len(original) != len(translated):
        raise ValueError(
            f"clip lengths differ: {len(original)} vs {len(translated)}"
        )
    scores = []
    for fo, ft in zip(original.frames, translated.frames):
        a = fo.to_unit().pixels @ LUMA
        b = ft.to_unit().pixels @ LUMA
        if a.shape != b.shape:
            raise ValueError("frame sizes differ between clips")
        scores.append(_ssim_luminance(a, b))
    return float(np.clip(np.mean(scores), 0.0, 1.0))


def color_transfer_error(translated: VideoClip, target: VideoClip, bins: int = 5) -> float:
    """How far translated frame colors are from the known-correct frames."""
    if len(translated) != len(target):
        raise ValueError(f"clip lengths differ: {len(translated)} vs {len(target)}")
    errors = [
        np.abs(histogram_vector(ft, bins).values - histogram_vector(fg, bins).values).mean()
        for ft, fg in zip(translated.frames, target.frames)
    ]
    return float(np.mean(errors))


def hist_rcd_preservation(original: VideoClip, translated: VideoClip, bins: int = 5) -> float:
    """Mean absolute drift of the per-pair color-shift signature under translation."""
    if len(original) != len(translated):
        raise ValueError(f"clip lengths differ: {len(original)} vs {len(translated)}")
    if original.reference_index != translated.reference_index:
        raise ValueError("clips disagree on the reference frame")
    drifts = []
    for i in range(len(original)):
        if i == original.reference_index:
            continue
        rcd_orig = relative_color_distribution(original.frames[i], original.reference, bins)
        rcd_trans = relative_color_distribution(translated.frames[i], translated.reference, bins)
        drifts.append(np.abs(rcd_orig.values - rcd_trans.values).mean())
    if not drifts:
        raise ValueError("clip has no non-reference frames")
    return float(np.mean(drifts))


@dataclass
class ClipMetrics:
    clip_id: str
    intra_video_color_std: tuple[float, float, float]
    source_intra_video_color_std: tuple[float, float, float]
    content_preservation: float
    hist_rcd_preservation: float
    color_target_error: float | None = None
    baseline_color_error: float | None = None

    def to_dict(self) -> dict:
        return {
            "clip_id": self.clip_id,
            "intra_video_color_std": list(self.intra_video_color_std),
            "source_intra_video_color_std": list(self.source_intra_video_color_std),
            "content_preservation": self.content_preservation,
            "hist_rcd_preservation": self.hist_rcd_preservation,
            "color_target_error": self.color_target_error,
            "baseline_color_error": self.baseline_color_error,
        }


def evaluate_clip(
    original: VideoClip,
    translated: VideoClip,
    target: VideoClip | None = None,
    bins: int = 5,
) -> ClipMetrics:
    """All metrics for one translated clip; target metrics only when known."""
    return ClipMetrics(
        clip_id=original.clip_id,
        intra_video_color_std=tuple(intra_video_consistency(translated)),
        source_intra_video_color_std=tuple(intra_video_consistency(original)),
        content_preservation=content_preservation(original, translated),
        hist_rcd_preservation=hist_rcd_preservation(original, translated, bins),
        color_target_error=(
            color_transfer_error(translated, target, bins) if target is not None else None
        ),
        baseline_color_error=(
            color_transfer_error(original, target, bins) if target is not None else None
        ),
    )


def _frame_grid(rows: list[VideoClip], path: Path, max_frames: int = 8) -> None:
    """Side-by-side PNG: one row per clip version, one column per frame."""
    n = min(len(rows[0]), max_frames)
    h = rows[0].frames[0].height
    w = rows[0].frames[0].width
    canvas = Image.new("RGB", (n * w, len(rows) * h))
    for r, clip in enumerate(rows):
        for c in range(n):
            arr = np.clip(np.rint(clip.frames[c].to_unit().pixels * 255.0), 0, 255)
            canvas.paste(Image.fromarray(arr.astype(np.uint8)), (c * w, r * h))
    path.parent.mkdir(parents=True, exist_ok=True)
    canvas.save(path)


def _aggregate(values: list) -> dict:
    arr = np.asarray(values, dtype=np.float64)
    return {"mean": arr.mean(axis=0).tolist(), "std": arr.std(axis=0, ddof=0).tolist()}


def evaluate_run(
    bundle: ModelBundle,
    manifest,
    direction: str = "ab",
    output_dir: str | Path = "eval",
    transform: ColorTransformSpec | None = None,
    write_grids: bool = True,
) -> Path:
    """Translate every clip of a manifest and write report.json plus grids.

    When `transform` is given (synthetic data with a known answer), each
    clip's ground truth is the transform applied to the original, and the
    color_target_error / baseline columns are filled in.
    """
    if not isinstance(manifest, DatasetManifest):
        manifest = load_manifest(manifest)
    if not manifest.clips:
        raise ValueError("manifest lists no clips")
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)

    size = bundle.config.frame_size
    divisor = 2**bundle.config.downsample_stages
    bins = bundle.config.histogram_bins
    per_clip: list[ClipMetrics] = []
    for clip_id in manifest.clip_ids():
        original = load_clip(manifest, clip_id, size=size, divisor=divisor)
        translated = translate_clip(bundle, original, direction)
        target = apply_transform_to_clip(original, transform) if transform else None
        per_clip.append(evaluate_clip(original, translated, target, bins))
        if write_grids:
            rows = [original, translated] + ([target] if target else [])
            _frame_grid(rows, out / "grids" / f"{clip_id}_grid.png")

    aggregate = {
        "intra_video_color_std": _aggregate([m.intra_video_color_std for m in per_clip]),
        "source_intra_video_color_std": _aggregate(
            [m.source_intra_video_color_std for m in per_clip]
        ),
        "content_preservation": _aggregate([m.content_preservation for m in per_clip]),
        "hist_rcd_preservation": _aggregate([m.hist_rcd_preservation for m in per_clip]),
    }
    if transform is not None:
        aggregate["color_target_error"] = _aggregate([m.color_target_error for m in per_clip])
        aggregate["baseline_color_error"] = _aggregate(
            [m.baseline_color_error for m in per_clip]
        )

    report = {
        "direction": direction,
        "frame_size": size,
        "clip_count": len(per_clip),
        "conventions": {
            "intra_video_color_std": "population std (ddof 0) of per-frame channel means",
            "content_preservation": (
                "mean SSIM on luminance 0.299R+0.587G+0.114B, uniform 8×8 window, "
                "C1=0.01^2, C2=0.03^2, range 1, clipped to [0, 1]"
            ),
            "color_target_error": f"mean abs difference of {3 * bins}-bin histogram vectors",
            "hist_rcd_preservation": "mean abs drift of pair color-shift signatures",
        },
        "transform": transform.to_dict() if transform else None,
        "clips": [m.to_dict() for m in per_clip],
        "aggregate": aggregate,
    }
    report_path = out / "report.json"
    report_path.write_text(json.dumps(report, indent=2))
    return report_path
