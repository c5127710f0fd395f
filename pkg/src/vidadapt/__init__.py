"""Unpaired video-to-video domain adaptation with reference-anchored pairs.

Clips are translated between two visual domains without paired supervision.
Every frame travels together with its clip's reference frame through a
dual-stream generator whose bottlenecks are fused, and two color critics
keep translated clips chromatically steady: one regresses the pair's
relative color distribution, the other scores whether a pair plausibly
comes from a single real clip.
"""

from .data import (
    ColorTransformSpec,
    DatasetManifest,
    Frame,
    FramePair,
    VideoClip,
    iterate_pairs,
    load_clip,
    load_manifest,
    sample_real_pair,
    synthesize_domain_pair,
    write_synthetic_dataset,
)
from .histogram import (
    HistogramVector,
    channel_histogram,
    histogram_vector,
    relative_color_distribution,
    soft_channel_histogram,
)
from .losses import LossReport, LossWeights, total_objective

__version__ = "0.1.0"

__all__ = [
    "ColorTransformSpec",
    "DatasetManifest",
    "Frame",
    "FramePair",
    "HistogramVector",
    "LossReport",
    "LossWeights",
    "VideoClip",
    "channel_histogram",
    "histogram_vector",
    "iterate_pairs",
    "load_clip",
    "load_manifest",
    "relative_color_distribution",
    "sample_real_pair",
    "soft_channel_histogram",
    "synthesize_domain_pair",
    "total_objective",
    "write_synthetic_dataset",
    "__version__",
]
