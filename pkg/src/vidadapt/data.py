"""Clip manifests, frame pairing, and synthetic domain-pair generation.

A dataset is a JSON manifest listing video clips; each clip is an ordered
list of 8-bit RGB image files plus a reference-frame index (default 0).
Clip boundaries always come from the manifest — there is no scene-change
detection here.

Manifest schema::

    {
      "root": ".",                       # relative to the manifest file
      "clips": [
        {"id": "clip01", "domain": "A",
         "frames": ["clip01/f000.png", "clip01/f001.png", ...],
         "reference_index": 0}
      ]
    }

Frames are kept internally in unit range [0, 1]; conversion to the signed
[-1, 1] network range happens at the network boundary.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from PIL import Image

RANGE_TAGS = ("unit", "signed")
DOMAINS = ("A", "B")


@dataclass
class Frame:
    """One video frame: an H×W×3 float array with a declared value range."""

    pixels: np.ndarray
    range_tag: str = "unit"

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float64)
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise ValueError(f"frame must be H×W×3, got shape {self.pixels.shape}")
        if self.range_tag not in RANGE_TAGS:
            raise ValueError(f"unknown range_tag {self.range_tag!r}")
        lo = 0.0 if self.range_tag == "unit" else -1.0
        lo_val, hi_val = float(self.pixels.min()), float(self.pixels.max())
        if lo_val < lo or hi_val > 1.0:
            raise ValueError(
                f"frame values [{lo_val:.4g}, {hi_val:.4g}] outside declared "
                f"{self.range_tag} range"
            )

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def to_unit(self) -> "Frame":
        if self.range_tag == "unit":
            return self
        return Frame((self.pixels + 1.0) / 2.0, "unit")

    def to_signed(self) -> "Frame":
        if self.range_tag == "signed":
            return self
        return Frame(self.pixels * 2.0 - 1.0, "signed")


@dataclass
class VideoClip:
    """Ordered frame sequence with a designated reference frame."""

    clip_id: str
    domain: str
    frames: list[Frame]
    reference_index: int = 0

    def __post_init__(self):
        if self.domain not in DOMAINS:
            raise ValueError(f"clip {self.clip_id!r}: domain must be A or B, got {self.domain!r}")
        if not self.frames:
            raise ValueError(f"clip {self.clip_id!r}: no frames")
        if not 0 <= self.reference_index < len(self.frames):
            raise ValueError(
                f"clip {self.clip_id!r}: reference_index {self.reference_index} "
                f"out of range for {len(self.frames)} frames"
            )
        shape = self.frames[0].pixels.shape
        tag = self.frames[0].range_tag
        for i, f in enumerate(self.frames):
            if f.pixels.shape != shape or f.range_tag != tag:
                raise ValueError(
                    f"clip {self.clip_id!r}: frame {i} shape/range differs from frame 0"
                )

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def reference(self) -> Frame:
        return self.frames[self.reference_index]


@dataclass
class FramePair:
    """(source, reference) frames from one clip — the generator's input unit.

    Pairs produced by :func:`iterate_pairs` always carry the clip's designated
    reference frame; pairs from :func:`sample_real_pair` carry an arbitrary
    second frame of the same clip in the reference slot.
    """

    source: Frame
    reference: Frame
    clip_id: str
    source_index: int
    reference_index: int = 0

    def __post_init__(self):
        if self.source_index == self.reference_index:
            raise ValueError(
                f"clip {self.clip_id!r}: source_index equals reference_index "
                f"({self.source_index})"
            )


@dataclass
class ClipEntry:
    clip_id: str
    domain: str
    frame_files: list[str]
    reference_index: int = 0


@dataclass
class DatasetManifest:
    """Validated listing of clips and their frame files."""

    root: Path
    clips: list[ClipEntry]

    def get(self, clip_id: str) -> ClipEntry:
        for entry in self.clips:
            if entry.clip_id == clip_id:
                return entry
        raise KeyError(f"clip {clip_id!r} not in manifest")

    def clip_ids(self) -> list[str]:
        return [c.clip_id for c in self.clips]

    def frame_count(self) -> int:
        return sum(len(c.frame_files) for c in self.clips)


def load_manifest(path: str | Path) -> DatasetManifest:
    """Parse and validate a manifest file.

    Every listed frame file must exist and parse as an image; clip ids must
    be unique.  Frame order is preserved exactly as listed.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"manifest not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"manifest {path}: invalid JSON ({exc})") from exc
    if not isinstance(raw, dict) or "clips" not in raw:
        raise ValueError(f"manifest {path}: expected object with a 'clips' list")

    root = Path(raw.get("root", "."))
    if not root.is_absolute():
        root = path.parent / root

    clips: list[ClipEntry] = []
    seen: set[str] = set()
    for i, item in enumerate(raw["clips"]):
        missing = {"id", "domain", "frames"} - set(item)
        if missing:
            raise ValueError(f"manifest {path}: clip #{i} missing keys {sorted(missing)}")
        clip_id = str(item["id"])
        if clip_id in seen:
            raise ValueError(f"manifest {path}: duplicate clip id {clip_id!r}")
        seen.add(clip_id)
        domain = item["domain"]
        if domain not in DOMAINS:
            raise ValueError(f"manifest {path}: clip {clip_id!r} has domain {domain!r}")
        files = [str(f) for f in item["frames"]]
        if not files:
            raise ValueError(f"manifest {path}: clip {clip_id!r} lists no frames")
        ref_idx = int(item.get("reference_index", 0))
        if not 0 <= ref_idx < len(files):
            raise ValueError(
                f"manifest {path}: clip {clip_id!r} reference_index {ref_idx} out of range"
            )
        for rel in files:
            frame_path = root / rel
            if not frame_path.is_file():
                raise FileNotFoundError(
                    f"manifest {path}: clip {clip_id!r} references missing frame {frame_path}"
                )
            try:
                with Image.open(frame_path) as img:
                    img.verify()
            except Exception as exc:
                raise ValueError(
                    f"manifest {path}: clip {clip_id!r} frame {frame_path} "
                    f"does not decode ({exc})"
                ) from exc
        clips.append(ClipEntry(clip_id, domain, files, ref_idx))
    return DatasetManifest(root=root, clips=clips)


def save_manifest(manifest: DatasetManifest, path: str | Path, root: str = ".") -> Path:
    """Write a manifest file; frame paths are stored as listed (relative to root)."""
    path = Path(path)
    payload = {
        "root": root,
        "clips": [
            {
                "id": c.clip_id,
                "domain": c.domain,
                "frames": c.frame_files,
                "reference_index": c.reference_index,
            }
            for c in manifest.clips
        ],
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2))
    return path


def load_clip(
    manifest: DatasetManifest,
    clip_id: str,
    size: int = 256,
    range_tag: str = "unit",
    divisor: int = 32,
) -> VideoClip:
    """Decode one clip, resizing frames to size×size (bilinear).

    `size` must be at least 8 and divisible by `divisor`, the total
    downsampling factor of the networks the frames will feed.
    """
    if size < 8 or size % divisor != 0:
        raise ValueError(f"size {size} must be ≥ 8 and divisible by {divisor}")
    if range_tag not in RANGE_TAGS:
        raise ValueError(f"unknown range_tag {range_tag!r}")
    entry = manifest.get(clip_id)
    frames: list[Frame] = []
    for rel in entry.frame_files:
        frame_path = manifest.root / rel
        try:
            with Image.open(frame_path) as img:
                img = img.convert("RGB").resize((size, size), Image.BILINEAR)
                arr = np.asarray(img, dtype=np.float64) / 255.0
        except (OSError, SyntaxError) as exc:
            raise ValueError(f"clip {clip_id!r}: cannot decode {frame_path} ({exc})") from exc
        if range_tag == "signed":
            arr = arr * 2.0 - 1.0
        frames.append(Frame(arr, range_tag))
    return VideoClip(entry.clip_id, entry.domain, frames, entry.reference_index)


def save_frame(frame: Frame, path: str | Path) -> Path:
    """Write a frame as an 8-bit PNG (unit-range values rounded to 0..255)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arr = frame.to_unit().pixels
    data = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(data, mode="RGB").save(path)
    return path


def iterate_pairs(clip: VideoClip, shuffle_seed: int | None = None) -> list[FramePair]:
    """All (source, reference) pairs of a clip: each non-reference frame once.

    Yields len(frames) − 1 pairs, every one anchored on the clip's reference
    frame.  Order is the clip order, or a deterministic permutation when
    `shuffle_seed` is given.
    """
    if len(clip) < 2:
        raise ValueError(f"clip {clip.clip_id!r}: need ≥ 2 frames to form pairs")
    indices = [i for i in range(len(clip)) if i != clip.reference_index]
    if shuffle_seed is not None:
        rng = np.random.default_rng(shuffle_seed)
        indices = [indices[k] for k in rng.permutation(len(indices))]
    ref = clip.reference
    return [
        FramePair(
            source=clip.frames[i],
            reference=ref,
            clip_id=clip.clip_id,
            source_index=i,
            reference_index=clip.reference_index,
        )
        for i in indices
    ]


def sample_real_pair(clip: VideoClip, rng_seed: int) -> FramePair:
    """Draw two distinct frames of one clip (real input for the pair critic)."""
    if len(clip) < 2:
        raise ValueError(f"clip {clip.clip_id!r}: need ≥ 2 frames to sample a pair")
    rng = np.random.default_rng(rng_seed)
    i, j = rng.choice(len(clip), size=2, replace=False)
    return FramePair(
        source=clip.frames[i],
        reference=clip.frames[j],
        clip_id=clip.clip_id,
        source_index=int(i),
        reference_index=int(j),
    )


# ---------------------------------------------------------------------------
# Synthetic domain pairs with a known ground-truth color transform
# ---------------------------------------------------------------------------

GAIN_RANGE = (0.25, 4.0)
BIAS_RANGE = (-0.5, 0.5)
GAMMA_RANGE = (0.25, 4.0)


@dataclass
class ColorTransformSpec:
    """Per-channel gain/bias plus a shared gamma; output is clamped to [0, 1].

    Applied as ``clip(gain * x**gamma + bias, 0, 1)`` per channel.
    """

    gain: tuple[float, float, float] = (1.0, 1.0, 1.0)
    bias: tuple[float, float, float] = (0.0, 0.0, 0.0)
    gamma: float = 1.0

    def __post_init__(self):
        self.gain = tuple(float(g) for g in self.gain)
        self.bias = tuple(float(b) for b in self.bias)
        self.gamma = float(self.gamma)
        if len(self.gain) != 3 or len(self.bias) != 3:
            raise ValueError("gain and bias must have 3 entries")
        for g in self.gain:
            if not GAIN_RANGE[0] <= g <= GAIN_RANGE[1]:
                raise ValueError(f"gain {g} outside safe range {GAIN_RANGE}")
        for b in self.bias:
            if not BIAS_RANGE[0] <= b <= BIAS_RANGE[1]:
                raise ValueError(f"bias {b} outside safe range {BIAS_RANGE}")
        if not GAMMA_RANGE[0] <= self.gamma <= GAMMA_RANGE[1]:
            raise ValueError(f"gamma {self.gamma} outside safe range {GAMMA_RANGE}")

    def apply(self, pixels: np.ndarray) -> np.ndarray:
        gain = np.asarray(self.gain, dtype=np.float64)
        bias = np.asarray(self.bias, dtype=np.float64)
        out = gain * np.power(pixels, self.gamma) + bias
        return np.clip(out, 0.0, 1.0)

    def to_dict(self) -> dict:
        return {"gain": list(self.gain), "bias": list(self.bias), "gamma": self.gamma}

    @classmethod
    def from_dict(cls, d: dict) -> "ColorTransformSpec":
        return cls(gain=tuple(d["gain"]), bias=tuple(d["bias"]), gamma=d["gamma"])


def apply_transform_to_clip(clip: VideoClip, transform: ColorTransformSpec) -> VideoClip:
    """Apply the color transform identically to every frame of a clip."""
    frames = [Frame(transform.apply(f.to_unit().pixels), "unit") for f in clip.frames]
    return VideoClip(clip.clip_id, clip.domain, frames, clip.reference_index)


def synthesize_domain_pair(
    base_clips: Sequence[VideoClip],
    transform: ColorTransformSpec,
    rng_seed: int,
) -> tuple[list[VideoClip], list[VideoClip]]:
    """Split base clips into two disjoint domains; domain B gets the transform.

    The split is a seeded permutation: the first half keeps its original
    pixels (domain A), the second half is color-transformed identically on
    every frame (domain B).  Deterministic given rng_seed and transform.
    """
    if not base_clips:
        raise ValueError("need at least one base clip")
    if len(base_clips) < 2:
        raise ValueError("need ≥ 2 base clips to form disjoint domains")
    rng = np.random.default_rng(rng_seed)
    perm = rng.permutation(len(base_clips))
    half = len(base_clips) // 2
    domain_a: list[VideoClip] = []
    domain_b: list[VideoClip] = []
    for k, idx in enumerate(perm):
        clip = base_clips[idx]
        if k < half:
            domain_a.append(VideoClip(clip.clip_id, "A", clip.frames, clip.reference_index))
        else:
            transformed = apply_transform_to_clip(clip, transform)
            domain_b.append(VideoClip(clip.clip_id, "B", transformed.frames, clip.reference_index))
    return domain_a, domain_b


def make_moving_shape_clip(
    clip_id: str,
    num_frames: int = 8,
    size: int = 64,
    rng_seed: int = 0,
    domain: str = "A",
) -> VideoClip:
    """Procedural toy video: an oscillating disc and square over a color gradient.

    Shapes swing partially past the frame edge, so their visible area — and
    with it each frame's mean color — genuinely varies over the clip.
    """
    rng = np.random.default_rng(rng_seed)
    base_color = rng.uniform(0.2, 0.7, size=3)
    grad_color = rng.uniform(0.1, 0.8, size=3)
    disc_color = rng.uniform(0.0, 1.0, size=3)
    square_color = rng.uniform(0.0, 1.0, size=3)
    disc_base = rng.uniform(0.1, 0.9, size=2) * size
    square_base = rng.uniform(0.1, 0.9, size=2) * size
    disc_amp = rng.uniform(0.15, 0.35, size=2) * size
    square_amp = rng.uniform(0.15, 0.35, size=2) * size
    disc_phase = rng.uniform(0, 2 * np.pi, size=2)
    square_phase = rng.uniform(0, 2 * np.pi, size=2)
    disc_freq = rng.uniform(0.4, 0.9, size=2)
    square_freq = rng.uniform(0.4, 0.9, size=2)
    disc_r = rng.uniform(0.15, 0.25) * size
    square_r = rng.uniform(0.12, 0.20) * size

    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    ramp = (yy / max(size - 1, 1))[..., None]
    background = np.clip(base_color * (1 - ramp) + grad_color * ramp, 0.0, 1.0)

    frames: list[Frame] = []
    for t in range(num_frames):
        img = background.copy()
        dy, dx = disc_base + disc_amp * np.sin(disc_freq * t + disc_phase)
        disc_mask = (yy - dy) ** 2 + (xx - dx) ** 2 <= disc_r**2
        img[disc_mask] = disc_color
        sy, sx = square_base + square_amp * np.sin(square_freq * t + square_phase)
        square_mask = (np.abs(yy - sy) <= square_r) & (np.abs(xx - sx) <= square_r)
        img[square_mask] = square_color
        frames.append(Frame(np.clip(img, 0.0, 1.0), "unit"))
    return VideoClip(clip_id, domain, frames, reference_index=0)


def write_clip_frames(clip: VideoClip, directory: str | Path) -> list[str]:
    """Save a clip's frames as PNGs under directory/<clip_id>/; returns relative paths."""
    directory = Path(directory)
    rel_paths = []
    for i, frame in enumerate(clip.frames):
        rel = f"{clip.clip_id}/frame_{i:03d}.png"
        save_frame(frame, directory / rel)
        rel_paths.append(rel)
    return rel_paths


def write_synthetic_dataset(
    out_dir: str | Path,
    num_clips_per_domain: int = 4,
    frames_per_clip: int = 8,
    size: int = 64,
    transform: ColorTransformSpec | None = None,
    rng_seed: int = 0,
    num_holdout: int = 2,
) -> dict[str, Path]:
    """Emit a paired-domain toy dataset: manifests, frames, and transform sidecar.

    Domain A and B clips come from disjoint procedurally generated base clips
    (B transformed by `transform`).  Holdout clips are extra domain-A clips
    reserved for evaluation against their known transformed counterparts.
    """
    out_dir = Path(out_dir)
    if transform is None:
        transform = ColorTransformSpec(gain=(1.3, 1.0, 0.75), gamma=1.2)
    n_base = 2 * num_clips_per_domain
    base = [
        make_moving_shape_clip(f"clip{660 + k:03d}", frames_per_clip, size, rng_seed + k)
        for k in range(n_base)
    ]
    domain_a, domain_b = synthesize_domain_pair(base, transform, rng_seed)
    holdout = [
        make_moving_shape_clip(f"holdout{k:02d}", frames_per_clip, size, rng_seed + 10_000 + k)
        for k in range(num_holdout)
    ]

    paths: dict[str, Path] = {}
    for name, clips in (("a", domain_a), ("b", domain_b), ("holdout", holdout)):
        frame_dir = out_dir / name
        entries = [
            ClipEntry(c.clip_id, c.domain, write_clip_frames(c, frame_dir), c.reference_index)
            for c in clips
        ]
        manifest = DatasetManifest(root=frame_dir, clips=entries)
        paths[name] = save_manifest(manifest, out_dir / f"manifest_{name}.json", root=name)

    sidecar = out_dir / "transform.json"
    sidecar.write_text(json.dumps(transform.to_dict(), indent=2))
    paths["transform"] = sidecar
    return paths
