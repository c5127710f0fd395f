"""Two-phase alternating training loop and clip translation.

Every optimization step runs exactly two phases:

  phase G    both generators update on the weighted sum of adversarial,
             cycle, identity, color-shift, and same-clip terms, with all
             critics frozen
  phase D/C  each pixel critic and each pair critic updates on its own
             least-squares / regression loss against detached fakes

Data order is stateless: pair schedules are keyed on (seed, epoch, domain)
and real-pair draws on (seed, step, domain), so a resumed run consumes the
identical stream and reproduces the original loss trajectory.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from itertools import chain
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from . import __version__
from .data import (
    DatasetManifest,
    Frame,
    FramePair,
    VideoClip,
    iterate_pairs,
    load_clip,
    load_manifest,
    sample_real_pair,
)
from .histogram import relative_color_distribution, rcd_to_tensor
from .losses import (
    LossReport,
    LossWeights,
    adversarial_d,
    adversarial_g,
    cycle_loss,
    hist_loss,
    identity_loss,
    intra_video_c,
    intra_video_g,
    total_objective,
)
from .networks import (
    GeneratorConfig,
    ModelBundle,
    batch_to_frames,
    build_models,
    frames_to_batch,
    load_checkpoint,
    save_checkpoint,
)

_DOMAIN_CODE = {"A": 0, "B": 1}


@dataclass
class TrainConfig:
    """Flat run configuration: optimizer, schedule, weights, and geometry."""

    learning_rate: float = 2e-4
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    batch_size: int = 1
    epochs: int = 200
    seed: int = 0
    weights: LossWeights = field(default_factory=LossWeights)
    fusion_mode: str = "dense_fusion"
    checkpoint_interval: int = 50
    lr_decay: bool = False
    frame_size: int = 256
    base_channels: int = 64
    bottleneck_channels: int = 512
    downsample_stages: int = 5
    residual_blocks_per_stage: int = 1
    disc_channels: int = 64
    disc_downsample_stages: int | None = None
    disc_norm: bool = True
    validator_channels: int = 64
    histogram_bins: int = 5

    def __post_init__(self):
        if self.learning_rate <= 0 or not math.isfinite(self.learning_rate):
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        for name in ("adam_beta1", "adam_beta2"):
            b = getattr(self, name)
            if not 0.0 <= b < 1.0:
                raise ValueError(f"{name} must be in [0, 1), got {b}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be ≥ 1")
        if self.epochs < 1:
            raise ValueError("epochs must be ≥ 1")
        if self.checkpoint_interval < 1:
            raise ValueError("checkpoint_interval must be ≥ 1")
        self.generator_config()  # geometry errors surface at config time

    def generator_config(self) -> GeneratorConfig:
        return GeneratorConfig(
            frame_size=self.frame_size,
            base_channels=self.base_channels,
            bottleneck_channels=self.bottleneck_channels,
            downsample_stages=self.downsample_stages,
            residual_blocks_per_stage=self.residual_blocks_per_stage,
            fusion_mode=self.fusion_mode,
            disc_channels=self.disc_channels,
            disc_downsample_stages=self.disc_downsample_stages,
            disc_norm=self.disc_norm,
            validator_channels=self.validator_channels,
            histogram_bins=self.histogram_bins,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "TrainConfig":
        raw = dict(raw)
        if isinstance(raw.get("weights"), dict):
            try:
                raw["weights"] = LossWeights(**raw["weights"])
            except TypeError as exc:
                known = set(LossWeights.__dataclass_fields__)
                unknown = sorted(set(raw["weights"]) - known)
                raise ValueError(f"unknown weight keys: {unknown}") from exc
        try:
            return cls(**raw)
        except TypeError as exc:
            known = set(cls.__dataclass_fields__)
            unknown = sorted(set(raw) - known)
            if unknown:
                raise ValueError(f"unknown config keys: {unknown}") from exc
            raise


def create_optimizers(bundle: ModelBundle, config: TrainConfig) -> dict[str, torch.optim.Adam]:
    betas = (config.adam_beta1, config.adam_beta2)
    lr = config.learning_rate
    gen_params = chain(bundle.gen_ab.parameters(), bundle.gen_ba.parameters())
    return {
        "gen": torch.optim.Adam(gen_params, lr=lr, betas=betas),
        "disc_a": torch.optim.Adam(bundle.disc_a.parameters(), lr=lr, betas=betas),
        "disc_b": torch.optim.Adam(bundle.disc_b.parameters(), lr=lr, betas=betas),
        "val_a": torch.optim.Adam(bundle.val_a.parameters(), lr=lr, betas=betas),
        "val_b": torch.optim.Adam(bundle.val_b.parameters(), lr=lr, betas=betas),
    }


def ensure_optimizers(bundle: ModelBundle, config: TrainConfig) -> None:
    if not bundle.optimizers:
        bundle.optimizers = create_optimizers(bundle, config)
        if bundle.pending_optimizer_state:
            for name, opt in bundle.optimizers.items():
                state = bundle.pending_optimizer_state.get(name)
                if state is not None:
                    opt.load_state_dict(state)
            bundle.pending_optimizer_state = None


@dataclass
class StepBatch:
    """Tensors for one optimization step (signed range, float32)."""

    src_a: torch.Tensor
    ref_a: torch.Tensor
    src_b: torch.Tensor
    ref_b: torch.Tensor
    rcd_a: torch.Tensor  # color-shift targets of the original A pairs, (B, 3·bins)
    rcd_b: torch.Tensor
    real_a: tuple[torch.Tensor, torch.Tensor]
    real_b: tuple[torch.Tensor, torch.Tensor]
    real_rcd_a: torch.Tensor
    real_rcd_b: torch.Tensor


def _as_pairs(pairs) -> list[FramePair]:
    if isinstance(pairs, FramePair):
        return [pairs]
    pairs = list(pairs)
    if not pairs:
        raise ValueError("empty pair batch")
    return pairs


def _stack_pairs(pairs: list[FramePair], bins: int):
    src = frames_to_batch([p.source for p in pairs])
    ref = frames_to_batch([p.reference for p in pairs])
    rcd = torch.stack(
        [rcd_to_tensor(relative_color_distribution(p.source, p.reference, bins)) for p in pairs]
    )
    return src, ref, rcd


def prepare_step(pairs_a, pairs_b, real_pairs_a, real_pairs_b, bins: int = 5) -> StepBatch:
    src_a, ref_a, rcd_a = _stack_pairs(_as_pairs(pairs_a), bins)
    src_b, ref_b, rcd_b = _stack_pairs(_as_pairs(pairs_b), bins)
    ra0, ra1, real_rcd_a = _stack_pairs(_as_pairs(real_pairs_a), bins)
    rb0, rb1, real_rcd_b = _stack_pairs(_as_pairs(real_pairs_b), bins)
    return StepBatch(
        src_a=src_a, ref_a=ref_a, src_b=src_b, ref_b=ref_b,
        rcd_a=rcd_a, rcd_b=rcd_b,
        real_a=(ra0, ra1), real_b=(rb0, rb1),
        real_rcd_a=real_rcd_a, real_rcd_b=real_rcd_b,
    )


def _set_requires_grad(nets, flag: bool) -> None:
    for net in nets:
        for p in net.parameters():
            p.requires_grad_(flag)


def generator_phase(bundle: ModelBundle, batch: StepBatch, config: TrainConfig):
    """Update both generators; critics are frozen and only consulted.

    Returns the eight scalar terms and the detached fakes for the critic
    phase.
    """
    critics = [bundle.disc_a, bundle.disc_b, bundle.val_a, bundle.val_b]
    _set_requires_grad(critics, False)
    opt = bundle.optimizers["gen"]
    opt.zero_grad(set_to_none=True)

    fake_b = bundle.gen_ab(batch.src_a, batch.ref_a)
    fake_a = bundle.gen_ba(batch.src_b, batch.ref_b)
    rec_a = bundle.gen_ba(*fake_b)
    rec_b = bundle.gen_ab(*fake_a)
    idt_b = bundle.gen_ab(batch.src_b, batch.ref_b)
    idt_a = bundle.gen_ba(batch.src_a, batch.ref_a)

    hist_pred_b, iv_pred_b = bundle.val_b(*fake_b)
    hist_pred_a, iv_pred_a = bundle.val_a(*fake_a)

    terms = {
        "adv_ab": adversarial_g(bundle.disc_b(torch.cat(fake_b))),
        "adv_ba": adversarial_g(bundle.disc_a(torch.cat(fake_a))),
        # both reconstruction directions count fully, mirroring the paired
        # adversarial terms
        "cyc": (
            cycle_loss((batch.src_a, batch.ref_a), rec_a)
            + cycle_loss((batch.src_b, batch.ref_b), rec_b)
        ),
        "idt": (
            identity_loss(idt_b, (batch.src_b, batch.ref_b))
            + identity_loss(idt_a, (batch.src_a, batch.ref_a))
        ),
        "hist_ab": hist_loss(hist_pred_b, batch.rcd_a),
        "hist_ba": hist_loss(hist_pred_a, batch.rcd_b),
        "iv_ab": intra_video_g(iv_pred_b),
        "iv_ba": intra_video_g(iv_pred_a),
    }
    w = config.weights
    total = sum(w.for_term(k) * v for k, v in terms.items())
    total.backward()
    opt.step()
    _set_requires_grad(critics, True)

    fakes = {
        "fake_a": tuple(t.detach() for t in fake_a),
        "fake_b": tuple(t.detach() for t in fake_b),
    }
    return {k: float(v.detach()) for k, v in terms.items()}, fakes


def critic_phase(bundle: ModelBundle, batch: StepBatch, fakes: dict, config: TrainConfig):
    """Update the two pixel critics and two pair critics on detached fakes."""
    w = config.weights
    raw: dict[str, float] = {}

    for name, disc, real_frames, fake in (
        ("disc_a", bundle.disc_a, (batch.src_a, batch.ref_a), fakes["fake_a"]),
        ("disc_b", bundle.disc_b, (batch.src_b, batch.ref_b), fakes["fake_b"]),
    ):
        opt = bundle.optimizers[name]
        opt.zero_grad(set_to_none=True)
        term = adversarial_d(disc(torch.cat(real_frames)), disc(torch.cat(fake)))
        (w.w_adv * term).backward()
        opt.step()
        raw[name] = float(term.detach())

    for name, val, real, real_rcd, fake, fake_rcd in (
        ("val_a", bundle.val_a, batch.real_a, batch.real_rcd_a, fakes["fake_a"], batch.rcd_b),
        ("val_b", bundle.val_b, batch.real_b, batch.real_rcd_b, fakes["fake_b"], batch.rcd_a),
    ):
        opt = bundle.optimizers[name]
        opt.zero_grad(set_to_none=True)
        hist_fake, iv_fake = val(*fake)
        hist_real, iv_real = val(*real)
        iv_term = intra_video_c(iv_real, iv_fake)
        # the hist head regresses the intended shift on fakes and the true,
        # directly computable shift on real same-clip pairs
        hist_term = hist_loss(hist_fake, fake_rcd) + hist_loss(hist_real, real_rcd)
        (w.w_iv * iv_term + w.w_hist * hist_term).backward()
        opt.step()
        raw[f"{name}_iv"] = float(iv_term.detach())
        raw[f"{name}_hist"] = float(hist_term.detach())
    return raw


def train_step(
    bundle: ModelBundle,
    pair_a,
    pair_b,
    real_pair_a,
    real_pair_b,
    config: TrainConfig,
) -> tuple[ModelBundle, LossReport]:
    """One full optimization step: phase G then phase D/C; raises on NaN/Inf."""
    ensure_optimizers(bundle, config)
    batch = prepare_step(pair_a, pair_b, real_pair_a, real_pair_b, config.histogram_bins)
    terms, fakes = generator_phase(bundle, batch, config)
    critic_terms = critic_phase(bundle, batch, fakes, config)
    report = LossReport(terms, total_objective(terms, config.weights), critic_terms)
    report.check_finite()
    bundle.step += 1
    return bundle, report


def _epoch_order(seed: int, epoch: int, domain: str, n: int) -> np.ndarray:
    rng = np.random.default_rng([seed, epoch, _DOMAIN_CODE[domain]])
    return rng.permutation(n)


def _real_pair(clips: list[VideoClip], seed: int, step: int, domain: str) -> FramePair:
    rng = np.random.default_rng([seed, step, _DOMAIN_CODE[domain], 7])
    clip = clips[int(rng.integers(len(clips)))]
    return sample_real_pair(clip, int(rng.integers(2**31)))


def _load_domain(manifest, config: TrainConfig, expect: str):
    if not isinstance(manifest, DatasetManifest):
        manifest = load_manifest(manifest)
    divisor = 2**config.downsample_stages
    clips = [
        load_clip(manifest, cid, size=config.frame_size, divisor=divisor)
        for cid in manifest.clip_ids()
    ]
    clips = [c for c in clips if c.domain == expect]
    if not clips:
        raise ValueError(f"manifest holds no domain-{expect} clips")
    pool = [p for c in clips for p in iterate_pairs(c)]
    return clips, pool


def _set_lr(optimizers, lr: float) -> None:
    for opt in optimizers.values():
        for group in opt.param_groups:
            group["lr"] = lr


def train(
    manifest_a,
    manifest_b,
    config: TrainConfig,
    output_dir: str | Path,
    resume_from: str | Path | None = None,
    max_steps: int | None = None,
    quiet: bool = False,
) -> ModelBundle:
    """Run (or resume) a full training job; returns the final bundle.

    Writes `run_config.json`, an append-only `training_log.jsonl` with one
    JSON object per step, epoch checkpoints every `checkpoint_interval`
    epochs, and `checkpoint_final.pt`.  `max_steps` caps the global step
    count (useful for smoke runs); epochs remain the primary schedule.
    """
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)

    clips_a, pool_a = _load_domain(manifest_a, config, "A")
    clips_b, pool_b = _load_domain(manifest_b, config, "B")
    steps_per_epoch = math.ceil(max(len(pool_a), len(pool_b)) / config.batch_size)

    if resume_from is not None:
        bundle = load_checkpoint(resume_from)
        if asdict(bundle.config) != asdict(config.generator_config()):
            raise ValueError(
                "checkpoint geometry does not match the requested configuration"
            )
    else:
        bundle = build_models(config.generator_config(), seed=config.seed)
    bundle.train_config = config.to_dict()
    ensure_optimizers(bundle, config)

    total_steps = config.epochs * steps_per_epoch
    if max_steps is not None:
        total_steps = min(total_steps, max_steps)

    (out / "run_config.json").write_text(
        json.dumps(
            {
                "package_version": __version__,
                "torch_version": torch.__version__,
                "numpy_version": np.__version__,
                "config": config.to_dict(),
                "steps_per_epoch": steps_per_epoch,
                "total_steps": total_steps,
                "resumed_from": str(resume_from) if resume_from else None,
                "resumed_at_step": bundle.step,
            },
            indent=2,
        )
    )

    log_path = out / "training_log.jsonl"
    cached_epoch = -1
    order_a = order_b = None
    with log_path.open("a") as log:
        while bundle.step < total_steps:
            epoch = bundle.step // steps_per_epoch
            k = bundle.step % steps_per_epoch
            if epoch != cached_epoch:
                order_a = _epoch_order(config.seed, epoch, "A", len(pool_a))
                order_b = _epoch_order(config.seed, epoch, "B", len(pool_b))
                if config.lr_decay:
                    _set_lr(bundle.optimizers, config.learning_rate * (1 - epoch / config.epochs))
                cached_epoch = epoch

            base = k * config.batch_size
            pairs_a = [pool_a[order_a[(base + i) % len(pool_a)]] for i in range(config.batch_size)]
            pairs_b = [pool_b[order_b[(base + i) % len(pool_b)]] for i in range(config.batch_size)]
            reals_a = [
                _real_pair(clips_a, config.seed, bundle.step * config.batch_size + i, "A")
                for i in range(config.batch_size)
            ]
            reals_b = [
                _real_pair(clips_b, config.seed, bundle.step * config.batch_size + i, "B")
                for i in range(config.batch_size)
            ]

            bundle, report = train_step(bundle, pairs_a, pairs_b, reals_a, reals_b, config)
            bundle.epoch = bundle.step // steps_per_epoch
            log.write(json.dumps({"step": bundle.step, "epoch": epoch, **report.to_dict()}) + "\n")
            if not quiet and (bundle.step % 25 == 0 or bundle.step == total_steps):
                print(f"step {bundle.step}/{total_steps} total={report.total:.4f}", flush=True)

            at_epoch_end = bundle.step % steps_per_epoch == 0
            if at_epoch_end and bundle.epoch % config.checkpoint_interval == 0:
                save_checkpoint(bundle, out / f"checkpoint_epoch{bundle.epoch:04d}.pt")

    save_checkpoint(bundle, out / "checkpoint_final.pt")
    return bundle


def translate_clip(bundle: ModelBundle, clip: VideoClip, direction: str = "ab") -> VideoClip:
    """Translate every frame of a clip, anchored on its reference frame.

    Each non-reference frame is paired with the reference and both outputs
    are produced; the translated reference itself is taken from the first
    pair.  Frame order and the reference index are preserved.
    """
    source_domain, target_domain = ("A", "B") if direction == "ab" else ("B", "A")
    gen = bundle.generator(direction)
    if clip.domain != source_domain:
        raise ValueError(
            f"direction {direction!r} expects a domain-{source_domain} clip, "
            f"got domain {clip.domain!r}"
        )
    pairs = iterate_pairs(clip)
    gen.eval()
    outputs: dict[int, Frame] = {}
    translated_ref = None
    chunk = 8
    with torch.no_grad():
        for start in range(0, len(pairs), chunk):
            part = pairs[start : start + chunk]
            src = frames_to_batch([p.source for p in part])
            ref = frames_to_batch([p.reference for p in part])
            out_src, out_ref = gen(src, ref)
            for p, f in zip(part, batch_to_frames(out_src)):
                outputs[p.source_index] = f
            if translated_ref is None:
                translated_ref = batch_to_frames(out_ref[:1])[0]
    gen.train()
    outputs[clip.reference_index] = translated_ref
    frames = [outputs[i] for i in range(len(clip))]
    return VideoClip(clip.clip_id, target_domain, frames, clip.reference_index)
