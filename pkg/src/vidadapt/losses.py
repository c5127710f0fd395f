"""Training objective: adversarial, cycle, identity, and color-critic terms.

All terms reduce with means (never sums) so values are comparable across
frame sizes, score-map resolutions, and batch sizes.  Real and fake
adversarial targets are 1 and 0 on unbounded least-squares scores.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import Mapping

import torch

from .histogram import HistogramVector

# the eight generator-phase terms, in reporting order
TERM_KEYS = ("adv_ab", "adv_ba", "cyc", "idt", "hist_ab", "hist_ba", "iv_ab", "iv_ba")


def _check_nonempty(t: torch.Tensor, name: str) -> torch.Tensor:
    if t.numel() == 0:
        raise ValueError(f"{name}: empty score tensor")
    return t


def adversarial_g(scores_fake: torch.Tensor) -> torch.Tensor:
    """Least-squares generator term: mean (score − 1)² over fake scores."""
    scores_fake = _check_nonempty(scores_fake, "adversarial_g")
    return ((scores_fake - 1.0) ** 2).mean()


def adversarial_d(scores_real: torch.Tensor, scores_fake: torch.Tensor) -> torch.Tensor:
    """Least-squares critic term: mean (real − 1)² + mean fake²."""
    scores_real = _check_nonempty(scores_real, "adversarial_d")
    scores_fake = _check_nonempty(scores_fake, "adversarial_d")
    return ((scores_real - 1.0) ** 2).mean() + (scores_fake**2).mean()


def _pair_l1(outputs, targets, name: str) -> torch.Tensor:
    if len(outputs) != 2 or len(targets) != 2:
        raise ValueError(f"{name}: expected (source, reference) 2-tuples")
    terms = []
    for out, tgt in zip(outputs, targets):
        if out.shape != tgt.shape:
            raise ValueError(f"{name}: shape mismatch {tuple(out.shape)} vs {tuple(tgt.shape)}")
        terms.append((out - tgt).abs().mean())
    return (terms[0] + terms[1]) / 2.0


def cycle_loss(original, reconstructed) -> torch.Tensor:
    """Mean absolute reconstruction error over both frames of a pair."""
    return _pair_l1(reconstructed, original, "cycle_loss")


def identity_loss(outputs, inputs) -> torch.Tensor:
    """Mean absolute change when a generator is fed its own target domain."""
    return _pair_l1(outputs, inputs, "identity_loss")


def hist_loss(
    predicted: torch.Tensor, target: torch.Tensor | HistogramVector
) -> torch.Tensor:
    """Mean absolute error between predicted and target color-shift vectors.

    The target may be a plain tensor or a relative HistogramVector; absolute
    histogram vectors are rejected because the supervision signal is a shift.
    """
    if isinstance(target, HistogramVector):
        if target.kind != "relative":
            raise ValueError(f"hist_loss: target kind must be 'relative', got {target.kind!r}")
        target = torch.as_tensor(target.values, dtype=predicted.dtype)
    if predicted.shape[-1] != target.shape[-1]:
        raise ValueError(
            f"hist_loss: length mismatch {predicted.shape[-1]} vs {target.shape[-1]}"
        )
    return (predicted - target).abs().mean()


def intra_video_g(scores_fake: torch.Tensor) -> torch.Tensor:
    """Push translated pairs toward the critic's same-clip (real) target of 1."""
    scores_fake = _check_nonempty(scores_fake, "intra_video_g")
    return ((scores_fake - 1.0) ** 2).mean()


def intra_video_c(scores_real: torch.Tensor, scores_fake: torch.Tensor) -> torch.Tensor:
    """Critic side of the same-clip pair score, least-squares form."""
    scores_real = _check_nonempty(scores_real, "intra_video_c")
    scores_fake = _check_nonempty(scores_fake, "intra_video_c")
    return ((scores_real - 1.0) ** 2).mean() + (scores_fake**2).mean()


@dataclass
class LossWeights:
    """Per-term weights for the generator objective.

    Defaults favor content preservation (cycle 10, identity 5); uniform()
    gives the flat all-ones weighting of the base formulation.
    """

    w_adv: float = 1.0
    w_cyc: float = 10.0
    w_idt: float = 5.0
    w_hist: float = 1.0
    w_iv: float = 1.0

    def __post_init__(self):
        for name, value in asdict(self).items():
            v = float(value)
            if not math.isfinite(v) or v < 0.0:
                raise ValueError(f"weight {name}={value} must be finite and ≥ 0")
            setattr(self, name, v)

    @classmethod
    def uniform(cls) -> "LossWeights":
        return cls(w_adv=1.0, w_cyc=1.0, w_idt=1.0, w_hist=1.0, w_iv=1.0)

    def for_term(self, key: str) -> float:
        if key.startswith("adv"):
            return self.w_adv
        if key.startswith("hist"):
            return self.w_hist
        if key.startswith("iv"):
            return self.w_iv
        if key == "cyc":
            return self.w_cyc
        if key == "idt":
            return self.w_idt
        raise KeyError(f"unknown loss term {key!r}")


def total_objective(terms: Mapping[str, float], weights: LossWeights) -> float:
    """Weighted sum of the eight generator-phase terms.

    Raises if any expected term is missing; extra keys are ignored so critic
    diagnostics can live in the same mapping.
    """
    missing = [k for k in TERM_KEYS if k not in terms]
    if missing:
        raise ValueError(f"total_objective: missing terms {missing}")
    return float(sum(weights.for_term(k) * float(terms[k]) for k in TERM_KEYS))


@dataclass
class LossReport:
    """One step's scalar loss values: generator terms, total, critic terms."""

    terms: dict[str, float]
    total: float
    critic_terms: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = dict(self.terms)
        out["total"] = self.total
        out.update({f"critic_{k}": v for k, v in self.critic_terms.items()})
        return out

    def check_finite(self) -> None:
        for k, v in {**self.terms, "total": self.total, **self.critic_terms}.items():
            if not math.isfinite(v):
                raise RuntimeError(f"non-finite loss term {k}={v}")
