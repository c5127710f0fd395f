"""Network architectures: dual-stream generator, pixel critic, pair critic.

The generator translates a (source, reference) frame pair jointly: two
encoder-decoder streams with same-stream skip connections, coupled at the
bottleneck.  Coupling is configurable:

  dense_fusion    both bottleneck codes are average-pooled to 1×1, mixed by a
                  wide 1×1 convolution, reshaped back to a bottleneck-sized
                  map, and concatenated onto each stream's own code
  weight_sharing  no fusion block; the deepest residual block and the first
                  upsampling module are shared between the streams
  none            fully independent streams

Inputs and outputs are signed-range tensors in [-1, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
import torch.nn as nn

from .data import Frame

FUSION_MODES = ("dense_fusion", "weight_sharing", "none")
CHECKPOINT_VERSION = 1


def _disc_downs(frame_size: int, wanted: int = 3) -> int:
    """Downsampling depth that keeps normalized activations above 1×1."""
    d = wanted
    while d > 1 and (frame_size % 2**d != 0 or frame_size // 2**d < 2):
        d -= 1
    return d


@dataclass
class GeneratorConfig:
    """Geometry shared by every network in a run."""

    frame_size: int = 256
    base_channels: int = 64
    bottleneck_channels: int = 512
    downsample_stages: int = 5
    residual_blocks_per_stage: int = 1
    fusion_mode: str = "dense_fusion"
    disc_channels: int = 64
    disc_downsample_stages: int | None = None
    disc_norm: bool = True
    validator_channels: int = 64
    histogram_bins: int = 5

    def __post_init__(self):
        if self.fusion_mode not in FUSION_MODES:
            raise ValueError(f"fusion_mode must be one of {FUSION_MODES}, got {self.fusion_mode!r}")
        if self.downsample_stages < 1:
            raise ValueError("downsample_stages must be ≥ 1")
        if self.disc_downsample_stages is not None and self.disc_downsample_stages < 1:
            raise ValueError("disc_downsample_stages must be ≥ 1 when given")
        factor = 2**self.downsample_stages
        if self.frame_size % factor != 0 or self.frame_size // factor < 1:
            raise ValueError(
                f"frame_size {self.frame_size} not divisible by 2^{self.downsample_stages}"
            )
        if self.frame_size % 2 ** _disc_downs(self.frame_size) != 0:
            raise ValueError(f"frame_size {self.frame_size} incompatible with the critic")
        if self.encoder_channels()[-1] != self.bottleneck_channels:
            raise ValueError(
                f"bottleneck_channels {self.bottleneck_channels} unreachable from "
                f"base_channels {self.base_channels} in {self.downsample_stages} stages"
            )
        if self.histogram_bins < 2:
            raise ValueError("histogram_bins must be ≥ 2")

    def encoder_channels(self) -> list[int]:
        """Channel widths [stem, stage1, ..., stageN]; doubles up to the bottleneck cap."""
        return [
            min(self.base_channels * 2**i, self.bottleneck_channels)
            for i in range(self.downsample_stages + 1)
        ]

    @property
    def bottleneck_size(self) -> int:
        return self.frame_size // 2**self.downsample_stages


class ConvNormRelu(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, kernel: int, stride: int = 1):
        super().__init__()
        # reflect padding keeps the wide stem free of border artifacts
        mode = "reflect" if kernel == 7 else "zeros"
        self.block = nn.Sequential(
            # bias is dropped: the following InstanceNorm would cancel it
            nn.Conv2d(in_ch, out_ch, kernel, stride, kernel // 2, bias=False, padding_mode=mode),
            nn.InstanceNorm2d(out_ch),
            nn.ReLU(inplace=True),
        )

    def forward(self, x):
        return self.block(x)


class ResidualBlock(nn.Module):
    def __init__(self, ch: int):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv2d(ch, ch, 3, 1, 1, bias=False),
            nn.InstanceNorm2d(ch),
            nn.ReLU(inplace=True),
            nn.Conv2d(ch, ch, 3, 1, 1, bias=False),
            nn.InstanceNorm2d(ch),
        )

    def forward(self, x):
        return x + self.body(x)


class EncoderStage(nn.Module):
    """Widen channels, halve resolution by max-pooling, refine residually."""

    def __init__(self, in_ch: int, out_ch: int, n_res: int):
        super().__init__()
        self.widen = ConvNormRelu(in_ch, out_ch, 3)
        self.pool = nn.MaxPool2d(2)
        self.blocks = nn.Sequential(*[ResidualBlock(out_ch) for _ in range(n_res)])

    def forward(self, x):
        return self.blocks(self.pool(self.widen(x)))


class UpsampleModule(nn.Module):
    """3×3 conv followed by 2× nearest-neighbor upsampling."""

    def __init__(self, in_ch: int, out_ch: int):
        super().__init__()
        self.conv = ConvNormRelu(in_ch, out_ch, 3)
        self.up = nn.Upsample(scale_factor=2, mode="nearest")

    def forward(self, x):
        return self.up(self.conv(x))


class StreamEncoder(nn.Module):
    def __init__(self, config: GeneratorConfig):
        super().__init__()
        chs = config.encoder_channels()
        # no normalization on the stem: a normalized flat region collapses to
        # zero, and the full-resolution skip must keep absolute color levels
        self.stem = nn.Sequential(
            nn.Conv2d(3, chs[0], 7, 1, 3, padding_mode="reflect"),
            nn.ReLU(inplace=True),
        )
        self.stages = nn.ModuleList(
            EncoderStage(chs[i], chs[i + 1], config.residual_blocks_per_stage)
            for i in range(config.downsample_stages)
        )

    def forward(self, x) -> list[torch.Tensor]:
        """Feature pyramid [full-res stem, stage 1, ..., bottleneck]."""
        feats = [self.stem(x)]
        for stage in self.stages:
            feats.append(stage(feats[-1]))
        return feats


class StreamDecoder(nn.Module):
    """Mirror of the encoder; concatenates the same stream's skips at each scale."""

    def __init__(self, config: GeneratorConfig, fused_input: bool):
        super().__init__()
        chs = config.encoder_channels()
        stages = config.downsample_stages
        ups = []
        in_ch = chs[stages] * (2 if fused_input else 1)
        for s in range(stages, 0, -1):
            ups.append(UpsampleModule(in_ch, chs[s - 1]))
            in_ch = chs[s - 1] * 2  # skip concat doubles the width
        self.ups = nn.ModuleList(ups)
        self.head = nn.Conv2d(in_ch, 3, 7, 1, 3, padding_mode="reflect")

    def forward(self, bottleneck_in, skips: Sequence[torch.Tensor]):
        x = bottleneck_in
        for k, up in enumerate(self.ups):
            x = up(x)
            x = torch.cat([x, skips[len(skips) - 1 - k]], dim=1)
        return torch.tanh(self.head(x))


class DenseFusionBlock(nn.Module):
    """Global mixing of the two bottleneck codes into one shared map.

    Each code is average-pooled to 1×1, the pooled vectors are concatenated
    and passed through a 1×1 convolution wide enough to hold an entire
    bottleneck feature map, and the output is reshaped to channels×s×s.
    Pooling first makes the result invariant to spatial permutations of the
    input codes.
    """

    def __init__(self, channels: int, spatial: int):
        super().__init__()
        self.channels = channels
        self.spatial = spatial
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.mix = nn.Conv2d(2 * channels, channels * spatial * spatial, 1)

    def forward(self, source_code, reference_code):
        if source_code.shape != reference_code.shape:
            raise ValueError(
                f"fusion inputs differ: {tuple(source_code.shape)} vs "
                f"{tuple(reference_code.shape)}"
            )
        b, c, h, w = source_code.shape
        if c != self.channels or h != self.spatial or w != self.spatial:
            raise ValueError(
                f"fusion expects {self.channels}×{self.spatial}×{self.spatial} codes, "
                f"got {c}×{h}×{w}"
            )
        pooled = torch.cat([self.pool(source_code), self.pool(reference_code)], dim=1)
        return self.mix(pooled).reshape(b, self.channels, self.spatial, self.spatial)


class XShapeGenerator(nn.Module):
    """Dual-in dual-out generator over (source, reference) frame pairs."""

    def __init__(self, config: GeneratorConfig):
        super().__init__()
        self.config = config
        self.source_encoder = StreamEncoder(config)
        self.reference_encoder = StreamEncoder(config)
        dense = config.fusion_mode == "dense_fusion"
        self.fusion = (
            DenseFusionBlock(config.bottleneck_channels, config.bottleneck_size)
            if dense
            else None
        )
        self.source_decoder = StreamDecoder(config, fused_input=dense)
        self.reference_decoder = StreamDecoder(config, fused_input=dense)
        if config.fusion_mode == "weight_sharing":
            # the streams share their deepest refinement and first upsampling step
            self.reference_encoder.stages[-1].blocks[-1] = (
                self.source_encoder.stages[-1].blocks[-1]
            )
            self.reference_decoder.ups[0] = self.source_decoder.ups[0]

    def _check_input(self, name: str, x: torch.Tensor) -> None:
        size = self.config.frame_size
        if x.ndim != 4 or x.shape[1] != 3:
            raise ValueError(f"{name}: expected (B, 3, H, W), got {tuple(x.shape)}")
        if x.shape[2] != size or x.shape[3] != size:
            raise ValueError(f"{name}: expected {size}×{size} frames, got {tuple(x.shape[2:])}")

    def forward(self, source, reference):
        self._check_input("source", source)
        self._check_input("reference", reference)
        if source.shape != reference.shape:
            raise ValueError("source and reference batches must match in shape")
        src_feats = self.source_encoder(source)
        ref_feats = self.reference_encoder(reference)
        if self.fusion is not None:
            fused = self.fusion(src_feats[-1], ref_feats[-1])
            src_in = torch.cat([src_feats[-1], fused], dim=1)
            ref_in = torch.cat([ref_feats[-1], fused], dim=1)
        else:
            src_in, ref_in = src_feats[-1], ref_feats[-1]
        out_src = self.source_decoder(src_in, src_feats[:-1])
        out_ref = self.reference_decoder(ref_in, ref_feats[:-1])
        return out_src, out_ref


class PixelDiscriminator(nn.Module):
    """Downsample-upsample critic emitting an unbounded score per pixel.

    The score map has the input's full spatial resolution and no squashing
    activation; least-squares losses consume it directly.
    """

    def __init__(
        self,
        frame_size: int,
        channels: int = 64,
        downs: int | None = None,
        norm: bool = True,
    ):
        super().__init__()
        d = _disc_downs(frame_size, wanted=3 if downs is None else downs)
        widths = [channels * 2**k for k in range(d)]

        def block(in_ch, out_ch, kernel, stride):
            conv = nn.Conv2d(in_ch, out_ch, kernel, stride, kernel // 2 - (kernel % 2 == 0),
                             bias=not norm)
            layers = [conv, nn.InstanceNorm2d(out_ch)] if norm else [conv]
            return layers + [nn.LeakyReLU(0.2, inplace=True)]

        down_layers: list[nn.Module] = [
            # no normalization before the first activation: the critic must
            # see absolute color levels
            nn.Conv2d(3, widths[0], 4, 2, 1),
            nn.LeakyReLU(0.2, inplace=True),
        ]
        for k in range(1, d):
            down_layers += block(widths[k - 1], widths[k], 4, 2)
        up_layers: list[nn.Module] = []
        out_widths = list(reversed(widths[:-1])) + [channels]
        cur = widths[-1]
        for w in out_widths:
            up_layers.append(nn.Upsample(scale_factor=2, mode="nearest"))
            up_layers += block(cur, w, 3, 1)
            cur = w
        self.net = nn.Sequential(*down_layers, *up_layers, nn.Conv2d(cur, 1, 3, 1, 1))
        self.downs = d

    def forward(self, x):
        if x.ndim != 4 or x.shape[1] != 3:
            raise ValueError(f"expected (B, 3, H, W), got {tuple(x.shape)}")
        if x.shape[2] % 2**self.downs or x.shape[3] % 2**self.downs:
            raise ValueError(f"spatial size {tuple(x.shape[2:])} not divisible by {2**self.downs}")
        return self.net(x)


class ColorValidator(nn.Module):
    """Joint pair critic: shared trunk over a stacked frame pair, two heads.

    The hist head regresses the pair's relative color distribution; the iv
    head scores whether the pair plausibly comes from a single real clip
    (unbounded scalar, least-squares targets).
    """

    def __init__(self, channels: int = 64, bins: int = 5):
        super().__init__()
        self.bins = bins
        widths = [channels * 2**k for k in range(4)]
        layers: list[nn.Module] = [
            nn.Conv2d(6, widths[0], 3, 2, 1),
            nn.LeakyReLU(0.2, inplace=True),
        ]
        for k in range(1, 4):
            layers += [
                nn.Conv2d(widths[k - 1], widths[k], 3, 2, 1, bias=False),
                # group norm stays well-defined even on 1×1 activations
                nn.GroupNorm(1, widths[k]),
                nn.LeakyReLU(0.2, inplace=True),
            ]
        self.trunk = nn.Sequential(*layers)
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.hist_head = nn.Linear(widths[-1], 3 * bins)
        self.iv_head = nn.Linear(widths[-1], 1)

    def forward(self, first, second):
        if first.shape != second.shape:
            raise ValueError("pair frames must share a shape")
        if first.ndim != 4 or first.shape[1] != 3:
            raise ValueError(f"expected (B, 3, H, W) frames, got {tuple(first.shape)}")
        z = self.pool(self.trunk(torch.cat([first, second], dim=1))).flatten(1)
        return self.hist_head(z), self.iv_head(z)


def init_weights(module: nn.Module, std: float = 0.02) -> None:
    """Gaussian init for conv/linear weights, zero biases."""
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d, nn.Linear)):
            nn.init.normal_(m.weight, 0.0, std)
            if m.bias is not None:
                nn.init.zeros_(m.bias)


def count_parameters(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())


@dataclass
class ModelBundle:
    """Every network of a run plus training progress counters."""

    config: GeneratorConfig
    gen_ab: XShapeGenerator
    gen_ba: XShapeGenerator
    disc_a: PixelDiscriminator
    disc_b: PixelDiscriminator
    val_a: ColorValidator
    val_b: ColorValidator
    step: int = 0
    epoch: int = 0
    optimizers: dict = field(default_factory=dict)
    pending_optimizer_state: dict | None = None
    train_config: dict | None = None

    def networks(self) -> dict[str, nn.Module]:
        return {
            "gen_ab": self.gen_ab,
            "gen_ba": self.gen_ba,
            "disc_a": self.disc_a,
            "disc_b": self.disc_b,
            "val_a": self.val_a,
            "val_b": self.val_b,
        }

    def generator(self, direction: str) -> XShapeGenerator:
        if direction not in ("ab", "ba"):
            raise ValueError(f"direction must be 'ab' or 'ba', got {direction!r}")
        return self.gen_ab if direction == "ab" else self.gen_ba

    def train_mode(self) -> None:
        for net in self.networks().values():
            net.train()

    def eval_mode(self) -> None:
        for net in self.networks().values():
            net.eval()


def build_models(config: GeneratorConfig, seed: int = 0) -> ModelBundle:
    """Instantiate and initialize all six networks deterministically."""
    torch.manual_seed(seed)
    bundle = ModelBundle(
        config=config,
        gen_ab=XShapeGenerator(config),
        gen_ba=XShapeGenerator(config),
        disc_a=PixelDiscriminator(
            config.frame_size, config.disc_channels,
            config.disc_downsample_stages, config.disc_norm,
        ),
        disc_b=PixelDiscriminator(
            config.frame_size, config.disc_channels,
            config.disc_downsample_stages, config.disc_norm,
        ),
        val_a=ColorValidator(config.validator_channels, config.histogram_bins),
        val_b=ColorValidator(config.validator_channels, config.histogram_bins),
    )
    for net in bundle.networks().values():
        init_weights(net)
    return bundle


def save_checkpoint(bundle: ModelBundle, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "version": CHECKPOINT_VERSION,
        "config": asdict(bundle.config),
        "step": bundle.step,
        "epoch": bundle.epoch,
        "models": {name: net.state_dict() for name, net in bundle.networks().items()},
        "optimizers": {name: opt.state_dict() for name, opt in bundle.optimizers.items()},
        "train_config": bundle.train_config,
    }
    torch.save(payload, path)
    return path


def load_checkpoint(path: str | Path) -> ModelBundle:
    """Rebuild a bundle from disk; optimizer states are held for the trainer."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    payload = torch.load(path, map_location="cpu", weights_only=True)
    version = payload.get("version")
    if version != CHECKPOINT_VERSION:
        raise ValueError(
            f"checkpoint {path}: version {version!r} unsupported "
            f"(expected {CHECKPOINT_VERSION})"
        )
    config = GeneratorConfig(**payload["config"])
    bundle = build_models(config, seed=0)
    for name, net in bundle.networks().items():
        try:
            net.load_state_dict(payload["models"][name], strict=True)
        except (KeyError, RuntimeError) as exc:
            raise ValueError(f"checkpoint {path}: cannot restore {name}: {exc}") from exc
    bundle.step = int(payload["step"])
    bundle.epoch = int(payload["epoch"])
    bundle.pending_optimizer_state = payload.get("optimizers") or None
    bundle.train_config = payload.get("train_config")
    return bundle


def frames_to_batch(frames: Sequence[Frame]) -> torch.Tensor:
    """Stack frames into an (N, 3, H, W) float32 batch in signed range."""
    if not frames:
        raise ValueError("no frames to stack")
    arrays = [f.to_signed().pixels for f in frames]
    batch = torch.from_numpy(np.stack(arrays)).permute(0, 3, 1, 2)
    return batch.to(torch.float32)


def batch_to_frames(batch: torch.Tensor) -> list[Frame]:
    """Unstack network output into unit-range frames (clamped to valid range)."""
    arr = batch.detach().clamp(-1.0, 1.0).permute(0, 2, 3, 1).contiguous()
    arr = arr.to(torch.float64).cpu().numpy()
    return [Frame((a + 1.0) / 2.0, "unit") for a in arr]
