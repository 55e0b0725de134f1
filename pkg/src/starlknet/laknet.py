"""Large-kernel gated convolutional classifier.

The network is a stem, four stages, three necks and a linear head. Each
stage opens with a pointwise embedding and stacks residual blocks whose
conv branch sums one large depthwise kernel with three small ones (a 5x5
and two dilated 3x3) and is modulated by a pointwise ReLU gate before a
residual add. Necks halve the resolution and raise the channel count
between stages.
"""

from dataclasses import dataclass, fields

import numpy as np

from .engine import (
    BatchNorm2d,
    Conv2d,
    Linear,
    Module,
    ModuleList,
    functional as F,
)


@dataclass(frozen=True)
class LaKNetConfig:
    stage_depths: tuple
    stage_channels: tuple
    large_kernels: tuple
    num_classes: int
    input_side: int
    small_kernel: int = 5
    dilations: tuple = (2, 4)
    stem_channels: int = 64
    in_channels: int = 1

    def __post_init__(self):
        for name in ("stage_depths", "stage_channels", "large_kernels"):
            value = tuple(int(v) for v in getattr(self, name))
            object.__setattr__(self, name, value)
            if len(value) != 4:
                raise ValueError(f"{name} must list exactly 4 stages, got {len(value)}")
            if any(v < 1 for v in value):
                raise ValueError(f"{name} entries must be positive")
        object.__setattr__(self, "dilations", tuple(int(v) for v in self.dilations))
        if any(k % 2 == 0 for k in self.large_kernels):
            raise ValueError("large kernels must be odd")
        if self.small_kernel < 1 or self.small_kernel % 2 == 0:
            raise ValueError("small_kernel must be a positive odd size")
        if len(self.dilations) != 2 or any(d < 1 for d in self.dilations):
            raise ValueError("dilations must be two positive ints")
        if self.num_classes < 2:
            raise ValueError("num_classes must be at least 2")
        if self.stem_channels < 1 or self.in_channels < 1:
            raise ValueError("channel counts must be positive")
        # stem divides the side by 4 and each neck halves it again
        if self.input_side < 32 or self.input_side % 32 != 0:
            raise ValueError("input_side must be a positive multiple of 32")

    @property
    def stage_sides(self):
        base = self.input_side // 4
        return tuple(base >> i for i in range(4))


def toy_config(num_classes=10, input_side=32):
    """Desk-scale preset small enough to train on a CPU in seconds."""
    return LaKNetConfig(
        stage_depths=(1, 1, 2, 1),
        stage_channels=(16, 32, 64, 128),
        large_kernels=(7, 7, 5, 3),
        num_classes=num_classes,
        input_side=input_side,
        stem_channels=16,
    )


def full_config(num_classes=600, input_side=224):
    """Publication-scale preset: depths 2/2/18/2, widths 128..1024."""
    return LaKNetConfig(
        stage_depths=(2, 2, 18, 2),
        stage_channels=(128, 256, 512, 1024),
        large_kernels=(31, 29, 27, 13),
        num_classes=num_classes,
        input_side=input_side,
    )


_TUPLE_FIELDS = ("stage_depths", "stage_channels", "large_kernels", "dilations")
_REQUIRED_KEYS = (
    "stage_depths",
    "stage_channels",
    "large_kernels",
    "num_classes",
    "input_side",
)


def emit_model_config(config):
    """Serialize a config as sorted key = value lines."""
    lines = []
    for field in sorted(fields(LaKNetConfig), key=lambda f: f.name):
        value = getattr(config, field.name)
        if field.name in _TUPLE_FIELDS:
            value = ", ".join(str(v) for v in value)
        lines.append(f"{field.name} = {value}")
    return "\n".join(lines) + "\n"


def parse_model_config(text):
    """Parse emit_model_config output; unknown keys are rejected."""
    known = {f.name for f in fields(LaKNetConfig)}
    seen = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in known:
            raise ValueError(f"unknown model config key: {key!r}")
        if key in seen:
            raise ValueError(f"duplicate model config key: {key!r}")
        value = value.strip()
        if key in _TUPLE_FIELDS:
            seen[key] = tuple(int(v) for v in value.split(","))
        else:
            seen[key] = int(value)
    missing = [k for k in _REQUIRED_KEYS if k not in seen]
    if missing:
        raise ValueError(f"missing model config keys: {', '.join(missing)}")
    return LaKNetConfig(**seen)


class Stem(Module):
    """Two stride-2 convolutions with a pointwise mix between them."""

    def __init__(self, in_channels, out_channels, rng):
        super().__init__()
        self.conv_in = Conv2d(in_channels, out_channels, 3, rng, stride=2)
        self.norm_in = BatchNorm2d(out_channels)
        self.conv_mix = Conv2d(out_channels, out_channels, 1, rng)
        self.norm_mix = BatchNorm2d(out_channels)
        self.conv_down = Conv2d(
            out_channels, out_channels, 3, rng, stride=2, groups=out_channels
        )
        self.norm_down = BatchNorm2d(out_channels)

    def forward(self, x):
        h, w = x.shape[2], x.shape[3]
        if h % 4 or w % 4:
            raise ValueError(f"stem needs spatial sides divisible by 4, got {h}x{w}")
        x = F.relu(self.norm_in(self.conv_in(x)))
        x = F.relu(self.norm_mix(self.conv_mix(x)))
        return F.relu(self.norm_down(self.conv_down(x)))


class Embedding(Module):
    """Pointwise stage entry: ReLU, 1x1 conv, norm, ReLU."""

    def __init__(self, in_channels, out_channels, rng):
        super().__init__()
        self.conv = Conv2d(in_channels, out_channels, 1, rng)
        self.norm = BatchNorm2d(out_channels)

    def forward(self, x):
        return F.relu(self.norm(self.conv(F.relu(x))))


class LaKBlock(Module):
    """Residual block mixing one large and three small depthwise kernels.

    The conv branch sums all four same-padded depthwise responses; a
    pointwise ReLU gate computed from the block input scales that sum
    before normalization and the residual add, so the gate can emphasize
    or fully suppress the conv branch.
    """

    def __init__(self, channels, large_kernel, rng, small_kernel=5, dilations=(2, 4)):
        super().__init__()
        self.lak = Conv2d(channels, channels, large_kernel, rng, groups=channels)
        self.sak = Conv2d(channels, channels, small_kernel, rng, groups=channels)
        self.sak_d1 = Conv2d(
            channels, channels, 3, rng, dilation=dilations[0], groups=channels
        )
        self.sak_d2 = Conv2d(
            channels, channels, 3, rng, dilation=dilations[1], groups=channels
        )
        self.gate = Conv2d(channels, channels, 1, rng, bias=True)
        self.norm = BatchNorm2d(channels)

    def conv_branch(self, z):
        return self.lak(z) + self.sak(z) + self.sak_d1(z) + self.sak_d2(z)

    def forward(self, z):
        k = self.conv_branch(z)
        g = F.relu(self.gate(z))
        return z + self.norm(k * g)


class Neck(Module):
    """Between-stage transition: stride-2 depthwise then channel expand."""

    def __init__(self, in_channels, out_channels, rng):
        super().__init__()
        self.down = Conv2d(
            in_channels, in_channels, 3, rng, stride=2, groups=in_channels
        )
        self.expand = Conv2d(in_channels, out_channels, 1, rng)
        self.norm = BatchNorm2d(out_channels)

    def forward(self, x):
        h, w = x.shape[2], x.shape[3]
        if h % 2 or w % 2:
            raise ValueError(f"neck needs even spatial sides, got {h}x{w}")
        return self.norm(self.expand(self.down(x)))


class Stage(Module):
    def __init__(self, in_channels, channels, depth, large_kernel, rng,
                 small_kernel, dilations):
        super().__init__()
        self.embed = Embedding(in_channels, channels, rng)
        self.blocks = ModuleList(
            LaKBlock(channels, large_kernel, rng, small_kernel, dilations)
            for _ in range(depth)
        )

    def forward(self, x):
        x = self.embed(x)
        for block in self.blocks:
            x = block(x)
        return x


class LaKNet(Module):
    """Stem, four stages of gated large-kernel blocks, three necks, head."""

    def __init__(self, config, rng):
        super().__init__()
        self.config = config
        widths = config.stage_channels
        self.stem = Stem(config.in_channels, config.stem_channels, rng)
        stages = []
        for i in range(4):
            in_ch = config.stem_channels if i == 0 else widths[i]
            stages.append(
                Stage(in_ch, widths[i], config.stage_depths[i],
                      config.large_kernels[i], rng,
                      config.small_kernel, config.dilations)
            )
        self.stages = ModuleList(stages)
        self.necks = ModuleList(
            Neck(widths[i], widths[i + 1], rng) for i in range(3)
        )
        # small head init keeps the untrained softmax near uniform
        self.fc = Linear(widths[3], config.num_classes, rng, std=0.01)

    def _check_input(self, x):
        if x.data.ndim != 4:
            raise ValueError(f"expected [B,C,H,W] input, got {x.data.ndim} dims")
        b, c, h, w = x.shape
        side = self.config.input_side
        if c != self.config.in_channels or h != side or w != side:
            raise ValueError(
                f"input {c}x{h}x{w} does not match configured "
                f"{self.config.in_channels}x{side}x{side}"
            )

    def forward_stages(self, x):
        """Run the backbone and return all four stage output tensors."""
        self._check_input(x)
        x = self.stem(x)
        outputs = []
        for i, stage in enumerate(self.stages):
            x = stage(x)
            outputs.append(x)
            if i < 3:
                x = self.necks[i](x)
        return outputs

    def features(self, x):
        """Pooled pre-head representation, shape [B, last stage width]."""
        return F.global_avg_pool(self.forward_stages(x)[-1])

    def forward(self, x):
        return self.fc(self.features(x))


def build_laknet(config, seed):
    """Construct a model with seeded truncated-normal initialization."""
    rng = np.random.default_rng([int(seed), 0])
    model = LaKNet(config, rng)
    names = [name for name, _ in model.named_parameters()]
    if len(names) != len(set(names)):
        raise RuntimeError("duplicate parameter names in model tree")
    return model
