"""Layer containers: parameter registration, train/eval mode, common layers."""

import numpy as np

from . import functional
from .tensor import Parameter, Tensor


def trunc_normal(rng, shape, std, clip=2.0):
    """Normal draws with magnitude clipped to ``clip`` standard units by redraw."""
    values = rng.standard_normal(shape)
    while True:
        outliers = np.abs(values) > clip
        count = int(outliers.sum())
        if count == 0:
            break
        values[outliers] = rng.standard_normal(count)
    return values * std


class Module:
    """Base class tracking parameters, buffers and submodules by name."""

    def __init__(self):
        object.__setattr__(self, "_parameters", {})
        object.__setattr__(self, "_buffers", {})
        object.__setattr__(self, "_modules", {})
        object.__setattr__(self, "training", True)

    def __setattr__(self, name, value):
        if isinstance(value, Parameter):
            self._parameters[name] = value
        elif isinstance(value, (Module, ModuleList)):
            self._modules[name] = value
        object.__setattr__(self, name, value)

    def register_buffer(self, name, array):
        self._buffers[name] = array
        object.__setattr__(self, name, array)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def named_parameters(self, prefix=""):
        for name, p in self._parameters.items():
            yield (prefix + name if prefix else name), p
        for name, m in self._modules.items():
            sub = prefix + name + "." if prefix else name + "."
            yield from m.named_parameters(sub)

    def parameters(self):
        for _, p in self.named_parameters():
            yield p

    def named_buffers(self, prefix=""):
        for name, b in self._buffers.items():
            yield (prefix + name if prefix else name), b
        for name, m in self._modules.items():
            sub = prefix + name + "." if prefix else name + "."
            yield from m.named_buffers(sub)

    def modules(self):
        yield self
        for m in self._modules.values():
            yield from m.modules()

    def train(self, mode=True):
        for m in self.modules():
            object.__setattr__(m, "training", mode)
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def num_parameters(self):
        return sum(p.data.size for p in self.parameters())


class ModuleList:
    """An ordered list of submodules that registers each by index."""

    def __init__(self, items=()):
        self._items = list(items)

    def append(self, module):
        self._items.append(module)

    def __iter__(self):
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def __getitem__(self, index):
        return self._items[index]

    def named_parameters(self, prefix=""):
        for i, m in enumerate(self._items):
            yield from m.named_parameters(f"{prefix}{i}.")

    def named_buffers(self, prefix=""):
        for i, m in enumerate(self._items):
            yield from m.named_buffers(f"{prefix}{i}.")

    def modules(self):
        for m in self._items:
            yield from m.modules()


class Conv2d(Module):
    """Convolution layer; weights use a fan-in-scaled truncated normal."""

    def __init__(
        self,
        in_channels,
        out_channels,
        kernel_size,
        rng,
        stride=1,
        dilation=1,
        groups=1,
        padding="same",
        bias=False,
    ):
        super().__init__()
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.stride = stride
        self.dilation = dilation
        self.groups = groups
        self.padding = padding
        fan_in = (in_channels // groups) * kernel_size * kernel_size
        std = (2.0 / fan_in) ** 0.5
        shape = (out_channels, in_channels // groups, kernel_size, kernel_size)
        self.weight = Parameter(trunc_normal(rng, shape, std))
        self.bias = Parameter(np.zeros(out_channels)) if bias else None

    def forward(self, x):
        out = functional.conv2d(
            x,
            self.weight,
            stride=self.stride,
            dilation=self.dilation,
            groups=self.groups,
            padding=self.padding,
        )
        if self.bias is not None:
            out = functional.add(out, _channel_view(self.bias))
        return out


def _channel_view(param):
    """Expose a [C] parameter as [C, 1, 1] for broadcasting over feature maps."""
    view = Tensor.__new__(Tensor)
    view.data = param.data[:, None, None]
    view.grad = None
    view.requires_grad = param.requires_grad
    view._parents = (param,)
    view._consumed = False

    def backward(g):
        if param.requires_grad:
            param.accumulate_grad(g[:, 0, 0])

    view._backward_fn = backward
    return view


class BatchNorm2d(Module):
    def __init__(self, channels, momentum=0.1, eps=1e-5):
        super().__init__()
        self.channels = channels
        self.momentum = momentum
        self.eps = eps
        self.scale = Parameter(np.ones(channels), weight_decay_exempt=True)
        self.shift = Parameter(np.zeros(channels), weight_decay_exempt=True)
        self.register_buffer("running_mean", np.zeros(channels, dtype=np.float64))
        self.register_buffer("running_var", np.ones(channels, dtype=np.float64))

    def forward(self, x):
        return functional.batchnorm2d(
            x,
            self.scale,
            self.shift,
            self.running_mean,
            self.running_var,
            training=self.training,
            momentum=self.momentum,
            eps=self.eps,
        )


class Linear(Module):
    def __init__(self, in_features, out_features, rng, bias=True, std=None):
        super().__init__()
        self.in_features = in_features
        self.out_features = out_features
        if std is None:
            std = (2.0 / in_features) ** 0.5
        self.weight = Parameter(trunc_normal(rng, (out_features, in_features), std))
        self.bias = Parameter(np.zeros(out_features)) if bias else None

    def forward(self, x):
        return functional.linear(x, self.weight, self.bias)
