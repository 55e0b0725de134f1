from .tensor import (  # noqa: F401
    Tensor,
    Parameter,
    set_precision,
    get_precision,
    active_dtype,
    precision,
    no_grad,
    grad_enabled,
)
from . import functional  # noqa: F401
from .module import Module, ModuleList, Conv2d, BatchNorm2d, Linear  # noqa: F401
from .optim import SGD, Adam, cosine_lr  # noqa: F401
from .checkpoint import save_checkpoint, load_checkpoint, load_into_model  # noqa: F401
