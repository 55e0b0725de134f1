"""Large-kernel gated convolutional classifier with Gaussian-mask mixing.

The package bundles a small numpy autodiff engine, the StarMix batch
augmentation, the LaKNet model family, a folder/synthetic data pipeline,
biometric verification metrics, and a command line front end.
"""

__version__ = "0.1.0"

from .engine import (  # noqa: F401
    Tensor,
    Parameter,
    set_precision,
    get_precision,
    precision,
    no_grad,
)
