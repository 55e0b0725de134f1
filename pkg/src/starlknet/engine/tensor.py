"""Reverse-mode automatic differentiation over dense numpy arrays.

Every operation records its parents and a closure that maps the output
gradient onto parent gradients.  Calling ``backward`` on a scalar walks the
graph once in reverse topological order and accumulates gradients.

The engine runs in one of two precisions, selected globally:

* ``"train"``: float32, the default for fitting models.
* ``"test"``: float64, used by numeric checks and reproducibility runs.
"""

import contextlib

import numpy as np

_PRECISIONS = {"train": np.float32, "test": np.float64}
_active_mode = "train"
_grad_enabled = True


def set_precision(mode):
    """Select the engine-wide precision, either "train" (32-bit) or "test" (64-bit)."""
    global _active_mode
    if mode not in _PRECISIONS:
        raise ValueError(f"unknown precision mode {mode!r}; expected 'train' or 'test'")
    _active_mode = mode


def get_precision():
    return _active_mode


def active_dtype():
    return _PRECISIONS[_active_mode]


@contextlib.contextmanager
def precision(mode):
    """Temporarily switch the engine precision."""
    previous = _active_mode
    set_precision(mode)
    try:
        yield
    finally:
        set_precision(previous)


def grad_enabled():
    return _grad_enabled


@contextlib.contextmanager
def no_grad():
    """Disable graph construction inside the block (pure inference)."""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


class Tensor:
    """A numpy array plus the bookkeeping needed for reverse-mode autodiff."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn", "_consumed")

    def __init__(self, data, requires_grad=False):
        arr = np.asarray(data)
        if arr.dtype != active_dtype():
            arr = arr.astype(active_dtype())
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward_fn = None
        self._consumed = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return self.data.item()

    def numpy(self):
        return self.data

    def detach(self):
        """A new leaf tensor sharing this tensor's array, cut from the graph."""
        out = Tensor.__new__(Tensor)
        out.data = self.data
        out.grad = None
        out.requires_grad = False
        out._parents = ()
        out._backward_fn = None
        out._consumed = False
        return out

    def accumulate_grad(self, piece):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += piece

    def backward(self):
        """Backpropagate from this scalar through the recorded graph.

        Rejects non-scalar roots and a second backward pass over the same
        graph; rebuild the graph (rerun the forward pass) to differentiate
        again.
        """
        if self.data.size != 1:
            raise ValueError(
                f"backward requires a scalar; got an output of shape {self.data.shape}"
            )
        if self._consumed:
            raise RuntimeError(
                "backward was already run on this graph; rerun the forward pass first"
            )
        order = self._topological_order()
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward_fn is not None:
                node._backward_fn(node.grad)
        self._consumed = True

    def _topological_order(self):
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        return order

    # Convenience arithmetic; the heavy lifting lives in functional.py.
    def __add__(self, other):
        from . import functional

        return functional.add(self, _as_tensor(other))

    def __radd__(self, other):
        return self.__add__(other)

    def __mul__(self, other):
        from . import functional

        return functional.mul(self, _as_tensor(other))

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        from . import functional

        return functional.neg(self)

    def __sub__(self, other):
        from . import functional

        return functional.add(self, functional.neg(_as_tensor(other)))

    def sum(self):
        from . import functional

        return functional.sum_(self)

    def mean(self):
        from . import functional

        return functional.mean_(self)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{flag})"


def _as_tensor(value):
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value))


class Parameter(Tensor):
    """A trainable leaf tensor.

    The gradient buffer is always allocated so that a parameter left out of a
    graph reports an exact zero gradient rather than None.  Norm scales and
    shifts set ``weight_decay_exempt`` so optimizers skip their decay term.
    """

    __slots__ = ("weight_decay_exempt",)

    def __init__(self, data, weight_decay_exempt=False):
        super().__init__(data, requires_grad=True)
        self.grad = np.zeros_like(self.data)
        self.weight_decay_exempt = bool(weight_decay_exempt)

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)
