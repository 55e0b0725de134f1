"""Differentiable operations on Tensors.

Each op computes its result as a plain numpy array, wraps it in a Tensor and,
when gradients are enabled, attaches a closure that scatters the output
gradient back onto the inputs.
"""

import numpy as np

from .tensor import Tensor, grad_enabled


def _make(data, parents, backward_fn):
    requires = grad_enabled() and any(p.requires_grad for p in parents)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.requires_grad = requires
    out._parents = tuple(parents) if requires else ()
    out._backward_fn = backward_fn if requires else None
    out._consumed = False
    return out


def _unbroadcast(grad, shape):
    """Reduce ``grad`` back to ``shape`` by summing the broadcast axes."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def add(a, b):
    data = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g, b.data.shape))

    return _make(data, (a, b), backward)


def mul(a, b):
    data = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g * a.data, b.data.shape))

    return _make(data, (a, b), backward)


def neg(a):
    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(-g)

    return _make(-a.data, (a,), backward)


def sum_(a):
    data = np.asarray(a.data.sum(), dtype=a.data.dtype)

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(np.broadcast_to(g, a.data.shape))

    return _make(data, (a,), backward)


def mean_(a):
    n = a.data.size
    data = np.asarray(a.data.mean(), dtype=a.data.dtype)

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(np.broadcast_to(g / n, a.data.shape))

    return _make(data, (a,), backward)


def relu(a):
    data = np.maximum(a.data, 0)

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g * (a.data > 0))

    return _make(data, (a,), backward)


def sigmoid(a):
    s = 1.0 / (1.0 + np.exp(-a.data))

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g * s * (1.0 - s))

    return _make(s.astype(a.data.dtype, copy=False), (a,), backward)


def silu(a):
    """x * sigmoid(x), the smooth self-gated activation."""
    s = 1.0 / (1.0 + np.exp(-a.data))
    data = (a.data * s).astype(a.data.dtype, copy=False)

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g * s * (1.0 + a.data * (1.0 - s)))

    return _make(data, (a,), backward)


def linear(x, weight, bias=None):
    """Affine map of a [B, F] batch with weight [C, F] and optional bias [C]."""
    if x.data.ndim != 2:
        raise ValueError(f"linear expects a 2-d input, got shape {x.data.shape}")
    if weight.data.ndim != 2:
        raise ValueError(f"linear expects a 2-d weight, got shape {weight.data.shape}")
    if x.data.shape[1] != weight.data.shape[1]:
        raise ValueError(
            f"linear feature mismatch: input has {x.data.shape[1]} features (dim 1) "
            f"but weight expects {weight.data.shape[1]}"
        )
    data = x.data @ weight.data.T
    parents = [x, weight]
    if bias is not None:
        if bias.data.shape != (weight.data.shape[0],):
            raise ValueError(
                f"linear bias shape {bias.data.shape} does not match output width "
                f"{weight.data.shape[0]}"
            )
        data = data + bias.data
        parents.append(bias)

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(g @ weight.data)
        if weight.requires_grad:
            weight.accumulate_grad(g.T @ x.data)
        if bias is not None and bias.requires_grad:
            bias.accumulate_grad(g.sum(axis=0))

    return _make(data, parents, backward)


def global_avg_pool(x):
    """Mean over the spatial axes: [B, C, H, W] -> [B, C]."""
    if x.data.ndim != 4:
        raise ValueError(f"global_avg_pool expects a 4-d input, got shape {x.data.shape}")
    b, c, h, w = x.data.shape
    data = x.data.mean(axis=(2, 3))

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(np.broadcast_to(g[:, :, None, None] / (h * w), x.data.shape))

    return _make(data, (x,), backward)


def soft_cross_entropy(logits, targets):
    """Mean over the batch of -sum(target * log_softmax(logits)).

    ``targets`` holds one soft distribution per row; every row must sum to 1
    within 1e-6.  Gradients flow to the logits only.
    """
    t = targets.data if isinstance(targets, Tensor) else np.asarray(targets)
    z = logits.data
    if z.ndim != 2 or t.shape != z.shape:
        raise ValueError(
            f"soft_cross_entropy expects matching [B, C] arrays, got {z.shape} and {t.shape}"
        )
    row_sums = t.sum(axis=1)
    bad = np.abs(row_sums - 1.0) > 1e-6
    if bad.any():
        idx = int(np.argmax(bad))
        raise ValueError(
            f"soft label row {idx} sums to {row_sums[idx]!r}, not 1 within 1e-6"
        )
    zmax = z.max(axis=1, keepdims=True)
    shifted = z - zmax
    logsumexp = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_softmax = shifted - logsumexp
    batch = z.shape[0]
    data = np.asarray(-(t * log_softmax).sum() / batch, dtype=z.dtype)

    def backward(g):
        if logits.requires_grad:
            softmax = np.exp(log_softmax)
            logits.accumulate_grad((softmax - t) * (g / batch))

    parents = (logits, targets) if isinstance(targets, Tensor) else (logits,)
    return _make(data, parents, backward)


def _pair(value, name):
    if isinstance(value, int):
        if value < 1:
            raise ValueError(f"{name} must be >= 1, got {value}")
        return value, value
    pair = tuple(int(v) for v in value)
    if len(pair) != 2 or min(pair) < 1:
        raise ValueError(f"{name} must be a positive int or pair, got {value!r}")
    return pair


def _same_padding(size, eff_kernel, stride):
    """TF-style SAME padding: output = ceil(size / stride)."""
    out = -(-size // stride)
    total = max(0, (out - 1) * stride + eff_kernel - size)
    lead = total // 2
    return lead, total - lead


def _conv_geometry(x_shape, w_shape, stride, dilation, groups, padding):
    batch, cin, h, w = x_shape
    cout, cin_per_group, kh, kw = w_shape
    sh, sw = _pair(stride, "stride")
    dh, dw = _pair(dilation, "dilation")
    if groups < 1:
        raise ValueError(f"groups must be >= 1, got {groups}")
    if cin % groups != 0:
        raise ValueError(f"input channels {cin} (dim 1) not divisible by groups {groups}")
    if cout % groups != 0:
        raise ValueError(f"output channels {cout} (dim 0) not divisible by groups {groups}")
    if cin_per_group != cin // groups:
        raise ValueError(
            f"weight expects {cin_per_group} channels per group (dim 1) but input "
            f"provides {cin // groups}"
        )
    ekh = (kh - 1) * dh + 1
    ekw = (kw - 1) * dw + 1
    if padding == "same":
        pt, pb = _same_padding(h, ekh, sh)
        pl, pr = _same_padding(w, ekw, sw)
    else:
        ph, pw = _pair(padding, "padding") if not isinstance(padding, int) else (padding, padding)
        if isinstance(padding, int) and padding < 0:
            raise ValueError(f"padding must be >= 0, got {padding}")
        pt = pb = ph
        pl = pr = pw
    oh = (h + pt + pb - ekh) // sh + 1
    ow = (w + pl + pr - ekw) // sw + 1
    if h + pt + pb < ekh or w + pl + pr < ekw:
        raise ValueError(
            f"effective kernel ({ekh}x{ekw}) exceeds padded input "
            f"({h + pt + pb}x{w + pl + pr}); height/width too small"
        )
    return (sh, sw), (dh, dw), (pt, pb, pl, pr), (oh, ow), (ekh, ekw)


def _window_view(padded, kh, kw, stride, dilation):
    """Strided view [B, C, OH, OW, KH, KW] over a padded input (no copy)."""
    sh, sw = stride
    dh, dw = dilation
    ekh = (kh - 1) * dh + 1
    ekw = (kw - 1) * dw + 1
    view = np.lib.stride_tricks.sliding_window_view(padded, (ekh, ekw), axis=(2, 3))
    return view[:, :, ::sh, ::sw, ::dh, ::dw]


def conv2d(x, weight, stride=1, dilation=1, groups=1, padding="same"):
    """2-d cross-correlation with stride, dilation, groups and zero padding.

    x: [B, Cin, H, W]; weight: [Cout, Cin / groups, KH, KW].  ``padding`` is
    "same" (output side = ceil(side / stride)) or an explicit symmetric
    amount (int or (ph, pw)).  Depthwise convolutions (groups == Cin == Cout)
    take a vectorized path; anything else goes through grouped im2col.
    Gradients flow to both the input and the weight.
    """
    if x.data.ndim != 4:
        raise ValueError(f"conv2d expects a 4-d input, got shape {x.data.shape}")
    if weight.data.ndim != 4:
        raise ValueError(f"conv2d expects a 4-d weight, got shape {weight.data.shape}")
    batch, cin, h, w = x.data.shape
    cout, _, kh, kw = weight.data.shape
    (sh, sw), (dh, dw), (pt, pb, pl, pr), (oh, ow), _ = _conv_geometry(
        x.data.shape, weight.data.shape, stride, dilation, groups, padding
    )

    padded = np.pad(x.data, ((0, 0), (0, 0), (pt, pb), (pl, pr)))
    depthwise = groups == cin and cout == cin

    if depthwise:
        windows = _window_view(padded, kh, kw, (sh, sw), (dh, dw))
        kernels = weight.data[:, 0]
        data = np.einsum("bchwij,cij->bchw", windows, kernels)
    else:
        cg = cin // groups
        og = cout // groups
        data = np.empty((batch, cout, oh, ow), dtype=x.data.dtype)
        for g in range(groups):
            xg = padded[:, g * cg : (g + 1) * cg]
            wg = weight.data[g * og : (g + 1) * og].reshape(og, cg * kh * kw)
            win = _window_view(xg, kh, kw, (sh, sw), (dh, dw))
            cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(batch, oh * ow, cg * kh * kw)
            data[:, g * og : (g + 1) * og] = (cols @ wg.T).transpose(0, 2, 1).reshape(
                batch, og, oh, ow
            )

    def backward(g):
        if weight.requires_grad:
            if depthwise:
                windows_b = _window_view(padded, kh, kw, (sh, sw), (dh, dw))
                dw_ = np.einsum("bchwij,bchw->cij", windows_b, g)
                weight.accumulate_grad(dw_[:, None])
            else:
                cg = cin // groups
                og = cout // groups
                dweight = np.empty_like(weight.data)
                for gi in range(groups):
                    xg = padded[:, gi * cg : (gi + 1) * cg]
                    win = _window_view(xg, kh, kw, (sh, sw), (dh, dw))
                    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(
                        batch, oh * ow, cg * kh * kw
                    )
                    gg = g[:, gi * og : (gi + 1) * og].reshape(batch, og, oh * ow)
                    dwg = np.einsum("bop,bpk->ok", gg, cols)
                    dweight[gi * og : (gi + 1) * og] = dwg.reshape(og, cg, kh, kw)
                weight.accumulate_grad(dweight)
        if x.requires_grad:
            dpadded = np.zeros_like(padded)
            if depthwise:
                kernels_b = weight.data[:, 0]
                for i in range(kh):
                    for j in range(kw):
                        dpadded[
                            :,
                            :,
                            i * dh : i * dh + sh * oh : sh,
                            j * dw : j * dw + sw * ow : sw,
                        ] += g * kernels_b[None, :, i, j, None, None]
            else:
                cg = cin // groups
                og = cout // groups
                for gi in range(groups):
                    gg = g[:, gi * og : (gi + 1) * og]
                    wg = weight.data[gi * og : (gi + 1) * og]
                    for i in range(kh):
                        for j in range(kw):
                            contrib = np.tensordot(gg, wg[:, :, i, j], axes=([1], [0]))
                            contrib = contrib.transpose(0, 3, 1, 2)
                            dpadded[
                                :,
                                gi * cg : (gi + 1) * cg,
                                i * dh : i * dh + sh * oh : sh,
                                j * dw : j * dw + sw * ow : sw,
                            ] += contrib
            ph_end = pt + h
            pw_end = pl + w
            x.accumulate_grad(dpadded[:, :, pt:ph_end, pl:pw_end])

    return _make(data, (x, weight), backward)


def batchnorm2d(
    x,
    scale,
    shift,
    running_mean,
    running_var,
    training,
    momentum=0.1,
    eps=1e-5,
):
    """Per-channel batch normalization over [B, C, H, W].

    Training mode normalizes with the biased batch statistics and folds them
    into the running buffers (in place) with the given momentum; the running
    variance uses the unbiased estimate.  Eval mode normalizes with the
    running buffers and never mutates them.
    """
    if x.data.ndim != 4:
        raise ValueError(f"batchnorm2d expects a 4-d input, got shape {x.data.shape}")
    b, c, h, w = x.data.shape
    if scale.data.shape != (c,) or shift.data.shape != (c,):
        raise ValueError(
            f"batchnorm2d channel mismatch: input has {c} channels (dim 1), "
            f"scale {scale.data.shape}, shift {shift.data.shape}"
        )
    axes = (0, 2, 3)
    if training:
        n = b * h * w
        if n == 1:
            raise ValueError(
                "batchnorm2d in training mode needs more than one value per channel; "
                "got batch 1 with 1x1 spatial extent (degenerate variance)"
            )
        mean = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mean
        running_var *= 1.0 - momentum
        running_var += momentum * var * (n / (n - 1.0))
    else:
        mean = running_mean.astype(x.data.dtype, copy=False)
        var = running_var.astype(x.data.dtype, copy=False)

    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = (x.data - mean[None, :, None, None]) * inv_std[None, :, None, None]
    data = scale.data[None, :, None, None] * x_hat + shift.data[None, :, None, None]

    def backward(g):
        if shift.requires_grad:
            shift.accumulate_grad(g.sum(axis=axes))
        if scale.requires_grad:
            scale.accumulate_grad((g * x_hat).sum(axis=axes))
        if x.requires_grad:
            gamma_inv = (scale.data * inv_std)[None, :, None, None]
            if training:
                n = b * h * w
                g_mean = g.mean(axis=axes)[None, :, None, None]
                gx_mean = (g * x_hat).mean(axis=axes)[None, :, None, None]
                x.accumulate_grad(gamma_inv * (g - g_mean - x_hat * gx_mean))
            else:
                x.accumulate_grad(gamma_inv * g)

    return _make(data.astype(x.data.dtype, copy=False), (x, scale, shift), backward)
