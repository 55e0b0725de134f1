"""Independent reference computations used by the test suite.

Everything in here is written against the textbook definition of the
operation being checked, with plain Python loops wherever feasible, so the
library under test and the oracle cannot share a bug.
"""

import math

import numpy as np


def conv2d_oracle(x, w, stride=1, dilation=1, groups=1, pad=(0, 0, 0, 0)):
    """Nested-loop 2-d cross-correlation.

    x: [B, Cin, H, W]; w: [Cout, Cin/groups, KH, KW]; pad is
    (top, bottom, left, right) of explicit zeros.
    """
    sh = sw = stride
    dh = dw = dilation
    b, cin, h, wd = x.shape
    cout, cpg, kh, kw = w.shape
    pt, pb, pl, pr = pad
    xp = np.zeros((b, cin, h + pt + pb, wd + pl + pr), dtype=np.float64)
    xp[:, :, pt : pt + h, pl : pl + wd] = x
    hp, wp = xp.shape[2], xp.shape[3]
    ekh = (kh - 1) * dh + 1
    ekw = (kw - 1) * dw + 1
    oh = (hp - ekh) // sh + 1
    ow = (wp - ekw) // sw + 1
    og = cout // groups
    out = np.zeros((b, cout, oh, ow), dtype=np.float64)
    for bi in range(b):
        for co in range(cout):
            gi = co // og
            for oy in range(oh):
                for ox in range(ow):
                    acc = 0.0
                    for ci in range(cpg):
                        cin_idx = gi * cpg + ci
                        for ky in range(kh):
                            for kx in range(kw):
                                iy = oy * sh + ky * dh
                                ix = ox * sw + kx * dw
                                acc += xp[bi, cin_idx, iy, ix] * w[co, ci, ky, kx]
                    out[bi, co, oy, ox] = acc
    return out


def same_pad_amounts(size, kernel, dilation, stride):
    """The symmetric-preferred zero padding used by same-mode convolution."""
    eff = (kernel - 1) * dilation + 1
    out = -(-size // stride)
    total = max(0, (out - 1) * stride + eff - size)
    lead = total // 2
    return lead, total - lead


def kahan_mean(values):
    """Compensated-summation mean over a flat iterable of floats."""
    total = 0.0
    comp = 0.0
    count = 0
    for v in values:
        y = float(v) - comp
        t = total + y
        comp = (t - total) - y
        total = t
        count += 1
    if count == 0:
        raise ValueError("empty input")
    return total / count


def bilinear_resize_oracle(img, out_h, out_w):
    """Pixel-center-aligned bilinear resampling with edge clamping."""
    in_h, in_w = img.shape
    out = np.zeros((out_h, out_w), dtype=np.float64)
    for oy in range(out_h):
        sy = (oy + 0.5) * in_h / out_h - 0.5
        y0 = math.floor(sy)
        fy = sy - y0
        y0c = min(max(y0, 0), in_h - 1)
        y1c = min(max(y0 + 1, 0), in_h - 1)
        for ox in range(out_w):
            sx = (ox + 0.5) * in_w / out_w - 0.5
            x0 = math.floor(sx)
            fx = sx - x0
            x0c = min(max(x0, 0), in_w - 1)
            x1c = min(max(x0 + 1, 0), in_w - 1)
            top = img[y0c, x0c] * (1 - fx) + img[y0c, x1c] * fx
            bot = img[y1c, x0c] * (1 - fx) + img[y1c, x1c] * fx
            out[oy, ox] = top * (1 - fy) + bot * fy
    return out


def finite_difference_gradients(fn, arrays, eps=1e-5):
    """Central finite differences of a scalar-valued fn over a list of arrays.

    ``fn(arrays) -> float`` must be a pure function of the array contents.
    Returns one gradient array per input.
    """
    grads = []
    for arr in arrays:
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + eps
            plus = fn(arrays)
            flat[i] = keep - eps
            minus = fn(arrays)
            flat[i] = keep
            gflat[i] = (plus - minus) / (2 * eps)
        grads.append(g)
    return grads


def gradients_close(analytic, numeric, tol=1e-4):
    """True when |a - n| <= tol * max(1, |a|, |n|) everywhere."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    scale = np.maximum(1.0, np.maximum(np.abs(a), np.abs(n)))
    return bool((np.abs(a - n) <= tol * scale).all())


def normal_cdf(x):
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))
