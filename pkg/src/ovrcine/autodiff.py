"""Minimal reverse-mode autodiff over the operator set the networks need.

Tensors wrap numpy arrays (float64 or complex128; 0-d arrays for scalars).
Gradients of a real scalar loss follow the convention
dloss = Re<grad, dx> = Re(sum(conj(grad) * dx)), so linear complex operators
backpropagate through their adjoints and real-valued paths reduce to the
ordinary chain rule. The primitive set is deliberately closed: convolution,
relu, complex packing, centered FFTs, row masking, coil expand/reduce, and
the scalar plumbing needed for losses and tape-unrolled CG.
"""

import numpy as np

from .fourier import fft2c as _fft2c_np
from .fourier import ifft2c as _ifft2c_np

__all__ = [
    "Tensor",
    "tensor",
    "parameter",
    "backward",
    "add",
    "sub",
    "neg",
    "mul",
    "scale",
    "smul",
    "conv2d",
    "relu",
    "complex_to_channels",
    "channels_to_complex",
    "fft2c_op",
    "ifft2c_op",
    "restrict_rows",
    "embed_rows",
    "mask_rows",
    "sens_expand",
    "sens_reduce",
    "re_inner",
    "sum_abs",
    "sqrt_op",
    "sdiv",
    "softplus",
    "finite_difference_check",
]

_EPS_DIV = 1e-30


class Tensor:
    """A value in the computation graph."""

    __slots__ = ("value", "grad", "parents", "backward_fn", "requires_grad")

    def __init__(self, value, parents=(), backward_fn=None, requires_grad=False):
        self.value = np.asarray(value)
        self.grad = None
        self.parents = parents
        self.backward_fn = backward_fn
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)

    @property
    def shape(self):
        return self.value.shape

    def detach(self):
        return Tensor(self.value)


def tensor(value):
    """Graph constant (no gradient tracking)."""
    return Tensor(np.asarray(value))


def parameter(value):
    """Trainable leaf."""
    return Tensor(np.array(value, copy=True), requires_grad=True)


def _node(value, parents, backward_fn):
    tracked = tuple(p for p in parents if p.requires_grad)
    if not tracked:
        return Tensor(value)
    return Tensor(value, parents=parents, backward_fn=backward_fn, requires_grad=True)


def _accum(t, g):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, copy=True)
    else:
        t.grad += g


def backward(loss):
    """Populate .grad on every requires_grad tensor reachable from loss."""
    if loss.value.shape != ():
        raise ValueError("backward needs a scalar loss")
    if loss.value.dtype.kind == "c":
        raise ValueError("loss must be real")
    order = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            stack.append((p, False))
    loss.grad = np.array(1.0)
    for node in reversed(order):
        if node.backward_fn is None or node.grad is None:
            continue
        for parent, g in zip(node.parents, node.backward_fn(node.grad)):
            if g is not None:
                _accum(parent, g)


def zero_grads(tensors):
    for t in tensors:
        t.grad = None


# ---------------------------------------------------------------- arithmetic

def add(a, b):
    return _node(a.value + b.value, (a, b), lambda g: (g, g))


def sub(a, b):
    return _node(a.value - b.value, (a, b), lambda g: (g, -g))


def neg(a):
    return _node(-a.value, (a,), lambda g: (-g,))


def mul(a, b):
    """Elementwise product; complex grads use the conjugate rule."""
    av, bv = a.value, b.value
    return _node(av * bv, (a, b), lambda g: (np.conj(bv) * g, np.conj(av) * g))


def scale(a, c):
    """Multiply by a numpy constant (scalar or array)."""
    c = np.asarray(c)
    return _node(a.value * c, (a,), lambda g: (np.conj(c) * g,))


def smul(s, x):
    """Real 0-d tensor times array tensor."""
    if s.value.shape != () or s.value.dtype.kind == "c":
        raise ValueError("smul scale must be a real scalar tensor")
    sv, xv = s.value, x.value

    def bwd(g):
        gs = np.real(np.sum(np.conj(g) * xv))
        return np.asarray(gs), sv * g

    return _node(sv * xv, (s, x), bwd)


def sdiv(a, b):
    """Real scalar division a/b (nonzero b stabilized by a tiny epsilon)."""
    if a.value.shape != () or b.value.shape != ():
        raise ValueError("sdiv expects scalars")
    denom = b.value + _EPS_DIV
    out = a.value / denom

    def bwd(g):
        return g / denom, -g * a.value / denom**2

    return _node(out, (a, b), bwd)


def sqrt_op(a):
    """Scalar square root; gradient defined as 0 at exactly 0."""
    if a.value.shape != ():
        raise ValueError("sqrt_op expects a scalar")
    root = np.sqrt(a.value)

    def bwd(g):
        if root == 0:
            return (np.asarray(0.0),)
        return (g / (2.0 * root),)

    return _node(root, (a,), bwd)


def softplus(a):
    """log(1 + exp(a)), numerically stable; keeps learned scalars positive."""
    v = a.value
    out = np.logaddexp(0.0, v)
    sig = 1.0 / (1.0 + np.exp(-v))
    return _node(out, (a,), lambda g: (g * sig,))


# ---------------------------------------------------------------- neural ops

def _im2col(x):
    """(C, H, W) -> (H*W, C*9) patch matrix for 3x3 same-padding convolution."""
    c, h, w = x.shape
    padded = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    win = np.lib.stride_tricks.sliding_window_view(padded, (3, 3), axis=(1, 2))
    return win.transpose(1, 2, 0, 3, 4).reshape(h * w, c * 9)


def _conv2d_raw(x, w):
    c_out = w.shape[0]
    h, wd = x.shape[1], x.shape[2]
    cols = _im2col(x)
    out = cols @ w.reshape(c_out, -1).T
    return out.T.reshape(c_out, h, wd)


def conv2d(x, w):
    """3x3 same-padding convolution: x (C_in, H, W), w (C_out, C_in, 3, 3).

    Patch matrices are recomputed in the backward pass rather than cached,
    which keeps graph memory linear in activations (the unrolled network
    holds ~100 conv nodes alive at once).
    """
    xv, wv = x.value, w.value
    if xv.ndim != 3 or wv.ndim != 4 or wv.shape[2:] != (3, 3) or wv.shape[1] != xv.shape[0]:
        raise ValueError(f"conv2d shapes incompatible: x {xv.shape}, w {wv.shape}")
    out = _conv2d_raw(xv, wv)

    def bwd(g):
        c_out = wv.shape[0]
        gmat = g.reshape(c_out, -1)
        g_w = (gmat @ _im2col(xv)).reshape(wv.shape)
        w_flip = wv[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
        g_x = _conv2d_raw(g, np.ascontiguousarray(w_flip))
        return g_x, g_w

    return _node(out, (x, w), bwd)


def relu(x):
    """Rectifier on real tensors; gradient at exactly 0 is 0."""
    if x.value.dtype.kind == "c":
        raise ValueError("relu is defined on real tensors only")
    mask = x.value > 0
    return _node(x.value * mask, (x,), lambda g: (g * mask,))


def complex_to_channels(z):
    """Complex (..., H, W) -> real channel stack (2*F, H, W).

    A 2-D input becomes (2, H, W); an (F, H, W) input interleaves to
    (2F, H, W) with channel 2i = Re(z_i), channel 2i+1 = Im(z_i).
    """
    zv = z.value
    if zv.ndim == 2:
        zv3 = zv[None]
    elif zv.ndim == 3:
        zv3 = zv
    else:
        raise ValueError("expected (H, W) or (F, H, W)")
    f, h, w = zv3.shape
    out = np.empty((2 * f, h, w), dtype=np.float64)
    out[0::2] = zv3.real
    out[1::2] = zv3.imag

    def bwd(g):
        gz = g[0::2] + 1j * g[1::2]
        return (gz[0] if zv.ndim == 2 else gz,)

    return _node(out, (z,), bwd)


def channels_to_complex(x):
    """Real (2F, H, W) channel stack -> complex (F, H, W) (or (H, W) if F=1)."""
    xv = x.value
    if xv.ndim != 3 or xv.shape[0] % 2 != 0:
        raise ValueError("expected an even channel count (re/im interleaved)")
    f = xv.shape[0] // 2
    out = xv[0::2] + 1j * xv[1::2]
    if f == 1:
        out = out[0]

    def bwd(g):
        g3 = g[None] if g.ndim == 2 else g
        gx = np.empty_like(xv)
        gx[0::2] = g3.real
        gx[1::2] = g3.imag
        return (gx,)

    return _node(out, (x,), bwd)


# ------------------------------------------------------------- encoding ops

def fft2c_op(x):
    return _node(_fft2c_np(x.value), (x,), lambda g: (_ifft2c_np(g),))


def ifft2c_op(x):
    return _node(_ifft2c_np(x.value), (x,), lambda g: (_fft2c_np(g),))


def restrict_rows(x, lines):
    lines = np.asarray(lines, dtype=np.int64)
    n_pe = x.value.shape[-2]

    def bwd(g):
        full = np.zeros(x.value.shape, dtype=g.dtype)
        full[..., lines, :] = g
        return (full,)

    return _node(x.value[..., lines, :], (x,), bwd)


def embed_rows(x, lines, n_pe):
    lines = np.asarray(lines, dtype=np.int64)
    shape = x.value.shape[:-2] + (n_pe,) + x.value.shape[-1:]
    out = np.zeros(shape, dtype=x.value.dtype)
    out[..., lines, :] = x.value
    return _node(out, (x,), lambda g: (g[..., lines, :],))


def mask_rows(x, lines):
    """Zero all rows except `lines` (self-adjoint projection)."""
    lines = np.asarray(lines, dtype=np.int64)
    keep = np.zeros(x.value.shape[-2], dtype=bool)
    keep[lines] = True
    sel = keep[:, None]
    return _node(x.value * sel, (x,), lambda g: (g * sel,))


def sens_expand(x, sens):
    """Image (H, W) -> coil images (C, H, W) via constant maps."""
    sens = np.asarray(sens)
    return _node(sens * x.value[None], (x,), lambda g: (np.sum(np.conj(sens) * g, axis=0),))


def sens_reduce(y, sens):
    """Coil images (C, H, W) -> combined image via conjugate maps."""
    sens = np.asarray(sens)
    return _node(np.sum(np.conj(sens) * y.value, axis=0), (y,), lambda g: (sens * g[None],))


# ------------------------------------------------------------------ scalars

def re_inner(a, b):
    """Real inner product Re<a, b> as a 0-d tensor."""
    av, bv = a.value, b.value
    out = np.asarray(np.real(np.sum(np.conj(av) * bv)))

    def bwd(g):
        return g * bv, g * av

    return _node(out, (a, b), bwd)


def sum_abs(z):
    """Sum of complex (or real) magnitudes; gradient 0 where z = 0."""
    zv = z.value
    mags = np.abs(zv)
    out = np.asarray(mags.sum())

    def bwd(g):
        safe = np.where(mags > 0, mags, 1.0)
        direction = np.where(mags > 0, zv / safe, 0.0)
        return (g * direction,)

    return _node(out, (z,), bwd)


# ------------------------------------------------------------ FD validation

def finite_difference_check(build_loss, params, h=1e-5, n_coords=3, seed=0):
    """Compare analytic gradients against central finite differences.

    build_loss() must rebuild the graph from the current parameter values
    and return the scalar loss tensor. For each parameter, n_coords random
    coordinates are perturbed. Returns the max relative error.
    """
    rng = np.random.default_rng(seed)
    loss = build_loss()
    zero_grads(params)
    backward(loss)
    grads = [None if p.grad is None else p.grad.copy() for p in params]
    worst = 0.0
    for p, g in zip(params, grads):
        if g is None:
            continue
        # 0-d values rebound as numpy scalars cannot be written through a
        # view; coerce back to ndarray so the perturbation lands.
        p.value = np.asarray(p.value)
        flat = p.value.reshape(-1)
        n = flat.size
        coords = rng.choice(n, size=min(n_coords, n), replace=False) if n > 1 else [0]
        steps = [h]
        if p.value.dtype.kind == "c":
            steps.append(1j * h)
        for idx in coords:
            for step in steps:
                orig = flat[idx]
                flat[idx] = orig + step
                up = float(build_loss().value)
                flat[idx] = orig - step
                down = float(build_loss().value)
                flat[idx] = orig
                fd = (up - down) / (2.0 * h)
                gi = g.reshape(-1)[idx]
                an = float(gi.real) if step is steps[0] else float(np.imag(gi))
                denom = max(abs(fd), abs(an), 1e-8)
                worst = max(worst, abs(fd - an) / denom)
    return worst
