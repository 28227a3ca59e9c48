"""Residual CNN, Adam, and the normalized losses used for training.

The regularizer network is a plain conv ResNet: an input convolution, a
stack of residual blocks (conv -> relu -> conv, output scaled by 0.1 before
the identity skip), and an output convolution. No biases, no normalization
layers, no output nonlinearity, so all-zero weights give the zero function.
Weights are float64 throughout; training is bitwise deterministic for a
fixed seed because every random draw goes through a seeded Generator and
steps run strictly sequentially.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .ovrt import read_ovrt, write_ovrt

RESIDUAL_SCALE = 0.1


class ResNet:
    """3x3 conv ResNet on channel-stacked real images.

    Hidden convs are He-initialized (std = sqrt(2 / fan_in)) from a seeded
    generator; the output conv starts at zero so an untrained net is the
    zero function and the unrolled reconstruction starts from its plain
    CG baseline instead of an amplified transient. Parameter count is
    (in + out + 2 * n_blocks * width) * width * 9.
    """

    def __init__(self, in_ch, out_ch, width=32, n_blocks=4, seed=0):
        if min(in_ch, out_ch, width, n_blocks) < 1:
            raise ValueError("all ResNet dimensions must be positive")
        self.in_ch = int(in_ch)
        self.out_ch = int(out_ch)
        self.width = int(width)
        self.n_blocks = int(n_blocks)
        rng = np.random.default_rng(seed)

        def he(c_out, c_in):
            std = np.sqrt(2.0 / (c_in * 9))
            return ad.parameter(rng.standard_normal((c_out, c_in, 3, 3)) * std)

        self.w_in = he(width, in_ch)
        self.blocks = [(he(width, width), he(width, width)) for _ in range(n_blocks)]
        self.w_out = ad.parameter(np.zeros((out_ch, width, 3, 3)))

    def parameters(self):
        params = [self.w_in]
        for w1, w2 in self.blocks:
            params.extend((w1, w2))
        params.append(self.w_out)
        return params

    def param_names(self):
        names = ["w_in"]
        for i in range(self.n_blocks):
            names.extend((f"block{i}_conv1", f"block{i}_conv2"))
        names.append("w_out")
        return names

    def n_parameters(self):
        return sum(p.value.size for p in self.parameters())

    def forward(self, x):
        """x: real (in_ch, H, W) tensor -> (out_ch, H, W) tensor."""
        h = ad.conv2d(x, self.w_in)
        for w1, w2 in self.blocks:
            inner = ad.conv2d(ad.relu(ad.conv2d(h, w1)), w2)
            h = ad.add(h, ad.scale(inner, RESIDUAL_SCALE))
        return ad.conv2d(h, self.w_out)

    def __call__(self, x):
        return self.forward(x)


# -------------------------------------------------------------------- adam

@dataclass
class AdamState:
    """Per-parameter first/second moments plus step and skip counters."""

    m: list
    v: list
    t: int = 0
    skipped: int = 0

    @classmethod
    def for_params(cls, params):
        return cls(
            m=[np.zeros_like(p.value, dtype=np.float64) for p in params],
            v=[np.zeros_like(p.value, dtype=np.float64) for p in params],
        )


def adam_step(params, grads, state, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One Adam update in place. Any non-finite gradient skips the whole
    step and increments state.skipped; a missing gradient counts as zero.
    Returns True if the step was applied.
    """
    gs = []
    for p, g in zip(params, grads):
        if p.value.dtype.kind == "c":
            raise ValueError("adam_step handles real parameters only")
        if g is None:
            g = np.zeros_like(p.value, dtype=np.float64)
        if not np.all(np.isfinite(g)):
            state.skipped += 1
            return False
        gs.append(np.asarray(np.real(g), dtype=np.float64))
    state.t += 1
    bc1 = 1.0 - beta1**state.t
    bc2 = 1.0 - beta2**state.t
    for p, g, m, v in zip(params, gs, state.m, state.v):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p.value -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return True


# ------------------------------------------------------------------- losses

def _check_ref(ref):
    ref = np.asarray(ref)
    if ref.size == 0 or not np.all(np.isfinite(ref)):
        raise ValueError("loss reference must be non-empty and finite")
    norm2 = float(np.linalg.norm(ref))
    if norm2 == 0.0:
        raise ValueError("loss reference has zero norm")
    return ref, norm2


def normalized_l2(ref, est):
    """||ref - est||_2 / ||ref||_2 on plain arrays."""
    ref, norm2 = _check_ref(ref)
    return float(np.linalg.norm(ref - np.asarray(est)) / norm2)


def normalized_l1_l2(ref, est):
    """Mean of the normalized l2 and normalized l1 errors on plain arrays."""
    ref, norm2 = _check_ref(ref)
    est = np.asarray(est)
    l2 = np.linalg.norm(ref - est) / norm2
    l1 = np.sum(np.abs(ref - est)) / np.sum(np.abs(ref))
    return float(0.5 * l2 + 0.5 * l1)


def normalized_l2_tape(ref, est):
    """Tape version of normalized_l2; `est` is a Tensor, `ref` an array."""
    ref, norm2 = _check_ref(ref)
    d = ad.sub(est, ad.tensor(ref))
    return ad.sdiv(ad.sqrt_op(ad.re_inner(d, d)), ad.tensor(np.asarray(norm2)))


def normalized_l1_l2_tape(ref, est):
    ref, norm2 = _check_ref(ref)
    norm1 = float(np.sum(np.abs(ref)))
    d = ad.sub(est, ad.tensor(ref))
    l2 = ad.sdiv(ad.sqrt_op(ad.re_inner(d, d)), ad.tensor(np.asarray(norm2)))
    l1 = ad.sdiv(ad.sum_abs(d), ad.tensor(np.asarray(norm1)))
    return ad.scale(ad.add(l2, l1), 0.5)


# -------------------------------------------------------------- persistence

def save_weights(path, net, extra=None):
    """Write network weights as one OVRT blob per parameter + JSON manifest.

    `path` is the manifest path (.json); parameter files sit next to it.
    """
    import pathlib

    path = pathlib.Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    stem = path.stem
    manifest = {
        "in_ch": net.in_ch,
        "out_ch": net.out_ch,
        "width": net.width,
        "n_blocks": net.n_blocks,
        "params": {},
    }
    if extra:
        manifest["extra"] = extra
    for name, p in zip(net.param_names(), net.parameters()):
        fname = f"{stem}__{name}.ovrt"
        write_ovrt(path.parent / fname, np.asarray(p.value, dtype=np.float64))
        manifest["params"][name] = fname
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load_weights(path):
    """Inverse of save_weights. Returns (net, extra_dict)."""
    import pathlib

    path = pathlib.Path(path)
    manifest = json.loads(path.read_text())
    net = ResNet(
        manifest["in_ch"], manifest["out_ch"], manifest["width"], manifest["n_blocks"]
    )
    for name, p in zip(net.param_names(), net.parameters()):
        arr = read_ovrt(path.parent / manifest["params"][name])
        if arr.shape != p.value.shape:
            raise ValueError(f"weight {name}: stored {arr.shape} != expected {p.value.shape}")
        p.value = np.asarray(arr, dtype=np.float64)
    return net, manifest.get("extra", {})


# ---------------------------------------------------------- ghost estimator

@dataclass(frozen=True)
class GhostNetConfig:
    """Training knobs for the ghost-separating CNN."""

    width: int = 32
    n_blocks: int = 4
    n_frames: int = 4
    lr: float = 1e-3
    steps: int = 300
    seed: int = 0

    def __post_init__(self):
        if self.n_frames < 1 or self.width < 1 or self.n_blocks < 1:
            raise ValueError("invalid ghost net dimensions")
        if self.lr <= 0 or self.steps < 1:
            raise ValueError("lr must be positive, steps >= 1")


def train_ghost_net(samples, cfg=GhostNetConfig()):
    """Fit the ghost CNN on (input stack, ghost label) pairs.

    Each sample is a pair of complex (n_frames, H, W) arrays: the network
    input (composite image stack) and the ghost reference. Channels are the
    interleaved real/imaginary parts, so the net maps 2*n_frames -> 2*n_frames
    real channels. Loss is the normalized l2 over the whole output stack.
    Returns (net, loss_history).
    """
    if not samples:
        raise ValueError("need at least one training sample")
    ch = 2 * cfg.n_frames
    for stack, label in samples:
        if stack.shape != label.shape or stack.shape[0] != cfg.n_frames:
            raise ValueError("sample shape mismatch with n_frames")
    net = ResNet(ch, ch, cfg.width, cfg.n_blocks, seed=cfg.seed)
    params = net.parameters()
    state = AdamState.for_params(params)
    order_rng = np.random.default_rng(cfg.seed + 1)
    history = []
    idx = []
    for step in range(cfg.steps):
        if not idx:
            idx = list(order_rng.permutation(len(samples)))
        stack, label = samples[idx.pop()]
        x = ad.complex_to_channels(ad.tensor(stack))
        est = ad.channels_to_complex(net(x))
        loss = normalized_l2_tape(label, est)
        ad.zero_grads(params)
        ad.backward(loss)
        adam_step(params, [p.grad for p in params], state, cfg.lr)
        history.append(float(loss.value))
    return net, history


def apply_ghost_net(net, stack):
    """Run the trained net on one complex (n_frames, H, W) stack."""
    x = ad.complex_to_channels(ad.tensor(np.asarray(stack)))
    return ad.channels_to_complex(net(x)).value
