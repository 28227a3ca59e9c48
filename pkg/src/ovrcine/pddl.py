"""Self-supervised unrolled physics-driven reconstruction.

The network alternates a shared ResNet proximal step with a conjugate
gradient data-fidelity block that solves (E^H E + mu I) x = E^H y + mu z,
all on the autodiff tape so training differentiates through every CG
iteration. Training is multi-mask self-supervised: acquired lines split
into a fidelity set (drives the DF blocks) and a loss set (held out for
the normalized l1-l2 objective). An optional consistency term ties the
full-sensitivity reconstruction to a frozen masked-sensitivity one inside
the region of interest.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from . import nn
from .encoding import apply_EH

__all__ = [
    "PddlConfig",
    "SsduMasks",
    "ssdu_partition",
    "UnrolledModel",
    "unrolled_forward",
    "train_pddl",
    "reconstruct_series",
    "TrainLog",
]


@dataclass(frozen=True)
class PddlConfig:
    """Architecture and training knobs for the unrolled network.

    Desk-scale defaults; full scale (n_unrolls=35, n_blocks=15, width=64)
    stays reachable through the same fields.
    """

    n_unrolls: int = 8
    n_cg: int = 10
    mu_init: float = 0.05
    width: int = 32
    n_blocks: int = 4
    k_masks: int = 3
    rho: float = 0.4
    lr: float = 2e-4
    steps: int = 200
    lam: float = 0.02
    consistency: str = "roi"
    seed: int = 0
    train_frames: tuple | None = None

    def __post_init__(self):
        if min(self.n_unrolls, self.n_cg, self.width, self.n_blocks, self.k_masks) < 1:
            raise ValueError("unroll/cg/width/blocks/masks must be positive")
        if not (0.0 < self.rho < 1.0):
            raise ValueError("rho must lie in (0, 1)")
        if self.mu_init <= 0 or self.lr <= 0 or self.steps < 1 or self.lam < 0:
            raise ValueError("mu_init, lr positive; steps >= 1; lam >= 0")
        if self.consistency not in ("roi", "outer"):
            raise ValueError("consistency must be 'roi' or 'outer'")


# ----------------------------------------------------------- mask partition

@dataclass(frozen=True)
class SsduMasks:
    """Per-frame K-fold partition of acquired lines into (theta, lam)."""

    theta: tuple  # theta[t][k] -> int64 array of k-row indices
    lam: tuple
    k_masks: int
    rho: float
    seed: int


def ssdu_partition(sched, k_masks=3, rho=0.4, seed=0):
    """Split each frame's acquired lines into K disjoint (theta, lam) pairs.

    lam draws floor(rho * (n_lines - 1)) lines uniformly from the acquired
    set minus the retained center line, so the center always stays in the
    fidelity set. Distinct frames and mask indices use independent seeded
    streams. Frames need at least 4 lines and rho large enough for a
    non-empty loss set.
    """
    if not (0.0 < rho < 1.0):
        raise ValueError("rho must lie in (0, 1)")
    theta_all, lam_all = [], []
    for t in range(sched.T):
        lines = np.asarray(sched.frame_lines(t), dtype=np.int64)
        if lines.size < 4:
            raise ValueError(f"frame {t}: need >= 4 acquired lines, got {lines.size}")
        n_lam = int(math.floor(rho * (lines.size - 1)))
        if n_lam < 1:
            raise ValueError(f"frame {t}: rho={rho} leaves an empty loss set")
        center = sched.frame_center_line(t)
        pool = lines[lines != center]
        theta_k, lam_k = [], []
        for k in range(k_masks):
            rng = np.random.default_rng([seed, t, k])
            lam = np.sort(rng.choice(pool, size=n_lam, replace=False))
            theta = np.setdiff1d(lines, lam)
            theta_k.append(theta)
            lam_k.append(lam)
        theta_all.append(tuple(theta_k))
        lam_all.append(tuple(lam_k))
    return SsduMasks(tuple(theta_all), tuple(lam_all), k_masks, rho, seed)


# ------------------------------------------------------------ unrolled net

def _softplus_inv(y):
    return float(y + np.log1p(-np.exp(-y)))


class UnrolledModel:
    """Shared proximal ResNet plus the learned data-fidelity weight.

    mu is reparameterized through softplus, so the effective weight is
    positive for any parameter value. Parameter count is independent of
    n_unrolls (weights are shared across unrolls).
    """

    def __init__(self, cfg=PddlConfig()):
        self.cfg = cfg
        self.net = nn.ResNet(2, 2, cfg.width, cfg.n_blocks, seed=cfg.seed)
        self.theta_mu = ad.parameter(np.asarray(_softplus_inv(cfg.mu_init)))

    def parameters(self):
        return self.net.parameters() + [self.theta_mu]

    @property
    def mu(self):
        return float(np.logaddexp(0.0, self.theta_mu.value))

    def save(self, path):
        nn.save_weights(
            path,
            self.net,
            extra={
                "theta_mu": float(self.theta_mu.value),
                "n_unrolls": self.cfg.n_unrolls,
                "n_cg": self.cfg.n_cg,
            },
        )

    @classmethod
    def load(cls, path, cfg=None):
        net, extra = nn.load_weights(path)
        if cfg is None:
            cfg = PddlConfig(
                width=net.width,
                n_blocks=net.n_blocks,
                n_unrolls=int(extra.get("n_unrolls", 8)),
                n_cg=int(extra.get("n_cg", 10)),
            )
        model = cls(replace(cfg, width=net.width, n_blocks=net.n_blocks))
        model.net = net
        model.theta_mu = ad.parameter(np.asarray(float(extra["theta_mu"])))
        return model


def _ehe(v, sens, lines):
    y = ad.fft2c_op(ad.sens_expand(v, sens))
    return ad.sens_reduce(ad.ifft2c_op(ad.mask_rows(y, lines)), sens)


def _cg_block(x0, rhs, sens, lines, mu, n_iters):
    """n_iters of CG on (E^H E + mu I) x = rhs, warm-started at x0, on tape."""

    def apply_a(v):
        return ad.add(_ehe(v, sens, lines), ad.smul(mu, v))

    x = x0
    r = ad.sub(rhs, apply_a(x))
    p = r
    rr = ad.re_inner(r, r)
    for _ in range(n_iters):
        ap = apply_a(p)
        alpha = ad.sdiv(rr, ad.re_inner(p, ap))
        x = ad.add(x, ad.smul(alpha, p))
        r = ad.sub(r, ad.smul(alpha, ap))
        rr_next = ad.re_inner(r, r)
        beta = ad.sdiv(rr_next, rr)
        p = ad.add(r, ad.smul(beta, p))
        rr = rr_next
    return x


def unrolled_forward(model, y, sens, lines, n_unrolls=None, n_cg=None):
    """Run the unrolled network; returns the output image Tensor (H, W).

    y: measured k-space rows (C, len(lines), n_fe); sens: constant coil
    maps. x_0 is the zero-filled adjoint; each unroll applies the ResNet
    prox then n_cg CG iterations of the data-fidelity subproblem, warm
    started at the previous iterate.
    """
    cfg = model.cfg
    n_unrolls = cfg.n_unrolls if n_unrolls is None else n_unrolls
    n_cg = cfg.n_cg if n_cg is None else n_cg
    lines = np.asarray(lines, dtype=np.int64)
    ehy = apply_EH(np.asarray(y), sens, lines)
    ehy_t = ad.tensor(ehy)
    mu = ad.softplus(model.theta_mu)
    x = ad.tensor(ehy.copy())
    for _ in range(n_unrolls):
        z = ad.channels_to_complex(model.net(ad.complex_to_channels(x)))
        rhs = ad.add(ehy_t, ad.smul(mu, z))
        x = _cg_block(x, rhs, sens, lines, mu, n_cg)
    return x


# ---------------------------------------------------------------- training

@dataclass
class TrainLog:
    losses: list
    skipped_steps: int
    mu_final: float


def _frame_rows(series, t, rows):
    """Extract the k-space rows `rows` from frame t's acquired data."""
    lines = np.asarray(series.schedule.frame_lines(t), dtype=np.int64)
    pos = np.searchsorted(lines, rows)
    if not np.array_equal(lines[pos], rows):
        raise ValueError("requested rows were not acquired in this frame")
    return series.frame(t)[:, pos, :]


def train_pddl(series, sens, cfg=PddlConfig(), consistency=None):
    """Multi-mask self-supervised training over a k-space series.

    consistency, when given, is a dict {"x_ref": (T, H, W) frozen
    reconstruction, "ovr_mask": OvrMask} enabling the extra weighted loss
    term: a second forward pass on all acquired lines, compared against
    x_ref under cfg.consistency ("roi": both restricted to the ROI;
    "outer": the literal form, output masked to the outer region against
    the unrestricted reference). cfg.lam weighs the term. Returns
    (model, TrainLog).
    """
    sched = series.schedule
    frames = tuple(cfg.train_frames) if cfg.train_frames else tuple(range(sched.T))
    for t in frames:
        if not (0 <= t < sched.T):
            raise ValueError(f"train frame {t} outside series")
    if consistency is not None:
        x_ref = np.asarray(consistency["x_ref"])
        mask = consistency["ovr_mask"]
        if x_ref.shape[0] != sched.T:
            raise ValueError("consistency reference must cover every frame")
        outer = mask.mask
        roi = mask.roi_indicator

    masks = ssdu_partition(sched, cfg.k_masks, cfg.rho, cfg.seed)
    model = UnrolledModel(cfg)
    params = model.parameters()
    state = nn.AdamState.for_params(params)
    order_rng = np.random.default_rng(cfg.seed + 1)
    pairs = [(t, k) for t in frames for k in range(cfg.k_masks)]
    log = TrainLog(losses=[], skipped_steps=0, mu_final=model.mu)
    queue = []
    for _ in range(cfg.steps):
        if not queue:
            queue = [pairs[i] for i in order_rng.permutation(len(pairs))]
        t, k = queue.pop()
        theta = masks.theta[t][k]
        lam = masks.lam[t][k]
        y_theta = _frame_rows(series, t, theta)
        x_out = unrolled_forward(model, y_theta, sens, theta)
        est_lam = ad.restrict_rows(ad.fft2c_op(ad.sens_expand(x_out, sens)), lam)
        loss = nn.normalized_l1_l2_tape(_frame_rows(series, t, lam), est_lam)
        if consistency is not None and cfg.lam > 0:
            all_lines = np.asarray(sched.frame_lines(t), dtype=np.int64)
            x_full = unrolled_forward(model, series.frame(t), sens, all_lines)
            if cfg.consistency == "roi":
                cons = nn.normalized_l1_l2_tape(
                    x_ref[t] * roi, ad.scale(x_full, roi)
                )
            else:
                cons = nn.normalized_l1_l2_tape(x_ref[t], ad.scale(x_full, outer))
            loss = ad.add(loss, ad.scale(cons, cfg.lam))
        ad.zero_grads(params)
        ad.backward(loss)
        nn.adam_step(params, [p.grad for p in params], state, cfg.lr)
        log.losses.append(float(loss.value))
    log.skipped_steps = state.skipped
    log.mu_final = model.mu
    return model, log


def reconstruct_series(model, series, sens, frames=None):
    """Full-data forward pass per frame; returns complex (T, H, W)."""
    sched = series.schedule
    frames = range(sched.T) if frames is None else frames
    out = []
    for t in frames:
        lines = np.asarray(sched.frame_lines(t), dtype=np.int64)
        out.append(unrolled_forward(model, series.frame(t), sens, lines).value)
    return np.stack(out)
