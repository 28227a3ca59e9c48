"""Classical reconstruction baselines: zero-filled adjoint, CG-SENSE, TGRAPPA.

All three are frame-independent (no temporal regularization). TGRAPPA
calibrates its interpolation kernel from the sliding-window composite, so it
needs no separate calibration scan.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .composite import combine_coils, form_composite_kspace
from .encoding import apply_E, apply_EH
from .fourier import ifft2c
from .validation import check_coil_maps, check_lines

__all__ = [
    "CgConfig",
    "CgDivergenceWarning",
    "zero_filled",
    "cg_sense",
    "GrappaKernel",
    "grappa_calibrate",
    "grappa_apply",
    "tgrappa_coil_images",
    "tgrappa_recon",
]

_KY_TAPS = (-1, 0, 1, 2)
_KX_TAPS = (-2, -1, 0, 1, 2)


class CgDivergenceWarning(RuntimeWarning):
    """CG residual grew past 10x its starting value."""


@dataclass(frozen=True)
class CgConfig:
    max_iters: int = 30
    rel_tol: float = 1e-6
    mu: float = 0.0

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.rel_tol <= 0:
            raise ValueError("rel_tol must be > 0")
        if self.mu < 0:
            raise ValueError("mu must be >= 0")


def zero_filled(ksp, t):
    """Adjoint reconstruction of frame t."""
    sched = ksp.schedule
    return apply_EH(ksp.data[t], ksp.sens, sched.frame_lines(t))


def cg_sense(y, sens, lines, cfg=CgConfig(), return_info=False):
    """Solve (E^H E + mu*I) x = E^H y by conjugate gradient from x=0.

    Stops when the normal-equation residual falls below rel_tol times its
    starting norm, or at max_iters. Residual growth beyond 10x the start is
    flagged with CgDivergenceWarning and the last iterate is returned.
    """
    sens = check_coil_maps(sens, name="coil maps")
    lines = check_lines(lines, sens.shape[1])

    def normal_op(v):
        out = apply_EH(apply_E(v, sens, lines), sens, lines)
        if cfg.mu > 0:
            out = out + cfg.mu * v
        return out

    b = apply_EH(np.asarray(y, dtype=np.complex128), sens, lines)
    x = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rr = float(np.vdot(r, r).real)
    r0 = np.sqrt(rr)
    history = [r0]
    iterates = [x.copy()] if return_info else None
    diverged = False
    if r0 > 0:
        for _ in range(cfg.max_iters):
            Ap = normal_op(p)
            pAp = float(np.vdot(p, Ap).real)
            if pAp <= 0:
                break
            alpha = rr / pAp
            x = x + alpha * p
            r = r - alpha * Ap
            rr_new = float(np.vdot(r, r).real)
            rnorm = np.sqrt(rr_new)
            history.append(rnorm)
            if return_info:
                iterates.append(x.copy())
            if rnorm > 10.0 * r0:
                diverged = True
                warnings.warn("cg_sense residual grew past 10x its start; returning last iterate", CgDivergenceWarning)
                break
            if rnorm <= cfg.rel_tol * r0:
                rr = rr_new
                break
            p = r + (rr_new / rr) * p
            rr = rr_new
    if return_info:
        return x, {"residuals": np.asarray(history), "iterates": iterates, "diverged": diverged}
    return x


@dataclass(frozen=True)
class GrappaKernel:
    """Interpolation weights per missing offset.

    weights[d] has shape (n_coils * 4 * 5, n_coils): feature order is
    (source coil, ky tap, kx tap) flattened C-style, matching
    _gather_features. ky taps sit at row offsets {-d-R, -d, -d+R, -d+2R}
    relative to the missing row, kx taps at column offsets -2..2.
    """

    R: int
    n_coils: int
    weights: dict

    def __post_init__(self):
        for d, w in self.weights.items():
            if not (1 <= d < self.R):
                raise ValueError(f"offset {d} outside [1, R)")
            if not np.all(np.isfinite(w.view(np.float64))):
                raise ValueError(f"non-finite kernel weights at offset {d}")


def _gather_features(ksp, target_rows, d, R, kx_idx):
    """Source matrix for GRAPPA targets at (target_rows x kx_idx).

    ksp is (coils, rows, cols), already zero-padded so every tap index is in
    range after adding the pad offsets baked into target_rows/kx_idx.
    """
    n_coils = ksp.shape[0]
    rows = np.asarray(target_rows)[:, None] + np.array([-d - R, -d, -d + R, -d + 2 * R])[None, :]
    cols = np.asarray(kx_idx)[:, None] + np.array(_KX_TAPS)[None, :]
    feats = ksp[:, rows[:, :, None, None], cols[None, None, :, :]]  # (coil, row, ky, col, kx)
    feats = np.transpose(feats, (1, 3, 0, 2, 4))  # (row, col, coil, ky, kx)
    return feats.reshape(rows.shape[0] * cols.shape[0], n_coils * len(_KY_TAPS) * len(_KX_TAPS))


def grappa_calibrate(acs, R):
    """Fit interpolation kernels on fully sampled calibration k-space.

    For each missing offset d in 1..R-1, regress the true value at row s+d
    onto the 4x5 all-coil neighborhood of sampled rows {s-R, s, s+R, s+2R},
    with Tikhonov regularization 1e-6 * trace(A^H A) / rows(A).
    """
    acs = np.asarray(acs, dtype=np.complex128)
    if acs.ndim != 3:
        raise ValueError("ACS must be (coils, rows, cols)")
    n_coils, n_acs, n_fe = acs.shape
    if R < 1:
        raise ValueError("R must be >= 1")
    if R == 1:
        return GrappaKernel(R=1, n_coils=n_coils, weights={})
    n_feat = n_coils * len(_KY_TAPS) * len(_KX_TAPS)
    s_lo, s_hi = R, n_acs - 2 * R - 1  # keep all ky taps of every target in range
    kx_lo, kx_hi = 2, n_fe - 3
    n_rows = max(s_hi - s_lo + 1, 0) * max(kx_hi - kx_lo + 1, 0)
    if n_rows < n_feat:
        need = (n_feat + max(kx_hi - kx_lo + 1, 1) - 1) // max(kx_hi - kx_lo + 1, 1) + 3 * R + 1
        raise ValueError(f"underdetermined GRAPPA fit: {n_rows} equations for {n_feat} weights; need ~{need} ACS lines")
    s_rows = np.arange(s_lo, s_hi + 1)
    kx_idx = np.arange(kx_lo, kx_hi + 1)
    weights = {}
    for d in range(1, R):
        targets = s_rows + d
        A = _gather_features(acs, targets, d, R, kx_idx)
        B = acs[:, targets[:, None], kx_idx[None, :]].reshape(n_coils, -1).T
        AHA = A.conj().T @ A
        lam = 1e-6 * np.trace(AHA).real / A.shape[0]
        AHA[np.diag_indices_from(AHA)] += lam
        weights[d] = np.linalg.solve(AHA, A.conj().T @ B)
    return GrappaKernel(R=R, n_coils=n_coils, weights=weights)


def grappa_apply(kernel, zf_ksp, lines):
    """Fill the missing rows of a zero-filled frame; sampled rows untouched."""
    zf = np.asarray(zf_ksp, dtype=np.complex128)
    n_coils, n_pe, n_fe = zf.shape
    if n_coils != kernel.n_coils:
        raise ValueError("coil count mismatch with kernel")
    R = kernel.R
    lines = check_lines(lines, n_pe)
    if R == 1:
        return zf.copy()
    residues = np.bincount(lines % R, minlength=R)
    offset = int(np.argmax(residues))
    # k-space here lives on the discrete torus (circular shifts), so taps wrap
    pad_y, pad_x = 2 * R + 1, 2
    padded = np.pad(zf, ((0, 0), (pad_y, pad_y), (pad_x, pad_x)), mode="wrap")
    sampled = np.zeros(n_pe, dtype=bool)
    sampled[lines] = True
    out = zf.copy()
    kx_idx = np.arange(n_fe) + pad_x
    for d in range(1, R):
        miss = np.array([m for m in range((offset + d) % R, n_pe, R) if not sampled[m]])
        if miss.size == 0:
            continue
        A = _gather_features(padded, miss + pad_y, d, R, kx_idx)
        filled = (A @ kernel.weights[d]).reshape(miss.size, n_fe, n_coils)
        out[:, miss, :] = np.transpose(filled, (2, 0, 1))
    return out


def tgrappa_coil_images(ksp, t0):
    """Per-coil TGRAPPA images of frame t0 (calibrated on the composite)."""
    sched = ksp.schedule
    kernel = grappa_calibrate(form_composite_kspace(ksp, t0), sched.R)
    filled = grappa_apply(kernel, ksp.zero_filled_kspace(t0), sched.frame_lines(t0))
    return ifft2c(filled)


def tgrappa_recon(ksp, t0):
    """TGRAPPA reconstruction of frame t0, sensitivity-combined."""
    return combine_coils(tgrappa_coil_images(ksp, t0), ksp.sens)
