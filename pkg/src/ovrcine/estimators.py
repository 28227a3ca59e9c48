"""Estimator-style wrappers around the functional core.

These follow the scikit-learn conventions (constructor stores hyper-
parameters verbatim, fit learns state into trailing-underscore attributes,
get_params/set_params/clone work) so the pipeline pieces compose with
standard tooling. The domain objects (KSpaceSeries, coil maps) are richer
than feature matrices, so fit/predict take them directly instead of 2-D
arrays; input validation happens in the wrapped functions.
"""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from . import nn, pddl
from .classical import CgConfig, cg_sense, tgrappa_recon
from .encoding import KSpaceSeries

__all__ = [
    "GhostSeparator",
    "CgSenseReconstructor",
    "TgrappaReconstructor",
    "UnrolledReconstructor",
]


def _check_fitted(est, attr):
    if not hasattr(est, attr):
        raise NotFittedError(
            f"{type(est).__name__} is not fitted yet; call fit before predict"
        )


def _check_series(X):
    if not isinstance(X, KSpaceSeries):
        raise TypeError(f"expected a KSpaceSeries, got {type(X).__name__}")
    return X


class GhostSeparator(BaseEstimator):
    """Learns the ghost component of composite image stacks.

    fit(X, y): X is a list of complex (4, H, W) input stacks, y the matching
    ghost label stacks (as built by ghostsep.build_ghost_dataset). predict(X)
    returns the estimated ghost stacks.
    """

    def __init__(self, width=32, n_blocks=4, lr=1e-3, steps=300, seed=0):
        self.width = width
        self.n_blocks = n_blocks
        self.lr = lr
        self.steps = steps
        self.seed = seed

    def fit(self, X, y):
        if len(X) != len(y):
            raise ValueError("inputs and labels differ in length")
        cfg = nn.GhostNetConfig(
            width=self.width, n_blocks=self.n_blocks, lr=self.lr,
            steps=self.steps, seed=self.seed,
        )
        self.net_, self.loss_history_ = nn.train_ghost_net(list(zip(X, y)), cfg)
        return self

    def predict(self, X):
        _check_fitted(self, "net_")
        return [nn.apply_ghost_net(self.net_, stack) for stack in X]

    def score(self, X, y):
        """Negative mean normalized l2 residual (higher is better)."""
        _check_fitted(self, "net_")
        residuals = [
            nn.normalized_l2(label, est) for label, est in zip(y, self.predict(X))
        ]
        return -float(np.mean(residuals))


class CgSenseReconstructor(BaseEstimator):
    """Frame-by-frame CG-SENSE. Stateless apart from config; fit validates
    coil maps and records dimensions."""

    def __init__(self, max_iters=30, rel_tol=1e-6, mu=0.0):
        self.max_iters = max_iters
        self.rel_tol = rel_tol
        self.mu = mu

    def fit(self, X, y=None):
        X = _check_series(X)
        self.dims_ = X.dims
        return self

    def predict(self, X, frames=None):
        _check_fitted(self, "dims_")
        X = _check_series(X)
        cfg = CgConfig(max_iters=self.max_iters, rel_tol=self.rel_tol, mu=self.mu)
        frames = range(X.n_frames) if frames is None else frames
        return np.stack(
            [
                cg_sense(X.frame(t), X.sens, X.schedule.frame_lines(t), cfg)
                for t in frames
            ]
        )

    def fit_predict(self, X, y=None):
        return self.fit(X).predict(X)


class TgrappaReconstructor(BaseEstimator):
    """TGRAPPA: composite-calibrated GRAPPA fill plus coil combination."""

    def fit(self, X, y=None):
        X = _check_series(X)
        self.dims_ = X.dims
        return self

    def predict(self, X, frames=None):
        _check_fitted(self, "dims_")
        X = _check_series(X)
        frames = range(X.n_frames) if frames is None else frames
        return np.stack([tgrappa_recon(X, t) for t in frames])

    def fit_predict(self, X, y=None):
        return self.fit(X).predict(X)


class UnrolledReconstructor(BaseEstimator):
    """Self-supervised unrolled reconstruction over a k-space series.

    fit(X) trains on the series itself (no labels); sens overrides the
    series' maps (e.g. masked maps), and consistency_ref/consistency_mask
    enable the extra loss term. predict(X) reconstructs frames with the
    trained weights.
    """

    def __init__(
        self,
        n_unrolls=8,
        n_cg=10,
        mu_init=0.05,
        width=32,
        n_blocks=4,
        k_masks=3,
        rho=0.4,
        lr=2e-4,
        steps=200,
        lam=0.02,
        consistency="roi",
        seed=0,
        train_frames=None,
    ):
        self.n_unrolls = n_unrolls
        self.n_cg = n_cg
        self.mu_init = mu_init
        self.width = width
        self.n_blocks = n_blocks
        self.k_masks = k_masks
        self.rho = rho
        self.lr = lr
        self.steps = steps
        self.lam = lam
        self.consistency = consistency
        self.seed = seed
        self.train_frames = train_frames

    def _config(self):
        return pddl.PddlConfig(
            n_unrolls=self.n_unrolls, n_cg=self.n_cg, mu_init=self.mu_init,
            width=self.width, n_blocks=self.n_blocks, k_masks=self.k_masks,
            rho=self.rho, lr=self.lr, steps=self.steps, lam=self.lam,
            consistency=self.consistency, seed=self.seed,
            train_frames=self.train_frames,
        )

    def fit(self, X, y=None, sens=None, consistency_ref=None, consistency_mask=None):
        X = _check_series(X)
        self.sens_ = X.sens if sens is None else np.asarray(sens)
        cons = None
        if consistency_ref is not None:
            if consistency_mask is None:
                raise ValueError("consistency_ref needs consistency_mask")
            cons = {"x_ref": consistency_ref, "ovr_mask": consistency_mask}
        self.model_, self.log_ = pddl.train_pddl(X, self.sens_, self._config(), cons)
        return self

    def predict(self, X, frames=None):
        _check_fitted(self, "model_")
        X = _check_series(X)
        return pddl.reconstruct_series(self.model_, X, self.sens_, frames)


def zero_filled_series(X, frames=None):
    """Adjoint (zero-filled) baseline for a series (utility, not an
    estimator; kept here so baselines line up in one import)."""
    from .classical import zero_filled

    X = _check_series(X)
    frames = range(X.n_frames) if frames is None else frames
    return np.stack([zero_filled(X, t) for t in frames])
