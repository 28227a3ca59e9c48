"""Unrolled self-supervised reconstruction: masks, model, training mechanics."""

import numpy as np
import pytest

from ovrcine.encoding import KSpaceSeries, apply_E
from ovrcine.ovr import make_ovr_mask
from ovrcine.pddl import (
    PddlConfig,
    SsduMasks,
    UnrolledModel,
    reconstruct_series,
    ssdu_partition,
    train_pddl,
    unrolled_forward,
)
from ovrcine.pddl import _frame_rows
from ovrcine.phantom import make_coil_maps
from ovrcine.sampling import make_schedule


def _tiny_world(seed=0, dims=(12, 12), R=2, T=4, n_coils=3):
    rng = np.random.default_rng(seed)
    sens = make_coil_maps(n_coils, dims)
    sched = make_schedule(dims[0], R, T)
    yy, xx = np.mgrid[0 : dims[0], 0 : dims[1]]
    frames = []
    for t in range(T):
        img = np.exp(-((yy - 6) ** 2 + (xx - 6) ** 2) / (8.0 + t)) * (1.0 + 0.1j)
        img += 0.05 * (rng.normal(size=dims) + 1j * rng.normal(size=dims))
        frames.append(img)
    data = tuple(apply_E(frames[t], sens, sched.frame_lines(t)) for t in range(T))
    return KSpaceSeries(data=data, schedule=sched, sens=sens), sens, np.stack(frames)


def test_config_validation():
    with pytest.raises(ValueError):
        PddlConfig(rho=0.0)
    with pytest.raises(ValueError):
        PddlConfig(rho=1.0)
    with pytest.raises(ValueError):
        PddlConfig(consistency="inside")
    with pytest.raises(ValueError):
        PddlConfig(lam=-0.1)
    with pytest.raises(ValueError):
        PddlConfig(n_unrolls=0)
    with pytest.raises(ValueError):
        PddlConfig(mu_init=0.0)


def test_partition_invariants_every_frame(desk, desk8):
    for sched in (desk["sched4"], desk8["sched8"]):
        masks = ssdu_partition(sched, k_masks=3, rho=0.4, seed=0)
        for t in range(sched.T):
            lines = sched.frame_lines(t)
            n_lam = int(np.floor(0.4 * (lines.size - 1)))
            center = sched.frame_center_line(t)
            for k in range(3):
                theta, lam = masks.theta[t][k], masks.lam[t][k]
                assert np.array_equal(np.union1d(theta, lam), lines)
                assert np.intersect1d(theta, lam).size == 0
                assert lam.size == n_lam >= 1
                assert center in theta
            assert any(
                not np.array_equal(masks.lam[t][0], masks.lam[t][k]) for k in (1, 2)
            )


def test_partition_determinism_and_seed_sensitivity(desk):
    sched = desk["sched4"]
    a = ssdu_partition(sched, 3, 0.4, seed=2)
    b = ssdu_partition(sched, 3, 0.4, seed=2)
    c = ssdu_partition(sched, 3, 0.4, seed=3)
    for t in range(sched.T):
        for k in range(3):
            assert np.array_equal(a.lam[t][k], b.lam[t][k])
    assert any(
        not np.array_equal(a.lam[t][k], c.lam[t][k])
        for t in range(sched.T)
        for k in range(3)
    )


def test_partition_rejects_degenerate_setups():
    few = make_schedule(8, 4, 4)  # 2 lines per frame
    with pytest.raises(ValueError, match=">= 4"):
        ssdu_partition(few, 3, 0.4)
    sched = make_schedule(32, 2, 4)
    with pytest.raises(ValueError, match="empty loss set"):
        ssdu_partition(sched, 3, 0.05)
    with pytest.raises(ValueError, match="rho"):
        ssdu_partition(sched, 3, 1.5)


def test_model_mu_reparameterization():
    model = UnrolledModel(PddlConfig(width=4, n_blocks=1, mu_init=0.05))
    assert abs(model.mu - 0.05) < 1e-12
    assert len(model.parameters()) == len(model.net.parameters()) + 1
    model.theta_mu.value -= 100.0
    assert model.mu > 0.0


def test_model_save_load_round_trip(tmp_path):
    cfg = PddlConfig(width=4, n_blocks=1, n_unrolls=3, n_cg=5, mu_init=0.2)
    model = UnrolledModel(cfg)
    rng = np.random.default_rng(0)
    for p in model.net.parameters():
        p.value = rng.normal(size=p.value.shape)
    model.save(tmp_path / "model.json")
    loaded = UnrolledModel.load(tmp_path / "model.json")
    assert abs(loaded.mu - model.mu) < 1e-12
    assert loaded.cfg.n_unrolls == 3 and loaded.cfg.n_cg == 5
    for pa, pb in zip(model.net.parameters(), loaded.net.parameters()):
        assert np.array_equal(pa.value, pb.value)


def test_untrained_forward_solves_tikhonov(rng):
    # zero-init prox makes every unroll a pure data-fidelity solve, and the
    # warm start accumulates CG iterations across unrolls
    series, sens, frames = _tiny_world()
    sched = series.schedule
    cfg = PddlConfig(width=4, n_blocks=1, n_unrolls=4, n_cg=15, mu_init=0.05)
    model = UnrolledModel(cfg)
    lines = sched.frame_lines(0)
    x = unrolled_forward(model, series.frame(0), sens, lines).value

    n = 12 * 12
    A = np.zeros((3 * lines.size * 12, n), dtype=np.complex128)
    for j in range(n):
        e = np.zeros(n, dtype=np.complex128)
        e[j] = 1.0
        A[:, j] = apply_E(e.reshape(12, 12), sens, lines).ravel()
    rhs = A.conj().T @ series.frame(0).ravel()
    x_dense = np.linalg.solve(A.conj().T @ A + 0.05 * np.eye(n), rhs).reshape(12, 12)
    assert np.max(np.abs(x - x_dense)) < 1e-6


def test_frame_rows_validates_membership():
    series, _, _ = _tiny_world()
    lines = series.schedule.frame_lines(1)
    rows = _frame_rows(series, 1, lines[:2])
    assert rows.shape == (3, 2, 12)
    with pytest.raises(ValueError, match="not acquired"):
        _frame_rows(series, 1, np.array([lines[0] + 1]))


def _train_cfg(steps=4, lam=0.0, **kw):
    return PddlConfig(
        n_unrolls=2, n_cg=3, width=4, n_blocks=1, k_masks=2, rho=0.4,
        lr=1e-3, steps=steps, lam=lam, seed=0, **kw,
    )


def test_training_is_deterministic():
    series, sens, _ = _tiny_world()
    model_a, log_a = train_pddl(series, sens, _train_cfg())
    model_b, log_b = train_pddl(series, sens, _train_cfg())
    assert log_a.losses == log_b.losses
    assert log_a.skipped_steps == 0
    assert log_a.mu_final > 0
    for pa, pb in zip(model_a.parameters(), model_b.parameters()):
        assert np.array_equal(pa.value, pb.value)


def test_lam_zero_equals_no_consistency():
    series, sens, frames = _tiny_world()
    mask = make_ovr_mask((4, 8), (12, 12), margin=0)
    cons = {"x_ref": frames, "ovr_mask": mask}
    _, log_none = train_pddl(series, sens, _train_cfg(lam=0.0))
    model, log_zero = train_pddl(series, sens, _train_cfg(lam=0.0), consistency=cons)
    assert log_none.losses == log_zero.losses


def test_consistency_term_modes_differ():
    series, sens, frames = _tiny_world()
    mask = make_ovr_mask((4, 8), (12, 12), margin=0)
    cons = {"x_ref": frames, "ovr_mask": mask}
    _, log_plain = train_pddl(series, sens, _train_cfg(steps=3))
    _, log_roi = train_pddl(series, sens, _train_cfg(steps=3, lam=0.1), consistency=cons)
    _, log_outer = train_pddl(
        series, sens, _train_cfg(steps=3, lam=0.1, consistency="outer"), consistency=cons
    )
    assert log_roi.losses != log_plain.losses
    assert log_roi.losses != log_outer.losses


def test_training_validates_inputs():
    series, sens, frames = _tiny_world()
    with pytest.raises(ValueError, match="outside series"):
        train_pddl(series, sens, _train_cfg(train_frames=(0, 9)))
    mask = make_ovr_mask((4, 8), (12, 12), margin=0)
    with pytest.raises(ValueError, match="every frame"):
        train_pddl(
            series, sens, _train_cfg(lam=0.1),
            consistency={"x_ref": frames[:2], "ovr_mask": mask},
        )


def test_reconstruct_series_shapes():
    series, sens, _ = _tiny_world()
    model = UnrolledModel(_train_cfg())
    out = reconstruct_series(model, series, sens)
    assert out.shape == (4, 12, 12) and out.dtype == np.complex128
    sub = reconstruct_series(model, series, sens, frames=[1, 3])
    assert sub.shape == (2, 12, 12)
    assert np.array_equal(sub[0], out[1]) and np.array_equal(sub[1], out[3])
