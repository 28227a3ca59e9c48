"""Config-driven pipeline: simulate through evaluate, with stage caching.

A workspace directory accumulates artifacts (OVRT tensors, JSON sidecars,
CSV metrics, PNG panels). Every stage is keyed by a SHA-256 of its config
sections plus the hashes of its upstream stages, so re-running with an
unchanged config is a no-op and any config edit invalidates exactly the
affected suffix of the graph. All randomness derives from the global seed,
making artifacts bitwise reproducible.
"""

import csv
import hashlib
import json
import pathlib

import numpy as np

from . import ghostsep, nn, pddl
from .classical import CgConfig, cg_sense, tgrappa_recon, zero_filled
from .composite import combine_coils, form_composite
from .encoding import KSpaceSeries
from .metrics import MetricsRow, psnr, ssim
from .ovr import make_ovr_mask, subtract_outer_volume, threshold_roi_detect
from .ovrt import read_ovrt, write_ovrt
from .phantom import (
    PhantomConfig,
    make_coil_maps,
    make_phantom,
    noise_sigma_for_snr,
    simulate_acquisition,
)
from .sampling import SamplingSchedule, make_schedule, retro_undersample

__all__ = ["ConfigError", "StageError", "load_config", "run_pipeline", "STAGE_ORDER"]


class ConfigError(Exception):
    """Invalid pipeline configuration."""


class StageError(Exception):
    """A stage failed; carries the stage name."""

    def __init__(self, stage, message):
        super().__init__(f"stage {stage}: {message}")
        self.stage = stage


# ------------------------------------------------------------ configuration

_SCHEMA = {
    "seed": int,
    "phantom": {
        "dims": list,
        "n_frames": int,
        "n_coils": int,
        "snr_db": (int, float, type(None)),
        "heart_radius": (int, float),
        "contraction": (int, float),
        "period": int,
        "rim_intensity": (int, float),
        "drift_amplitude": (int, float),
    },
    "schedule": {
        "R": int,
        "offset0": int,
        "retro_R": (int, type(None)),
    },
    "ghost_net": {
        "width": int,
        "n_blocks": int,
        "lr": (int, float),
        "steps": int,
        "label_source": str,
        "train_frames": (list, type(None)),
    },
    "ovr": {
        "theta": (int, float),
        "margin": int,
        "roi_rows": (list, type(None)),
        "background": str,
        "refresh": str,
    },
    "pddl": {
        "n_unrolls": int,
        "n_cg": int,
        "mu_init": (int, float),
        "width": int,
        "n_blocks": int,
        "k_masks": int,
        "rho": (int, float),
        "lr": (int, float),
        "steps": int,
        "lam": (int, float),
        "consistency": str,
        "train_frames": (list, type(None)),
    },
    "eval": {
        "frames": (list, type(None)),
        "png_frames": list,
        "methods": list,
    },
}

DEFAULT_CONFIG = {
    "seed": 0,
    "phantom": {
        "dims": [64, 64],
        "n_frames": 48,
        "n_coils": 6,
        "snr_db": 30.0,
        "heart_radius": 9.0,
        "contraction": 0.3,
        "period": 12,
        "rim_intensity": 3.0,
        "drift_amplitude": 0.0,
    },
    "schedule": {"R": 4, "offset0": 0, "retro_R": 8},
    "ghost_net": {
        "width": 32,
        "n_blocks": 4,
        "lr": 2e-3,
        "steps": 3000,
        "label_source": "oracle",
        "train_frames": None,
    },
    "ovr": {
        "theta": 0.3,
        "margin": 2,
        "roi_rows": None,
        "background": "net",
        "refresh": "frame",
    },
    "pddl": {
        "n_unrolls": 8,
        "n_cg": 10,
        "mu_init": 0.05,
        "width": 32,
        "n_blocks": 4,
        "k_masks": 3,
        "rho": 0.4,
        "lr": 2e-4,
        "steps": 300,
        "lam": 0.02,
        "consistency": "roi",
        "train_frames": None,
    },
    "eval": {
        "frames": None,
        "png_frames": [6, 24],
        "methods": ["zero-filled", "cgsense", "tgrappa", "pddl-plain", "proposed"],
    },
}


def _validate(cfg, schema, path=""):
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path or 'config'} must be an object")
    for key, value in cfg.items():
        where = f"{path}.{key}" if path else key
        if key not in schema:
            raise ConfigError(f"unknown config key: {where}")
        expected = schema[key]
        if isinstance(expected, dict):
            _validate(value, expected, where)
        elif not isinstance(value, expected):
            raise ConfigError(f"{where}: expected {expected}, got {type(value).__name__}")


def load_config(source=None):
    """Merge a user config (dict or JSON path) over defaults, strictly."""
    merged = json.loads(json.dumps(DEFAULT_CONFIG))
    if source is not None:
        if isinstance(source, (str, pathlib.Path)):
            try:
                user = json.loads(pathlib.Path(source).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read config {source}: {exc}") from exc
        else:
            user = source
        _validate(user, _SCHEMA)
        for key, value in user.items():
            if isinstance(value, dict):
                merged[key].update(value)
            else:
                merged[key] = value
    _validate(merged, _SCHEMA)
    if merged["ovr"]["background"] not in ("net", "oracle", "naive"):
        raise ConfigError("ovr.background must be net, oracle, or naive")
    if merged["ovr"]["refresh"] not in ("frame", "window"):
        raise ConfigError("ovr.refresh must be frame or window")
    if merged["ghost_net"]["label_source"] not in ("oracle", "tgrappa"):
        raise ConfigError("ghost_net.label_source must be oracle or tgrappa")
    return merged


# ----------------------------------------------------------------- plumbing

class Workspace:
    """Artifact and stamp storage under one directory."""

    def __init__(self, root):
        self.root = pathlib.Path(root)
        (self.root / "artifacts").mkdir(parents=True, exist_ok=True)
        (self.root / "stamps").mkdir(parents=True, exist_ok=True)

    def path(self, name):
        return self.root / "artifacts" / name

    def save_tensor(self, name, arr):
        write_ovrt(self.path(name), arr)

    def load_tensor(self, name):
        if not self.path(name).exists():
            raise StageError("?", f"missing upstream artifact {name}; run earlier stages")
        return read_ovrt(self.path(name))

    def save_json(self, name, obj):
        self.path(name).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")

    def load_json(self, name):
        if not self.path(name).exists():
            raise StageError("?", f"missing upstream artifact {name}; run earlier stages")
        return json.loads(self.path(name).read_text())

    def stamp_path(self, stage):
        return self.root / "stamps" / f"{stage}.json"

    def read_stamp(self, stage):
        p = self.stamp_path(stage)
        if not p.exists():
            return None
        return json.loads(p.read_text())

    def write_stamp(self, stage, digest, artifacts):
        self.stamp_path(stage).write_text(
            json.dumps({"hash": digest, "artifacts": artifacts}, indent=2) + "\n"
        )


def _digest(cfg, sections, upstream_hashes):
    payload = {name: cfg[name] for name in sections}
    blob = json.dumps(payload, sort_keys=True) + "|" + "|".join(upstream_hashes)
    blob += f"|seed={cfg['seed']}"
    return hashlib.sha256(blob.encode()).hexdigest()


def _schedule_to_json(sched):
    return {
        "n_pe": sched.n_pe,
        "R": sched.R,
        "T": sched.T,
        "offset0": sched.offset0,
        "center_line": sched.center_line,
        "lines": [list(map(int, sched.frame_lines(t))) for t in range(sched.T)],
        "retained_center": (
            None
            if sched.retained_center is None
            else list(map(int, sched.retained_center))
        ),
    }


def _schedule_from_json(doc):
    return SamplingSchedule(
        n_pe=doc["n_pe"],
        R=doc["R"],
        T=doc["T"],
        lines=tuple(tuple(row) for row in doc["lines"]),
        center_line=doc["center_line"],
        offset0=doc["offset0"],
        retained_center=(
            None
            if doc.get("retained_center") is None
            else tuple(doc["retained_center"])
        ),
    )


def _series_from_cube(cube, sched, sens, truth=None):
    """Rebuild a KSpaceSeries from a zero-filled (T, C, n_pe, n_fe) cube."""
    data = tuple(
        np.ascontiguousarray(cube[t][:, np.asarray(sched.frame_lines(t)), :])
        for t in range(sched.T)
    )
    return KSpaceSeries(data=data, schedule=sched, sens=sens, truth=truth)


def _cube_from_series(series):
    sched = series.schedule
    cube = np.zeros(
        (sched.T, series.n_coils, sched.n_pe, series.dims[1]), dtype=np.complex128
    )
    for t in range(sched.T):
        cube[t][:, np.asarray(sched.frame_lines(t)), :] = series.frame(t)
    return cube


class Context:
    """Lazy handles shared between stage functions."""

    def __init__(self, cfg, ws):
        self.cfg = cfg
        self.ws = ws
        self._cache = {}

    def phantom_truth(self):
        if "truth" not in self._cache:
            ph = self.cfg["phantom"]
            pc = PhantomConfig(
                dims=tuple(ph["dims"]),
                n_frames=ph["n_frames"],
                heart_radius=ph["heart_radius"],
                contraction=ph["contraction"],
                period=ph["period"],
                rim_intensity=ph["rim_intensity"],
                drift_amplitude=ph["drift_amplitude"],
                seed=self.cfg["seed"],
            )
            self._cache["truth"] = make_phantom(pc)
        return self._cache["truth"]

    def sens(self):
        if "sens" not in self._cache:
            self._cache["sens"] = self.ws.load_tensor("sens.ovrt")
        return self._cache["sens"]

    def work_series(self):
        if "work" not in self._cache:
            sched = _schedule_from_json(self.ws.load_json("schedule_work.json"))
            cube = self.ws.load_tensor("ksp_work.ovrt")
            self._cache["work"] = _series_from_cube(
                cube, sched, self.sens(), truth=self.phantom_truth()
            )
        return self._cache["work"]

    def base_series(self):
        if "base" not in self._cache:
            sched = _schedule_from_json(self.ws.load_json("schedule_base.json"))
            cube = self.ws.load_tensor("ksp_base.ovrt")
            self._cache["base"] = _series_from_cube(
                cube, sched, self.sens(), truth=self.phantom_truth()
            )
        return self._cache["base"]

    def ovr_series(self):
        if "ovr" not in self._cache:
            work = self.work_series()
            cube = self.ws.load_tensor("ksp_ovr.ovrt")
            self._cache["ovr"] = _series_from_cube(
                cube, work.schedule, self.sens(), truth=self.phantom_truth()
            )
        return self._cache["ovr"]

    def ovr_mask(self):
        roi = self.ws.load_json("roi.json")
        dims = tuple(self.cfg["phantom"]["dims"])
        return make_ovr_mask(tuple(roi["roi_rows"]), dims, margin=0)

    def truth_frames(self):
        if "truth_frames" not in self._cache:
            self._cache["truth_frames"] = self.ws.load_tensor("truth.ovrt")
        return self._cache["truth_frames"]


# ------------------------------------------------------------------- stages

def _stage_simulate(ctx):
    cfg = ctx.cfg
    truth = ctx.phantom_truth()
    ph, sc = cfg["phantom"], cfg["schedule"]
    dims = tuple(ph["dims"])
    sens = make_coil_maps(ph["n_coils"], dims)
    sched = make_schedule(dims[0], sc["R"], ph["n_frames"], sc["offset0"])
    sigma = 0.0
    if ph["snr_db"] is not None:
        sigma = noise_sigma_for_snr(truth, sens, sched, float(ph["snr_db"]))
    base = simulate_acquisition(truth, sens, sched, noise_sigma=sigma, seed=cfg["seed"])
    ctx.ws.save_tensor("truth.ovrt", np.stack([truth.frame(t) for t in range(sched.T)]))
    ctx.ws.save_tensor("sens.ovrt", sens)
    ctx.ws.save_tensor("ksp_base.ovrt", _cube_from_series(base))
    ctx.ws.save_json("schedule_base.json", _schedule_to_json(sched))
    if sc["retro_R"] is not None:
        work = base.subset(retro_undersample(sched, sc["retro_R"]))
    else:
        work = base
    ctx.ws.save_tensor("ksp_work.ovrt", _cube_from_series(work))
    ctx.ws.save_json("schedule_work.json", _schedule_to_json(work.schedule))
    return [
        "truth.ovrt", "sens.ovrt", "ksp_base.ovrt", "schedule_base.json",
        "ksp_work.ovrt", "schedule_work.json",
    ]


def _stage_composite(ctx):
    work = ctx.work_series()
    comps = np.stack([form_composite(work, t) for t in range(work.n_frames)])
    ctx.ws.save_tensor("composites.ovrt", comps)
    return ["composites.ovrt"]


def _ghost_train_frames(ctx):
    frames = ctx.cfg["ghost_net"]["train_frames"]
    if frames is not None:
        return [int(t) for t in frames]
    T = ctx.cfg["phantom"]["n_frames"]
    hi = max(3, min(T - 14, 2 + 32))
    return list(range(2, hi))


def _stage_ghost_labels(ctx):
    from .composite import decompose_oracle, ghost_reference

    cfg = ctx.cfg["ghost_net"]
    work = ctx.work_series()
    labels = np.zeros(
        (work.n_frames, work.n_coils) + work.dims, dtype=np.complex128
    )
    for t in range(work.n_frames):
        if cfg["label_source"] == "oracle":
            labels[t] = decompose_oracle(
                work.truth, work.schedule, work.sens, t
            ).ghost
        else:
            labels[t] = ghost_reference(
                ctx.base_series(), t, R_target=work.schedule.R
            )[0]
    ctx.ws.save_tensor("ghost_labels.ovrt", labels)
    return ["ghost_labels.ovrt"]


def _stage_ghost_train(ctx):
    cfg = ctx.cfg["ghost_net"]
    work = ctx.work_series()
    labels = ctx.ws.load_tensor("ghost_labels.ovrt")
    t0_list = _ghost_train_frames(ctx)
    samples = []
    from .composite import window_for

    for t0 in t0_list:
        stacks, _ = ghostsep.stack_window(work, t0)
        window = window_for(t0, 4, work.n_frames)
        label = np.stack([labels[tau] for tau in window], axis=1)
        for c in range(work.n_coils):
            samples.append((stacks[c], label[c]))
    net, history = nn.train_ghost_net(
        samples,
        nn.GhostNetConfig(
            width=cfg["width"], n_blocks=cfg["n_blocks"], lr=cfg["lr"],
            steps=cfg["steps"], seed=ctx.cfg["seed"],
        ),
    )
    nn.save_weights(ctx.ws.path("ghost_net.json"), net)
    ctx.ws.save_json("ghost_loss.json", {"loss": history, "train_frames": t0_list})
    return ["ghost_net.json", "ghost_loss.json"]


def _stage_ghost_detect(ctx):
    """Backgrounds per frame plus the detected OVR mask."""
    cfg = ctx.cfg["ovr"]
    work = ctx.work_series()
    comps = ctx.ws.load_tensor("composites.ovrt")
    mode = cfg["background"]
    if mode == "net":
        net, _ = nn.load_weights(ctx.ws.path("ghost_net.json"))
        backgrounds = np.stack(
            [ghostsep.estimate_background(net, work, t) for t in range(work.n_frames)]
        )
    elif mode == "oracle":
        backgrounds = np.stack(
            [ghostsep.oracle_background(work, t) for t in range(work.n_frames)]
        )
    else:
        backgrounds = comps.copy()
    ctx.ws.save_tensor("backgrounds.ovrt", backgrounds)

    if cfg["roi_rows"] is not None:
        lo, hi = (int(v) for v in cfg["roi_rows"])
        detected = None
    else:
        combined = np.stack(
            [np.abs(combine_coils(comps[t], work.sens)) for t in range(work.n_frames)]
        )
        detected = threshold_roi_detect(combined, theta=float(cfg["theta"]))
        lo, hi = detected
    mask = make_ovr_mask((lo, hi), work.dims, margin=int(cfg["margin"]))
    ctx.ws.save_tensor("ovr_mask.ovrt", mask.mask)
    ctx.ws.save_json(
        "roi.json",
        {
            "roi_rows": [int(mask.roi_rows[0]), int(mask.roi_rows[1])],
            "detected": None if detected is None else [int(v) for v in detected],
            "margin": int(cfg["margin"]),
        },
    )
    return ["backgrounds.ovrt", "ovr_mask.ovrt", "roi.json"]


def _background_for_frame(ctx, backgrounds, t, R):
    if ctx.cfg["ovr"]["refresh"] == "frame":
        return backgrounds[t]
    anchor = min((t // R) * R, backgrounds.shape[0] - 1)
    return backgrounds[anchor]


def _stage_ovr_subtract(ctx):
    work = ctx.work_series()
    backgrounds = ctx.ws.load_tensor("backgrounds.ovrt")
    mask = ctx.ovr_mask()
    sched = work.schedule
    cube = np.zeros(
        (sched.T, work.n_coils, sched.n_pe, work.dims[1]), dtype=np.complex128
    )
    for t in range(sched.T):
        lines = np.asarray(sched.frame_lines(t))
        bg = _background_for_frame(ctx, backgrounds, t, sched.R)
        cube[t][:, lines, :] = subtract_outer_volume(work.frame(t), bg, mask, lines)
    ctx.ws.save_tensor("ksp_ovr.ovrt", cube)
    return ["ksp_ovr.ovrt"]


def _pddl_config(ctx, lam):
    p = ctx.cfg["pddl"]
    return pddl.PddlConfig(
        n_unrolls=p["n_unrolls"], n_cg=p["n_cg"], mu_init=p["mu_init"],
        width=p["width"], n_blocks=p["n_blocks"], k_masks=p["k_masks"],
        rho=p["rho"], lr=p["lr"], steps=p["steps"], lam=lam,
        consistency=p["consistency"], seed=ctx.cfg["seed"],
        train_frames=None if p["train_frames"] is None else tuple(p["train_frames"]),
    )


def _stage_pddl_masked(ctx):
    ovr = ctx.ovr_series()
    mask = ctx.ovr_mask()
    from .ovr import mask_sensitivities

    sens_masked = mask_sensitivities(ctx.sens(), mask)
    model, log = pddl.train_pddl(ovr, sens_masked, _pddl_config(ctx, lam=0.0))
    model.save(ctx.ws.path("pddl_masked.json"))
    x_masked = pddl.reconstruct_series(model, ovr, sens_masked)
    ctx.ws.save_tensor("x_masked.ovrt", x_masked)
    ctx.ws.save_json(
        "pddl_masked_log.json",
        {"loss": log.losses, "skipped": log.skipped_steps, "mu": log.mu_final},
    )
    return ["pddl_masked.json", "x_masked.ovrt", "pddl_masked_log.json"]


def _stage_pddl_full(ctx):
    ovr = ctx.ovr_series()
    mask = ctx.ovr_mask()
    x_masked = ctx.ws.load_tensor("x_masked.ovrt")
    cfg = _pddl_config(ctx, lam=float(ctx.cfg["pddl"]["lam"]))
    model, log = pddl.train_pddl(
        ovr, ctx.sens(), cfg, consistency={"x_ref": x_masked, "ovr_mask": mask}
    )
    model.save(ctx.ws.path("pddl_full.json"))
    ctx.ws.save_json(
        "pddl_full_log.json",
        {"loss": log.losses, "skipped": log.skipped_steps, "mu": log.mu_final},
    )
    return ["pddl_full.json", "pddl_full_log.json"]


def _stage_pddl_plain(ctx):
    work = ctx.work_series()
    model, log = pddl.train_pddl(work, ctx.sens(), _pddl_config(ctx, lam=0.0))
    model.save(ctx.ws.path("pddl_plain.json"))
    ctx.ws.save_json(
        "pddl_plain_log.json",
        {"loss": log.losses, "skipped": log.skipped_steps, "mu": log.mu_final},
    )
    return ["pddl_plain.json", "pddl_plain_log.json"]


def _stage_pddl_recon(ctx):
    from .ovr import compose_final

    work = ctx.work_series()
    ovr = ctx.ovr_series()
    mask = ctx.ovr_mask()
    backgrounds = ctx.ws.load_tensor("backgrounds.ovrt")
    full_model = pddl.UnrolledModel.load(ctx.ws.path("pddl_full.json"), _pddl_config(ctx, 0.0))
    plain_model = pddl.UnrolledModel.load(ctx.ws.path("pddl_plain.json"), _pddl_config(ctx, 0.0))
    x_ovr = pddl.reconstruct_series(full_model, ovr, ctx.sens())
    x_plain = pddl.reconstruct_series(plain_model, work, ctx.sens())
    finals = np.zeros_like(x_ovr)
    for t in range(work.n_frames):
        bg = _background_for_frame(ctx, backgrounds, t, work.schedule.R)
        finals[t] = compose_final(x_ovr[t], combine_coils(bg, ctx.sens()), mask)
    ctx.ws.save_tensor("recon_ovr_raw.ovrt", x_ovr)
    ctx.ws.save_tensor("recon_proposed.ovrt", finals)
    ctx.ws.save_tensor("recon_plain.ovrt", x_plain)
    return ["recon_ovr_raw.ovrt", "recon_proposed.ovrt", "recon_plain.ovrt"]


def _stage_recon_tgrappa(ctx):
    work = ctx.work_series()
    recon = np.stack([tgrappa_recon(work, t) for t in range(work.n_frames)])
    ctx.ws.save_tensor("recon_tgrappa.ovrt", recon)
    return ["recon_tgrappa.ovrt"]


def _stage_recon_cgsense(ctx):
    work = ctx.work_series()
    cfg = CgConfig(max_iters=30, rel_tol=1e-6, mu=1e-4)
    recon = np.stack(
        [
            cg_sense(work.frame(t), work.sens, work.schedule.frame_lines(t), cfg)
            for t in range(work.n_frames)
        ]
    )
    ctx.ws.save_tensor("recon_cgsense.ovrt", recon)
    return ["recon_cgsense.ovrt"]


def _stage_recon_zf(ctx):
    work = ctx.work_series()
    recon = np.stack([zero_filled(work, t) for t in range(work.n_frames)])
    ctx.ws.save_tensor("recon_zf.ovrt", recon)
    return ["recon_zf.ovrt"]


_METHOD_ARTIFACTS = {
    "zero-filled": "recon_zf.ovrt",
    "cgsense": "recon_cgsense.ovrt",
    "tgrappa": "recon_tgrappa.ovrt",
    "pddl-plain": "recon_plain.ovrt",
    "pddl-masked": "x_masked.ovrt",
    "proposed": "recon_proposed.ovrt",
}


def _write_png16(path, image, peak):
    """Lossless 16-bit grayscale of |image| / peak, clipped to [0, 1]."""
    from PIL import Image

    mag = np.clip(np.abs(image) / peak, 0.0, 1.0)
    arr = np.round(mag * 65535.0).astype(np.uint16)
    Image.fromarray(arr).save(path)  # uint16 maps to 16-bit grayscale


def _stage_evaluate(ctx):
    cfg = ctx.cfg["eval"]
    truth = ctx.truth_frames()
    roi = tuple(ctx.ws.load_json("roi.json")["roi_rows"])
    frames = cfg["frames"] or list(range(truth.shape[0]))
    rows = []
    recons = {}
    for method in cfg["methods"]:
        if method not in _METHOD_ARTIFACTS:
            raise StageError(
                "evaluate", f"unknown method {method!r}; known: {sorted(_METHOD_ARTIFACTS)}"
            )
        recons[method] = ctx.ws.load_tensor(_METHOD_ARTIFACTS[method])
    for method in cfg["methods"]:
        est = recons[method]
        for t in frames:
            rows.append(
                MetricsRow(
                    frame=int(t),
                    method=method,
                    psnr_db=psnr(truth[t], est[t]),
                    roi_psnr_db=psnr(truth[t], est[t], region=roi),
                    ssim=ssim(np.abs(truth[t]), np.abs(est[t])),
                )
            )
    with open(ctx.ws.path("metrics.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MetricsRow.CSV_HEADER.split(","))
        for row in rows:
            writer.writerow(row.to_csv().split(","))
    artifacts = ["metrics.csv"]
    for t in cfg["png_frames"]:
        t = int(t)
        peak = float(np.abs(truth[t]).max())
        panel = [("truth", truth[t])] + [(m, recons[m][t]) for m in cfg["methods"]]
        stacked = np.concatenate([np.abs(img) for _, img in panel], axis=1)
        name = f"panel_t{t:03d}.png"
        _write_png16(ctx.ws.path(name), stacked, peak)
        artifacts.append(name)
    return artifacts


_STAGES = {
    "simulate": (_stage_simulate, ("phantom", "schedule"), ()),
    "composite": (_stage_composite, (), ("simulate",)),
    "ghost-labels": (_stage_ghost_labels, ("ghost_net",), ("simulate",)),
    "ghost-train": (_stage_ghost_train, ("ghost_net",), ("simulate", "composite", "ghost-labels")),
    "ghost-detect": (_stage_ghost_detect, ("ovr",), ("simulate", "composite", "ghost-train")),
    "ovr-subtract": (_stage_ovr_subtract, ("ovr",), ("simulate", "ghost-detect")),
    "pddl-masked": (_stage_pddl_masked, ("pddl",), ("ovr-subtract", "ghost-detect")),
    "pddl-full": (_stage_pddl_full, ("pddl",), ("ovr-subtract", "ghost-detect", "pddl-masked")),
    "pddl-plain": (_stage_pddl_plain, ("pddl",), ("simulate",)),
    "pddl-recon": (_stage_pddl_recon, ("pddl", "ovr"), ("pddl-full", "pddl-plain", "ghost-detect", "ovr-subtract")),
    "recon-tgrappa": (_stage_recon_tgrappa, (), ("simulate",)),
    "recon-cgsense": (_stage_recon_cgsense, (), ("simulate",)),
    "recon-zf": (_stage_recon_zf, (), ("simulate",)),
    "evaluate": (_stage_evaluate, ("eval",), ("simulate", "ghost-detect", "pddl-recon", "recon-tgrappa", "recon-cgsense", "recon-zf", "pddl-masked")),
}

STAGE_ORDER = (
    "simulate", "composite", "ghost-labels", "ghost-train", "ghost-detect",
    "ovr-subtract", "pddl-masked", "pddl-full", "pddl-plain", "pddl-recon",
    "recon-tgrappa", "recon-cgsense", "recon-zf", "evaluate",
)


def _stage_digest(cfg, stage, ws):
    fn, sections, upstream = _STAGES[stage]
    ups = []
    for dep in upstream:
        stamp = ws.read_stamp(dep)
        ups.append("missing" if stamp is None else stamp["hash"])
    return _digest(cfg, sections, ups)


def run_stage(cfg, ws, stage, force=False):
    """Run one stage if its inputs changed; returns (ran, digest)."""
    if stage not in _STAGES:
        raise ConfigError(f"unknown stage {stage!r}; known: {', '.join(STAGE_ORDER)}")
    fn, _, _ = _STAGES[stage]
    digest = _stage_digest(cfg, stage, ws)
    stamp = ws.read_stamp(stage)
    if (
        not force
        and stamp is not None
        and stamp["hash"] == digest
        and all(ws.path(a).exists() for a in stamp["artifacts"])
    ):
        return False, digest
    ctx = Context(cfg, ws)
    try:
        artifacts = fn(ctx)
    except StageError:
        raise
    except (ValueError, KeyError, OSError) as exc:
        raise StageError(stage, str(exc)) from exc
    ws.write_stamp(stage, digest, artifacts)
    return True, digest


def run_pipeline(cfg, workspace, stage=None, force=False):
    """Run the full stage graph (or one stage). Returns {stage: ran}."""
    ws = Workspace(workspace)
    results = {}
    targets = STAGE_ORDER if stage is None else (stage,)
    for name in targets:
        ran, _ = run_stage(cfg, ws, name, force=force)
        results[name] = ran
    return results
