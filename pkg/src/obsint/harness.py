"""Built-in scenarios, flat-key configuration and run artefacts.

A scenario is a dict of dotted keys with default values. User configs are JSON
objects using the same keys; unknown keys are rejected. Every run writes the
resolved config (with its SHA-256), a CSV per record, SVG plots and a
``metrics.json`` summary into the output directory.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import freq, observer, quadrotor
from .ekf import KfModel, run_baseline
from .observer import RampEps
from .record import RunRecord, export_csv, export_svg_plot, rms, trend_slope
from .signals import NoiseSpec, PulseNoise, RandomNoise, SignalSource, analytic_truth


class ConfigError(ValueError):
    pass


class ScenarioDiverged(RuntimeError):
    """Raised after artefacts of a diverged closed-loop run have been written."""

    def __init__(self, message: str, result: "ScenarioResult"):
        super().__init__(message)
        self.result = result


_NOISE4 = {
    "noise.random.mean": 0.0,
    "noise.random.variance": 0.01,
    "noise.pulse.amplitude": 0.5,
    "noise.pulse.period": 2.0,
    "noise.pulse.width": 1.0,
    "noise.pulse.width_unit": "percent",
    "noise.pulse.phase_delay": 0.0,
}


def _integ(kind: str, duration: float) -> dict:
    if kind == "onefold":
        base = {"observer.kind": "onefold", "observer.k": [2.0, 2.7783], "observer.eps": 0.1667,
                "observer.x0": [0.5, 2.0], "signal.base": "a02", "signal.truths": ["a01", "a02"]}
    else:
        base = {"observer.kind": "double", "observer.k": [0.5, 2.5, 3.0], "observer.eps": 0.4,
                "observer.x0": [0.1, -1.1, 0.1], "signal.base": "a03",
                "signal.truths": ["a01", "a02", "a03"]}
    return {
        "duration": duration, "dt": 1e-3, "seed": 0,
        "record_every": 10 if duration <= 100 else 100,
        **base, **_NOISE4,
        "kf.enabled": True, "kf.process_noise": 1e-4, "kf.meas_noise_var": 0.0,
        "metrics.settle": 50.0, "metrics.drift_window": 1000.0,
    }


def _bode(kind: str) -> dict:
    if kind == "diffint":
        k, n, p = [0.1, 3.0, 2.0], 3, 2
    else:
        k, n, p = [0.01, 0.1, 3.0, 2.0], 4, 3
    return {"observer.n": n, "observer.p": p, "observer.k": k, "observer.eps_values": [0.1, 0.2],
            "omega.min": 1e-3, "omega.max": 1e3, "omega.points": 400, "metrics.band_tol": 0.05}


def _quad(duration: float) -> dict:
    p = quadrotor.QuadParams()
    cfg = {"duration": duration, "dt": 1e-3, "seed": 0, "record_every": 100}
    cfg.update({f"quad.params.{k}": v for k, v in p.__dict__.items()})
    cfg.update({
        "quad.kp1": 16.0, "quad.kp2": 8.0, "quad.ka1": 28.0, "quad.ka2": 8.0,
        "quad.pos_k": [6.0, 11.0, 6.0], "quad.pos_eps_rate": 5.0, "quad.pos_eps_cap": 5.0,
        "quad.att_k": [0.1, 2.0, 1.0], "quad.att_eps": 1.0 / 3.0,
        "quad.x0": list(quadrotor.DEFAULT_X0), "quad.obs_x0": list(quadrotor.DEFAULT_OBS_X0),
        "quad.h0": 30.0, "quad.a": 5.0, "quad.km": 0.005,
        "quad.disturbance": True,
        "quad.noise.enabled": True, "quad.noise.random.variance": 0.001,
        "quad.noise.pulse.amplitude": 0.001, "quad.noise.pulse.period": 1.0,
        "quad.noise.pulse.width": 1.0, "quad.noise.pulse.width_unit": "percent",
        "quad.thrust_model": "vector", "quad.feedforward": "filtered", "quad.kf.enabled": True,
        "metrics.settle": 10.0, "metrics.drift_window": min(1000.0, duration / 2),
    })
    return cfg


SCENARIOS = {
    "integ1-100s": _integ("onefold", 100.0),
    "integ1-2000s": _integ("onefold", 2000.0),
    "integ2-100s": _integ("double", 100.0),
    "integ2-2000s": _integ("double", 2000.0),
    "bode-diffint": _bode("diffint"),
    "bode-diffdouble": _bode("diffdouble"),
    "quad-50s": _quad(50.0),
    "quad-1000s": _quad(1000.0),
}

DESCRIPTIONS = {
    "integ1-100s": "onefold integrator on noisy cos(t) vs Kalman baseline, 100 s",
    "integ1-2000s": "onefold integrator drift comparison, 2000 s",
    "integ2-100s": "double integrator on noisy -sin(t) vs Kalman baseline, 100 s",
    "integ2-2000s": "double integrator drift comparison, 2000 s",
    "bode-diffint": "frequency response of the (n=3, p=2) observer at eps 0.1 and 0.2",
    "bode-diffdouble": "frequency response of the (n=4, p=3) observer at eps 0.1 and 0.2",
    "quad-50s": "quadrotor take-off with observer-based tracking control, 50 s",
    "quad-1000s": "quadrotor long run for attitude-estimate drift, 1000 s",
}


def resolve_config(scenario: str, overrides: dict | None = None, seed: int | None = None) -> dict:
    """Defaults of ``scenario`` updated with ``overrides`` after key/type checks."""
    if scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario!r}; available: {', '.join(SCENARIOS)}")
    cfg = dict(SCENARIOS[scenario])
    for key, value in (overrides or {}).items():
        if key == "scenario":
            if value != scenario:
                raise ConfigError(f"config is for scenario {value!r}, not {scenario!r}")
            continue
        if key not in cfg:
            raise ConfigError(f"unknown config key {key!r} for {scenario}")
        cfg[key] = _coerce(key, value, cfg[key])
    if seed is not None and "seed" in cfg:
        cfg["seed"] = int(seed)
    return cfg


def _coerce(key, value, default):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{key} must be true or false")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key} must be an integer")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            raise ConfigError(f"{key} must be a finite number")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{key} must be a string")
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"{key} must be a list")
        if default and all(isinstance(v, str) for v in default):
            return [str(v) for v in value]
        if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
            raise ConfigError(f"{key} must be a list of numbers")
        return [float(v) for v in value]
    return value


def load_config(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a JSON object of dotted keys")
    return data


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()


@dataclass
class ScenarioResult:
    scenario: str
    config: dict
    records: dict[str, RunRecord]
    metrics: dict
    files: list[Path] = field(default_factory=list)


def _noise(cfg: dict, prefix: str, seed: int, dt: float) -> NoiseSpec:
    rnd = RandomNoise(cfg.get(f"{prefix}.random.mean", 0.0), cfg[f"{prefix}.random.variance"], seed, dt)
    pulse = PulseNoise(cfg[f"{prefix}.pulse.amplitude"], cfg[f"{prefix}.pulse.period"],
                       cfg[f"{prefix}.pulse.width"], cfg.get(f"{prefix}.pulse.phase_delay", 0.0),
                       cfg[f"{prefix}.pulse.width_unit"])
    return NoiseSpec(rnd, pulse)


def _run_integ(cfg: dict) -> tuple[dict, dict]:
    k, eps = cfg["observer.k"], cfg["observer.eps"]
    spec = observer.preset_onefold(*k, eps) if cfg["observer.kind"] == "onefold" else observer.preset_double(*k, eps)
    dt, duration, every = cfg["dt"], cfg["duration"], cfg["record_every"]
    noise = _noise(cfg, "noise", cfg["seed"], dt)
    src = SignalSource(cfg["signal.base"], noise)
    rec = observer.run(spec, src, cfg["observer.x0"], duration, dt, every)
    truths = cfg["signal.truths"]
    t = rec.t
    extra = {f"truth{i}": analytic_truth(name, t) for i, name in enumerate(truths, start=1)}
    rec = rec.with_columns(**extra)
    m = spec.n
    if cfg["kf.enabled"]:
        r_var = cfg["kf.meas_noise_var"] or noise.variance
        model = KfModel(m, cfg["kf.process_noise"] * np.eye(m), r_var, spec.p)
        kf = run_baseline(model, src, duration, dt, mean0=cfg["observer.x0"], record_every=every)
        rec = rec.with_columns(**{f"kf{i}": kf[f"kf{i}"] for i in range(1, m + 1)})

    metrics = {}
    # runs shorter than the settle time are summarised over their second half
    settled = rec.window(min(cfg["metrics.settle"], duration / 2))
    drift = rec.window(max(0.0, duration - cfg["metrics.drift_window"]))
    if duration <= cfg["metrics.drift_window"]:
        drift = rec.window(duration / 2)
    for i in range(1, m + 1):
        err = settled[f"x{i}"] - settled[f"truth{i}"]
        metrics[f"observer.rms_err_x{i}"] = rms(err)
        metrics[f"observer.max_err_x{i}"] = float(np.max(np.abs(err)))
        metrics[f"observer.drift_slope_x{i}"] = trend_slope(drift.t, drift[f"x{i}"] - drift[f"truth{i}"])
        if cfg["kf.enabled"]:
            kerr = settled[f"kf{i}"] - settled[f"truth{i}"]
            metrics[f"kf.rms_err_x{i}"] = rms(kerr)
            metrics[f"kf.drift_slope_x{i}"] = trend_slope(drift.t, drift[f"kf{i}"] - drift[f"truth{i}"])
    metrics["settle_from"] = float(settled.t[0])
    metrics["drift_window"] = [float(drift.t[0]), float(drift.t[-1])]
    metrics["noise_mean"] = noise.mean
    return {"run": rec}, metrics


def _run_bode(cfg: dict) -> tuple[dict, dict]:
    omega = np.logspace(math.log10(cfg["omega.min"]), math.log10(cfg["omega.max"]), cfg["omega.points"])
    records, metrics = {}, {}
    n, p = cfg["observer.n"], cfg["observer.p"]
    for eps in cfg["observer.eps_values"]:
        spec = observer.make_spec(n, p, cfg["observer.k"], eps)
        tag = f"eps{eps:g}"
        records[tag] = freq.bode_record(spec.gains, omega)
        for j in range(1, n + 1):
            band = freq.usable_band(spec.gains, j, omega, cfg["metrics.band_tol"])
            metrics[f"{tag}.usable_band_x{j}"] = list(band) if band else None
    return records, metrics


def quad_kwargs(cfg: dict) -> dict:
    """Keyword arguments of :func:`quadrotor.simulate_closed_loop` for a quad config."""
    params = quadrotor.QuadParams(**{k.split(".")[-1]: v for k, v in cfg.items() if k.startswith("quad.params.")})
    gains = quadrotor.QuadGains(
        cfg["quad.kp1"], cfg["quad.kp2"], cfg["quad.ka1"], cfg["quad.ka2"],
        tuple(cfg["quad.pos_k"]), RampEps(cfg["quad.pos_eps_rate"], cfg["quad.pos_eps_cap"]),
        tuple(cfg["quad.att_k"]), cfg["quad.att_eps"],
    )
    noise = _noise(cfg, "quad.noise", cfg["seed"], cfg["dt"]) if cfg["quad.noise.enabled"] else None
    dist = quadrotor.DisturbanceSpec.sinusoidal() if cfg["quad.disturbance"] else quadrotor.DisturbanceSpec()
    return dict(params=params, dist=dist, noise=noise, duration=cfg["duration"], dt=cfg["dt"],
                seed=cfg["seed"], x0=quadrotor.state_from_interleaved(cfg["quad.x0"]),
                obs_x0=cfg["quad.obs_x0"], gains=gains,
                reference=quadrotor.Reference(cfg["quad.h0"], cfg["quad.a"], cfg["quad.km"]),
                thrust_model=cfg["quad.thrust_model"], feedforward=cfg["quad.feedforward"],
                kf_baseline=cfg["quad.kf.enabled"], record_every=cfg["record_every"])


def quad_metrics(rec: RunRecord, settle: float = 10.0, drift_window: float = 500.0,
                 h0: float = 30.0) -> dict:
    """Tracking, estimation and drift figures of a closed-loop record."""
    t_end = float(rec.t[-1]) if len(rec) else 0.0
    m = {"t_end": t_end, "diverged_at": rec.meta.get("diverged_at")}
    if len(rec) == 0:
        return m
    last = rec.window(t_end)
    m["final_position_error"] = float(np.sqrt(last["x"][0] ** 2 + last["y"][0] ** 2 + (last["z"][0] - h0) ** 2))
    m["saturation_fraction"] = float(np.mean(rec["saturated"]))
    est = rec.window(settle)
    drift = rec.window(max(0.0, t_end - drift_window))
    for i, name in enumerate(["psi", "theta", "phi"]):
        m[f"final_abs_{name}"] = float(abs(last[name][0]))
        if len(est):
            m[f"max_est_err_{name}"] = float(np.max(np.abs(est[f"o{4 + i}_1"] - est[name])))
        if len(drift) > 2:
            m[f"observer.drift_slope_{name}"] = trend_slope(drift.t, drift[f"o{4 + i}_1"] - drift[name])
            if not np.all(np.isnan(drift[f"kf_{name}"])):
                m[f"kf.drift_slope_{name}"] = trend_slope(drift.t, drift[f"kf_{name}"] - drift[name])
    return m


def _run_quad(cfg: dict) -> tuple[dict, dict]:
    kw = quad_kwargs(cfg)
    rec = quadrotor.simulate_closed_loop(**kw, on_divergence="truncate")
    metrics = quad_metrics(rec, cfg["metrics.settle"], cfg["metrics.drift_window"], cfg["quad.h0"])
    metrics["linear_loops"] = quadrotor.loop_report(kw["gains"])
    return {"run": rec}, metrics


def _plots(scenario: str, records: dict, out: Path) -> list[Path]:
    files = []
    if scenario.startswith("integ"):
        rec = records["run"]
        m = sum(1 for c in rec.columns if c.startswith("truth"))
        for i in range(1, m + 1):
            cols = [f"x{i}", f"truth{i}"] + ([f"kf{i}"] if f"kf{i}" in rec.columns else [])
            files.append(export_svg_plot(rec, cols, out / f"{scenario}-x{i}.svg", dashed=[f"truth{i}"],
                                         title=f"{scenario}: state x{i}"))
    elif scenario.startswith("bode"):
        for tag, rec in records.items():
            g = rec.meta
            spec = observer.make_spec(g["n"], g["p"], g["k"], g["eps"])
            path = out / f"{scenario}-{tag}.svg"
            freq.export_bode_svg(spec.gains, path, rec["omega"])
            files.append(path)
    else:
        rec = records["run"]
        if len(rec):
            files.append(export_svg_plot(rec, ["x", "y", "z", "zd"], out / f"{scenario}-position.svg",
                                         dashed=["zd"], title=f"{scenario}: position"))
            files.append(export_svg_plot(rec, ["psi", "o4_1", "kf_psi", "theta", "o5_1", "kf_theta",
                                               "phi", "o6_1", "kf_phi"],
                                         out / f"{scenario}-attitude.svg", dashed=["o4_1", "o5_1", "o6_1"],
                                         title=f"{scenario}: attitude, observer (dashed) and KF"))
            files.append(export_svg_plot(rec, ["F1", "F2", "F3", "F4"], out / f"{scenario}-rotors.svg",
                                         title=f"{scenario}: rotor forces"))
    return files


def run_scenario(scenario: str, overrides: dict | None = None, out_dir=None,
                 seed: int | None = None) -> ScenarioResult:
    """Run a built-in scenario and, when ``out_dir`` is given, write its artefacts.

    A diverged closed-loop run still writes everything recorded up to the
    divergence and then raises :class:`ScenarioDiverged`.
    """
    cfg = resolve_config(scenario, overrides, seed)
    digest = config_hash(cfg)
    if scenario.startswith("integ"):
        records, metrics = _run_integ(cfg)
    elif scenario.startswith("bode"):
        records, metrics = _run_bode(cfg)
    else:
        records, metrics = _run_quad(cfg)
    for rec in records.values():
        rec.meta.update({"config_hash": digest, "seed": cfg.get("seed")})
    metrics = {"scenario": scenario, "config_hash": digest, **metrics}
    result = ScenarioResult(scenario, cfg, records, metrics)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        cfg_path = out / "config.json"
        cfg_path.write_text(json.dumps({"scenario": scenario, **cfg, "config_hash": digest},
                                       indent=2, sort_keys=True) + "\n")
        result.files.append(cfg_path)
        for tag, rec in records.items():
            name = f"{scenario}.csv" if tag == "run" else f"{scenario}-{tag}.csv"
            result.files.append(export_csv(rec, out / name))
        result.files.extend(_plots(scenario, records, out))
        met_path = out / "metrics.json"
        met_path.write_text(json.dumps(metrics, indent=2, sort_keys=True, default=_jsonable) + "\n")
        result.files.append(met_path)
    if metrics.get("diverged_at") is not None:
        loops = [f"{k} loop pole at Re={v['max_real_part']:+.3g}"
                 for k, v in metrics["linear_loops"].items() if not v["stable"]]
        hint = f"; linearised {', '.join(loops)}" if loops else ""
        raise ScenarioDiverged(f"{scenario}: closed loop diverged at t={metrics['diverged_at']:g} s{hint}; "
                               "try smaller quad.att_eps / larger quad.pos_eps_cap", result)
    return result


def _jsonable(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialise {type(obj).__name__}")
