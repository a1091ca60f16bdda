"""Scenario files and result bundles.

Config files are flat ``key = value`` lines grouped under ``[bio]``,
``[solver]``, ``[gains]``, ``[etm]`` and ``[run]``.  Values are SI; length
keys accept a ``um`` suffix and time keys a ``min`` suffix.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, fields, replace
from pathlib import Path

import numpy as np

from .backstepping import GainConfig
from .closed_loop import SERIES, Design, RunRecord, ScenarioConfig
from .model import BioParams
from .solver import SolverConfig
from .trigger import PAPER_FIG2, zeno_report


class ConfigError(ValueError):
    pass


LENGTH_KEYS = {"l_c", "l_s", "l0", "l_bar"}
TIME_KEYS = {"dt", "horizon", "zoh_period", "snapshot_every"}
SUFFIX = {"um": (LENGTH_KEYS, 1e-6), "min": (TIME_KEYS, 60.0)}

SECTIONS = {
    "bio": [f.name for f in fields(BioParams)],
    "solver": ["N", "dt", "theta", "max_iter", "rtol"],
    "gains": ["k1", "k2"],
    "etm": ["gamma", "eta", "rho", "sigma", "beta1", "beta2", "beta3", "beta4", "beta5", "m0"],
    "run": ["preset", "mode", "horizon", "l0", "c0_factor", "offset_scale", "l_bar", "v_bar",
            "event_cap", "zoh_period", "snapshot_every"],
}
INT_KEYS = {"N", "max_iter", "event_cap"}
TEXT_KEYS = {"preset", "mode"}
PRESETS = ("paper-fig2", "rules")


def _number(key: str, raw: str, lineno: int):
    text = raw.strip()
    for suffix, (allowed, factor) in SUFFIX.items():
        if text.endswith(suffix):
            if key not in allowed:
                raise ConfigError(f"line {lineno}: unit '{suffix}' not allowed for {key}")
            text = text[: -len(suffix)].strip()
            return _number(key, text, lineno) * factor
    try:
        value = float(text)
    except ValueError:
        raise ConfigError(f"line {lineno}: bad value {raw.strip()!r} for {key}") from None
    if key in INT_KEYS:
        if value != int(value):
            raise ConfigError(f"line {lineno}: {key} must be an integer")
        return int(value)
    return value


def parse_config(text: str) -> ScenarioConfig:
    """Parse a scenario document; omitted keys keep the reference values."""
    values: dict = {s: {} for s in SECTIONS}
    where: dict = {}
    section = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"line {lineno}: malformed section header")
            section = line[1:-1].strip()
            if section not in SECTIONS:
                raise ConfigError(f"line {lineno}: unknown section [{section}]")
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        if section is None:
            raise ConfigError(f"line {lineno}: key outside a section")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in SECTIONS[section]:
            raise ConfigError(f"line {lineno}: unknown key {key!r} in [{section}]")
        if key in values[section]:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[section][key] = raw if key in TEXT_KEYS else _number(key, raw, lineno)
        where[(section, key)] = lineno
    try:
        cfg = _build(values)
        cfg.validate()
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        line = _blame(str(exc), where)
        raise ConfigError(f"{line}{exc}") from None
    return cfg


def _blame(message: str, where: dict) -> str:
    for (section, key), lineno in where.items():
        if message.startswith(key) or f" {key} " in f" {message} ":
            return f"line {lineno}: "
    return ""


def _build(v: dict) -> ScenarioConfig:
    run = dict(v["run"])
    preset = run.pop("preset", "paper-fig2")
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; choose one of {PRESETS}")
    bio = replace(BioParams(), **v["bio"])
    solver = replace(SolverConfig(), **v["solver"])
    gains = replace(GainConfig(), **v["gains"])
    etm_vals = dict(v["etm"])
    betas = list(PAPER_FIG2.beta)
    for i in range(5):
        key = f"beta{i + 1}"
        if key in etm_vals:
            betas[i] = etm_vals.pop(key)
    etm = replace(PAPER_FIG2, beta=tuple(betas), **etm_vals)
    horizon = run.get("horizon", ScenarioConfig.horizon)
    solver = replace(solver, t_end=horizon)
    return ScenarioConfig(bio=bio, solver=solver, gains=gains, etm=etm,
                          etm_preset="paper-fig2" if preset == "paper-fig2" else "rules", **run)


def serialize_config(cfg: ScenarioConfig) -> str:
    """Config echo that parses back to an equal ScenarioConfig."""
    out = ["[bio]"]
    out += [f"{k} = {getattr(cfg.bio, k)!r}" for k in SECTIONS["bio"]]
    out += ["", "[solver]"]
    out += [f"{k} = {getattr(cfg.solver, k)!r}" for k in SECTIONS["solver"]]
    out += ["", "[gains]", f"k1 = {cfg.gains.k1!r}", f"k2 = {cfg.gains.k2!r}", "", "[etm]"]
    e = cfg.etm
    out += [f"{k} = {getattr(e, k)!r}" for k in ("gamma", "eta", "rho", "sigma")]
    out += [f"beta{i + 1} = {b!r}" for i, b in enumerate(e.beta)]
    out += [f"m0 = {e.m0!r}", "", "[run]",
            f"preset = {'paper-fig2' if cfg.etm_preset == 'paper-fig2' else 'rules'}",
            f"mode = {cfg.mode}"]
    for k in SECTIONS["run"][2:]:
        val = getattr(cfg, k)
        if val is None:
            continue
        out.append(f"{k} = {val!r}")
    return "\n".join(out) + "\n"


def load_config(path: str | None) -> ScenarioConfig:
    if path is None:
        return parse_config("")
    return parse_config(Path(path).read_text())


# -- outputs -------------------------------------------------------------------

def _fmt(x) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.16e}"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj


def summary(rec: RunRecord, d: Design | None = None) -> dict:
    zr = zeno_report(rec.events, rec.config.solver.dt,
                     d.dwell.tau if d is not None else float("nan"))
    out = {
        "status": rec.status,
        "message": rec.message,
        "mode": rec.config.mode,
        "final_length": rec.final_length,
        "final_error": abs(rec.final_length - rec.config.bio.l_s),
        "time_to_95": rec.time_to_fraction(0.95),
        "events": len(rec.events),
        "zeno": asdict(zr),
        "caps": rec.cap_violations,
        "config": serialize_config(rec.config),
    }
    if d is not None:
        out["derived"] = d.dc.as_dict()
        out["alpha"] = d.ac.as_dict()
        out["etm"] = asdict(d.etm)
        out["dwell"] = asdict(d.dwell)
        out["lyapunov"] = {"P": d.lyap.P, "d1": d.lyap.d1, "d2": d.lyap.d2,
                           "residual": d.lyap.residual}
    return _jsonable(out)


def write_outputs(rec: RunRecord, out_dir: str | Path, d: Design | None = None) -> dict:
    """Write run.csv, events.csv and summary.json; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"run": out / "run.csv", "events": out / "events.csv", "summary": out / "summary.json"}
    with open(paths["run"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SERIES)
        cols = [rec.series[k] for k in SERIES]
        for row in zip(*cols):
            w.writerow([str(int(v)) if k == "event_flag" else _fmt(v) for k, v in zip(SERIES, row)])
    with open(paths["events"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("index", "t_j", "U_tj", "gap"))
        for ev in rec.events:
            w.writerow((ev.index, _fmt(ev.t_j), _fmt(ev.U_tj), _fmt(ev.gap)))
    with open(paths["summary"], "w") as fh:
        json.dump(summary(rec, d), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return paths


def write_sweep(rows: list, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = ("param", "value", "mode", "status", "events", "min_gap", "t95", "final_error",
             "final_length")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for r in rows:
            w.writerow([r.param, _fmt(r.value), r.mode, r.status, r.events, _fmt(r.min_gap),
                        _fmt(r.t95), _fmt(r.final_error), _fmt(r.final_length)])
    return path
