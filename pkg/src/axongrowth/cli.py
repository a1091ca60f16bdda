"""Command-line entry point: ``axongrowth {simulate,compare,sweep,constants,check}``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import backstepping as bk
from . import closed_loop as cl
from .io import ConfigError, _jsonable, load_config, write_outputs, write_sweep
from .model import steady_state_derivatives, steady_state_profile

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_ZENO = 0, 1, 2, 3
log = logging.getLogger("axongrowth")


def _status_code(status: str) -> int:
    if status == "completed":
        return EXIT_OK
    if status == "EventCapExceeded":
        return EXIT_ZENO
    return EXIT_NUMERIC


def _out_dir(arg: str | None) -> Path:
    return Path(arg or os.environ.get("AXONGROWTH_OUT", "out"))


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    if args.mode:
        cfg = replace(cfg, mode=args.mode)
    cfg.validate()
    d = cl.design(cfg)
    rec = cl.run_scenario(cfg, design_override=d)
    paths = write_outputs(rec, _out_dir(args.out), d)
    print(f"{cfg.mode}: status={rec.status} l(end)={rec.final_length:.6e} m "
          f"events={len(rec.events)} wall={rec.wall_time:.2f} s -> {paths['run'].parent}")
    if rec.message:
        print(rec.message, file=sys.stderr)
    return _status_code(rec.status)


def cmd_compare(args) -> int:
    cfg = load_config(args.config)
    d = cl.design(cfg)
    code = EXIT_OK
    finals = {}
    for mode in ("continuous", "etc"):
        rec = cl.run_scenario(replace(cfg, mode=mode), design_override=d)
        write_outputs(rec, _out_dir(args.out) / mode, d)
        finals[mode] = rec.final_length
        print(f"{mode:10s} status={rec.status} l(end)={rec.final_length:.6e} m "
              f"t95={rec.time_to_fraction():.3f} s events={len(rec.events)}")
        code = max(code, _status_code(rec.status))
    rel = abs(finals["continuous"] - finals["etc"]) / finals["continuous"]
    print(f"relative final-length difference: {rel:.3e}")
    return code


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"bad value list {args.values!r}") from None
    if args.param not in cl.SWEEPABLE:
        raise ConfigError(f"cannot sweep {args.param!r}; choose one of {cl.SWEEPABLE}")
    rows = cl.compare_and_sweep(cfg, {args.param: values}, workers=args.workers)
    path = write_sweep(rows, _out_dir(args.out) / "sweep.csv")
    for r in rows:
        print(f"{r.param}={r.value:g} status={r.status} events={r.events} "
              f"min_gap={r.min_gap:.3g} t95={r.t95:.3f} final_error={r.final_error:.3e}")
    print(f"-> {path}")
    return max(_status_code(r.status) for r in rows)


def cmd_constants(args) -> int:
    cfg = load_config(args.config)
    d = cl.design(cfg)
    out = {
        "derived": d.dc.as_dict(),
        "alpha": d.ac.as_dict(),
        "etm": asdict(d.etm),
        "dwell": asdict(d.dwell),
        "lyapunov": {"P": d.lyap.P, "d1": d.lyap.d1, "d2": d.lyap.d2},
    }
    print(json.dumps(_jsonable(out), indent=2))
    return EXIT_OK


def run_checks(cfg: cl.ScenarioConfig) -> list:
    """Fast invariant suite; returns (name, ok, detail) triples."""
    d = cl.design(cfg)
    p, dc, km = cfg.bio, d.dc, d.km
    res = []
    phi0, _ = bk.phi_eval(km, 0.0)
    res.append(("phi(0) = H", bool(np.allclose(phi0, dc.H, rtol=1e-12, atol=0)), f"{phi0}"))
    kxx = bk.kernel_k(km, 3e-6, 3e-6)
    res.append(("k(x,x) = 1/l_c", abs(kxx * p.l_c - 1) <= 1e-12, f"{kxx:.15e}"))
    s = np.linspace(-cfg.l_bar, 0.0, 801)
    r = float(np.max(bk.kernel_ode_residual(km, s)))
    res.append(("kernel ODE residual", r <= 1e-8, f"{r:.2e}"))
    eig = np.linalg.eigvals(cfg.gains.closed_loop_matrix(dc))
    res.append(("A1 + B K^T Hurwitz", bool(np.all(eig.real < 0)), f"{eig}"))
    x = np.linspace(0.0, p.l_s, 201)
    c = steady_state_profile(dc, p, x)
    lhs = (p.D * steady_state_derivatives(dc, p, x, 2) - p.a * steady_state_derivatives(dc, p, x, 1)
           - p.g * c)
    scale = np.abs(p.D * steady_state_derivatives(dc, p, x, 2)).max()
    res.append(("stationary residual", float(np.abs(lhs).max() / scale) <= 1e-12, ""))
    res.append(("Lyapunov residual", d.lyap.residual <= 1e-10, f"{d.lyap.residual:.2e}"))
    res.append(("dwell time positive", d.dwell.tau > 0, f"{d.dwell.tau:.3e} s"))
    return res


def cmd_check(args) -> int:
    cfg = load_config(args.config)
    results = run_checks(cfg)
    for name, ok, detail in results:
        print(f"[{'PASS' if ok else 'FAIL'}] {name} {detail}")
    return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_NUMERIC


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="axongrowth", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("simulate", help="run one closed-loop scenario")
    sp.add_argument("--config")
    sp.add_argument("--mode", choices=cl.MODES)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("compare", help="continuous and event-triggered runs side by side")
    sp.add_argument("--config")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("sweep", help="vary one parameter")
    sp.add_argument("--config")
    sp.add_argument("--param", required=True)
    sp.add_argument("--values", required=True, help="comma-separated list")
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("constants", help="print derived, trigger and dwell-time constants")
    sp.add_argument("--config")
    sp.set_defaults(func=cmd_constants)

    sp = sub.add_parser("check", help="run the invariant suite")
    sp.add_argument("--config")
    sp.set_defaults(func=cmd_check)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
