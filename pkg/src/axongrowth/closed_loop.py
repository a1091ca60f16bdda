"""Closed-loop runs: plant, boundary controller and trigger, plus diagnostics.

Sampling convention: a sample taken on the step ending at ``t`` is the law
evaluated on the end-of-step state, and the Dirichlet value at ``t`` equals
it.  Under the backward-Euler default that is the implicit law on that step,
so a step on which an event fires is solved twice: once with the held
input (to decide whether to fire) and once with the law built into the
left boundary row.
"""
from __future__ import annotations

import functools
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from . import backstepping as bk
from . import trigger as tr
from .model import (BioParams, DerivedConstants, ModelRangeError, PlantState, derive_constants,
                    steady_state_profile, to_error_state, uniform_grid)
from .solver import DomainCollapse, LinearSolveFailure, NonFinite, SolverConfig, plant_step

MODES = ("continuous", "etc", "zoh")
STATUSES = ("completed", "NonFinite", "DomainCollapse", "EventCapExceeded")


class EventCapExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class ScenarioConfig:
    bio: BioParams = BioParams()
    solver: SolverConfig = SolverConfig()
    gains: bk.GainConfig = bk.GainConfig()
    etm: tr.EtmConfig = tr.PAPER_FIG2
    etm_preset: str | None = "paper-fig2"
    mode: str = "etc"
    horizon: float = 240.0
    l0: float = 1e-6
    c0_factor: float = 2.0
    offset_scale: float = 1.0
    l_bar: float = 24e-6
    v_bar: float | None = None
    event_cap: int = 100_000
    zoh_period: float = 0.05
    snapshot_every: float = 1.0

    def __post_init__(self) -> None:
        # the run horizon is authoritative for the solver end time
        if self.solver.t_end != self.horizon:
            object.__setattr__(self, "solver", replace(self.solver, t_end=self.horizon))

    def validate(self) -> None:
        self.bio.validate()
        self.solver.validate()
        self.etm.validate()
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.l_bar > self.bio.l_s:
            raise ValueError("l_bar must exceed l_s")
        if self.event_cap < 1:
            raise ValueError("event cap must be at least 1")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if not self.l0 > 0:
            raise ValueError("initial length must be positive")
        if not self.zoh_period > 0:
            raise ValueError("zoh_period must be positive")
        if not self.snapshot_every > 0:
            raise ValueError("snapshot_every must be positive")

    @property
    def v_bar_value(self) -> float:
        D = self.bio.D
        return self.v_bar if self.v_bar is not None else D / (16.0 * (D + 1.0))


# -- Lyapunov diagnostics ------------------------------------------------------

@dataclass(frozen=True)
class LyapunovSetup:
    P: np.ndarray
    Q: np.ndarray
    d1: float
    d2: float
    d2_upper: float
    residual: float


def lyapunov_matrix(A_cl: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Solve ``A^T P + P A = -Q`` for symmetric 2x2 ``P``.

    Unknowns (p11, p12, p22) satisfy a 3x3 linear system read off entrywise.
    """
    a, b = A_cl[0]
    c, d = A_cl[1]
    M = np.array([
        [2 * a, 2 * c, 0.0],
        [b, a + d, c],
        [0.0, 2 * b, 2 * d],
    ])
    rhs = -np.array([Q[0, 0], 0.5 * (Q[0, 1] + Q[1, 0]), Q[1, 1]])
    p11, p12, p22 = np.linalg.solve(M, rhs)
    return np.array([[p11, p12], [p12, p22]])


def lyapunov_setup(dc: DerivedConstants, gc: bk.GainConfig, p: BioParams, d1: float,
                   Q: np.ndarray | None = None) -> LyapunovSetup:
    """P for the closed-loop ODE matrix; ``d2`` at half its admissible bound."""
    A_cl = gc.closed_loop_matrix(dc)
    if not np.all(np.linalg.eigvals(A_cl).real < 0):
        raise bk.GainConditionViolated("A1 + B K^T is not Hurwitz")
    Q = np.eye(2) if Q is None else np.asarray(Q, dtype=float)
    P = lyapunov_matrix(A_cl, Q)
    res = A_cl.T @ P + P @ A_cl + Q
    residual = float(np.max(np.abs(res)) / np.max(np.abs(Q)))
    BtP = dc.B @ P
    upper = p.D * float(np.min(np.linalg.eigvalsh(Q))) / (64.0 * float(BtP @ BtP))
    return LyapunovSetup(P, Q, float(d1), 0.5 * upper, upper, residual)


def lyapunov_eval(w: np.ndarray, X: np.ndarray, m: float, l: float, ls: LyapunovSetup):
    """(V1, V2, V3, V) with V = d1 V1 + V2 + d2 V3 - m."""
    N = w.size - 1
    h = l / N
    w_x = np.gradient(w, h, edge_order=2)
    V1 = 0.5 * _trapz(w * w, h)
    V2 = 0.5 * _trapz(w_x * w_x, h)
    V3 = float(X @ ls.P @ X)
    return V1, V2, V3, ls.d1 * V1 + V2 + ls.d2 * V3 - m


def _trapz(f: np.ndarray, h: float) -> float:
    return float(h * (f.sum() - 0.5 * (f[0] + f[-1])))


# -- scenario design (cached per parameter set) --------------------------------

@dataclass(frozen=True)
class Design:
    dc: DerivedConstants
    km: bk.KernelModel
    ac: tr.AlphaConstants
    etm: tr.EtmConfig
    lyap: LyapunovSetup
    dwell: tr.DwellTime


@functools.lru_cache(maxsize=16)
def _kernel_and_alphas(p: BioParams, gc: bk.GainConfig, l_bar: float):
    dc = derive_constants(p)
    # the table spans twice the cap so an overshoot past l_bar is logged, not fatal
    km = bk.build_kernel_model(dc, gc, 2.0 * l_bar, p)
    ac = tr.alpha_constants(km, dc, p, l_bar)
    return dc, km, ac


def design(cfg: ScenarioConfig) -> Design:
    dc, km, ac = _kernel_and_alphas(cfg.bio, cfg.gains, cfg.l_bar)
    if cfg.etm_preset == "paper-fig2":
        etm = cfg.etm
    elif cfg.etm_preset in (None, "", "rules"):
        etm = tr.etm_defaults(ac, cfg.bio, sigma=cfg.etm.sigma, eta=cfg.etm.eta, m0=cfg.etm.m0)
    else:
        raise ValueError(f"unknown trigger preset {cfg.etm_preset!r}")
    d1 = tr.d1_lower_bound(ac, cfg.bio, etm.beta[3], cfg.l_bar)
    lyap = lyapunov_setup(dc, cfg.gains, cfg.bio, d1)
    dwell = tr.dwell_time(etm, ac, l_ref=cfg.bio.l_s)
    return Design(dc, km, ac, etm, lyap, dwell)


# -- run record ----------------------------------------------------------------

SERIES = ("t", "l", "c_c", "U_applied", "d", "m", "norm_u", "norm_w", "norm_wx",
          "V1", "V2", "V3", "V", "event_flag")
EXTRA = ("U_cont", "w0_ref", "h1_u", "norm_X", "l_dot")


@dataclass
class RunRecord:
    config: ScenarioConfig
    series: dict
    snapshots: list
    events: list
    status: str
    message: str = ""
    cap_violations: dict = field(default_factory=dict)
    wall_time: float = 0.0

    def column(self, name: str) -> np.ndarray:
        return np.asarray(self.series[name])

    @property
    def final_length(self) -> float:
        return float(self.series["l"][-1])

    def time_to_fraction(self, frac: float = 0.95) -> float:
        l = self.column("l")
        t = self.column("t")
        idx = np.nonzero(l >= frac * self.config.bio.l_s)[0]
        return float(t[idx[0]]) if idx.size else math.inf


@dataclass(frozen=True)
class Signals:
    U_cont: float
    w: np.ndarray
    u: np.ndarray
    X: np.ndarray
    w0x: float
    wlx: float
    w_norm2: float
    w0_ref: float

    def trigger(self) -> tr.TriggerSignals:
        return tr.TriggerSignals(self.U_cont, self.X, self.w0x, self.wlx, self.w_norm2)


def signals(s: PlantState, d: Design, p: BioParams, reference_w0: bool = False) -> Signals:
    e = to_error_state(s, d.dc, p)
    ws = bk.workspace(d.km, s.N, s.l)
    U = bk.continuous_control(d.km, e, s.l, ws)
    w = bk.forward_transform(d.km, e, s.l, ws)
    hl = ws.hl
    w0x = (-3.0 * w[0] + 4.0 * w[1] - w[2]) / (2.0 * hl)
    wlx = (3.0 * w[-1] - 4.0 * w[-2] + w[-3]) / (2.0 * hl)
    w0_ref = bk.boundary_residual(d.km, e, s.l, ws) if reference_w0 else math.nan
    return Signals(U, w, e.u, e.X, w0x, wlx, _trapz(w * w, hl), w0_ref)


def initial_state(cfg: ScenarioConfig, dc: DerivedConstants) -> PlantState:
    """Uniform ``c0_factor * c_inf`` on ``l0``; ``offset_scale`` shrinks the
    offset from the equilibrium (in length and profile) by that factor."""
    p = cfg.bio
    N = cfg.solver.N
    xi = uniform_grid(N)
    k = cfg.offset_scale
    l = p.l_s + k * (cfg.l0 - p.l_s)
    ceq = steady_state_profile(dc, p, xi * l)
    c = ceq + k * (cfg.c0_factor * p.c_inf - ceq)
    c[-1] = p.c_inf + k * (cfg.c0_factor - 1.0) * p.c_inf
    return PlantState(0.0, xi, c, float(c[-1]), float(l))


def run_scenario(cfg: ScenarioConfig, init: PlantState | None = None,
                 design_override: Design | None = None) -> RunRecord:
    cfg.validate()
    t_wall = time.perf_counter()
    d = design_override or design(cfg)
    p, sc = cfg.bio, cfg.solver
    dt = sc.dt
    steps = int(round(cfg.horizon / dt))
    s = init.copy() if init is not None else initial_state(cfg, d.dc)
    row = bk.ControlRow(d.km, s.xi_grid)
    ceq0 = float(steady_state_profile(d.dc, p, 0.0))
    q_star = d.dc.q_s_star
    etc = cfg.mode == "etc"
    zoh_every = max(1, int(round(cfg.zoh_period / dt)))
    snap_every = max(1, int(round(cfg.snapshot_every / dt)))
    want_ref = cfg.mode == "continuous"

    series = {k: [] for k in SERIES + EXTRA}
    snapshots = []
    caps = {"l_bar": 0, "v_bar": 0, "max_l": s.l, "max_abs_l_dot": 0.0}

    sig = signals(s, d, p, want_ref)
    st = tr.EtmState.start(d.etm, sig.U_cont, 0.0)
    m_cont = 0.0

    def record(s, sig, U_applied, dval, m, fired, l_dot):
        V1, V2, V3, V = lyapunov_eval(sig.w, sig.X, m, s.l, d.lyap)
        h = s.l / s.N
        u_x = np.gradient(sig.u, h, edge_order=2)
        nu2 = _trapz(sig.u**2, h)
        ser = series
        ser["t"].append(s.t)
        ser["l"].append(s.l)
        ser["c_c"].append(s.c_c)
        ser["U_applied"].append(U_applied)
        ser["d"].append(dval)
        ser["m"].append(m)
        ser["norm_u"].append(math.sqrt(nu2))
        ser["norm_w"].append(math.sqrt(sig.w_norm2))
        ser["norm_wx"].append(math.sqrt(2.0 * V2))
        ser["V1"].append(V1)
        ser["V2"].append(V2)
        ser["V3"].append(V3)
        ser["V"].append(V)
        ser["event_flag"].append(int(fired))
        ser["U_cont"].append(sig.U_cont)
        ser["w0_ref"].append(sig.w0_ref)
        ser["h1_u"].append(math.sqrt(nu2 + _trapz(u_x**2, h)))
        ser["norm_X"].append(float(np.linalg.norm(sig.X)))
        ser["l_dot"].append(l_dot)

    m0 = st.m if etc else m_cont
    record(s, sig, sig.U_cont if cfg.mode != "continuous" else s.c[0] - ceq0, 0.0, m0, etc, 0.0)
    snapshots.append((s.t, s.l, s.c.copy()))
    U_held = sig.U_cont
    status, message = "completed", ""
    try:
        for n in range(1, steps + 1):
            t = n * dt
            fired = False
            if cfg.mode == "continuous":
                s_new, diag = plant_step(s, 0.0, sc, p, row)
                s_new.t = t
                sig = signals(s_new, d, p, want_ref)
                U_applied = s_new.c[0] - ceq0
                dval, m = 0.0, m_cont
            elif cfg.mode == "zoh":
                if n % zoh_every == 0:
                    s_new, diag = plant_step(s, 0.0, sc, p, row)
                    U_held = s_new.c[0] - ceq0
                    fired = True
                else:
                    s_new, diag = plant_step(s, q_star - U_held, sc, p)
                s_new.t = t
                sig = signals(s_new, d, p)
                U_applied = U_held
                dval, m = sig.U_cont - U_held, m_cont
            else:
                s_new, diag = plant_step(s, q_star - st.U_held, sc, p)
                s_new.t = t
                sig = signals(s_new, d, p)
                st_new, fired = tr.etm_step(st, d.etm, sig.trigger(), dt, t)
                if fired:
                    s_new, diag = plant_step(s, 0.0, sc, p, row)
                    s_new.t = t
                    sig = signals(s_new, d, p)
                    # the sample is the law on the end-of-step state
                    sig = replace(sig, U_cont=s_new.c[0] - ceq0)
                    st_new = tr.commit_event(st, d.etm, sig.trigger(), dt, t)
                    if len(st_new.events) > cfg.event_cap:
                        st = st_new
                        raise EventCapExceeded(f"more than {cfg.event_cap} events by t = {t:g} s")
                st = st_new
                U_applied = st.U_held
                dval, m = st.d, st.m
            s = s_new
            caps["max_l"] = max(caps["max_l"], s.l)
            caps["max_abs_l_dot"] = max(caps["max_abs_l_dot"], abs(diag.l_dot))
            if s.l > cfg.l_bar:
                caps["l_bar"] += 1
            if abs(diag.l_dot) > cfg.v_bar_value:
                caps["v_bar"] += 1
            record(s, sig, U_applied, dval, m, fired, diag.l_dot)
            if n % snap_every == 0:
                snapshots.append((s.t, s.l, s.c.copy()))
    except EventCapExceeded as exc:
        status, message = "EventCapExceeded", str(exc)
    except (NonFinite, LinearSolveFailure, FloatingPointError, tr.TriggerError) as exc:
        status, message = "NonFinite", str(exc)
    except (DomainCollapse, bk.KernelRangeError, ModelRangeError) as exc:
        status, message = "DomainCollapse", str(exc)
    events = st.events if etc else [tr.Event(i, float(t), float(u), float(g)) for i, (t, u, g)
                                    in enumerate(_zoh_events(series, cfg.mode))]
    rec = RunRecord(cfg, {k: np.asarray(v) for k, v in series.items()}, snapshots, list(events),
                    status, message, caps)
    rec.wall_time = time.perf_counter() - t_wall
    return rec


def _zoh_events(series: dict, mode: str):
    if mode != "zoh":
        return []
    out, last = [], 0.0
    for t, u, f in zip(series["t"], series["U_applied"], series["event_flag"]):
        if f or not out:
            out.append((t, u, t - last if out else 0.0))
            last = t
    return out


# -- comparisons and sweeps ----------------------------------------------------

SWEEPABLE = ("eta", "sigma", "gamma", "N", "dt")


def variant(cfg: ScenarioConfig, name: str, value) -> ScenarioConfig:
    if name == "eta":
        return replace(cfg, etm=replace(cfg.etm, eta=float(value)))
    if name == "sigma":
        return replace(cfg, etm=replace(cfg.etm, sigma=float(value)))
    if name == "gamma":
        return replace(cfg, etm=replace(cfg.etm, gamma=float(value)))
    if name == "N":
        return replace(cfg, solver=replace(cfg.solver, N=int(value)))
    if name == "dt":
        return replace(cfg, solver=replace(cfg.solver, dt=float(value)))
    raise ValueError(f"cannot sweep {name!r}; choose one of {SWEEPABLE}")


@dataclass(frozen=True)
class SweepRow:
    param: str
    value: float
    mode: str
    status: str
    events: int
    min_gap: float
    t95: float
    final_error: float
    final_length: float


def summarize(rec: RunRecord, param: str = "", value=float("nan")) -> SweepRow:
    rep = tr.zeno_report(rec.events, rec.config.solver.dt)
    return SweepRow(param, float(value), rec.config.mode, rec.status, len(rec.events),
                    rep.min_gap, rec.time_to_fraction(0.95),
                    abs(rec.final_length - rec.config.bio.l_s), rec.final_length)


def _run_summary(args):
    cfg, name, value = args
    return summarize(run_scenario(cfg), name, value)


def compare_and_sweep(cfg: ScenarioConfig, sweep: dict, workers: int = 1) -> list:
    """Run every variant of the single swept parameter; rows keep input order."""
    if len(sweep) != 1:
        raise ValueError("sweep exactly one parameter")
    (name, values), = sweep.items()
    jobs = [(variant(cfg, name, v), name, v) for v in values]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_summary, jobs))
    return [_run_summary(j) for j in jobs]


def compare_modes(cfg: ScenarioConfig, modes=("continuous", "etc")) -> dict:
    return {m: run_scenario(replace(cfg, mode=m)) for m in modes}
