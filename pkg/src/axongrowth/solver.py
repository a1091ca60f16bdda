"""Moving-boundary plant solver on a front-fixed grid.

With ``xi = x / l(t)`` the PDE becomes

    c_t = (D / l^2) c_xixi + (xi * l_dot / l - a / l) c_xi - g c

on the fixed unit interval.  Interior nodes and the growth-cone ODE are
advanced together by a theta scheme (one tridiagonal solve after the
cone row's extra stencil entry is eliminated); the axon length follows the
same theta rule and the coupling is closed by a scalar root solve on l.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.optimize

from . import _kernels
from .model import BioParams, PlantState


class SolverError(RuntimeError):
    pass


class NonFinite(SolverError):
    pass


class DomainCollapse(SolverError):
    pass


class LinearSolveFailure(SolverError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    N: int = 128
    dt: float = 0.05
    theta: float = 1.0
    t_end: float = 240.0
    max_iter: int = 25
    rtol: float = 1e-13

    def validate(self) -> None:
        if int(self.N) != self.N or self.N < 16:
            raise ValueError("N must be an integer >= 16")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError("dt must be positive")
        if not (0.5 <= self.theta <= 1.0):
            raise ValueError("theta must lie in [0.5, 1]")
        if not (self.t_end > 0):
            raise ValueError("t_end must be positive")


@dataclass(frozen=True)
class StepDiagnostics:
    max_c: float
    l_dot: float
    cfl_like: float
    iterations: int


class FeedbackRow:
    """Boundary law ``u(0) = sum_j omega_j u_j + phi^T X`` solved implicitly.

    Subclasses return, for a trial length ``l``, the quadrature-weighted
    kernel samples ``omega`` (length N+1), the two gains ``phi`` and the
    equilibrium values needed to express the law in plant variables.
    """

    def row(self, l: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:  # pragma: no cover
        raise NotImplementedError


def boundary_gradient(s: PlantState) -> float:
    """c_x at the tip: second-order one-sided difference, scaled by 1/l."""
    N = s.N
    if N < 3:
        raise ValueError("grid too small for a one-sided second-order difference")
    h = 1.0 / N
    c = s.c
    return (3.0 * c[N] - 4.0 * c[N - 1] + c[N - 2]) / (2.0 * h * s.l)


def _check(c: np.ndarray, l: float) -> None:
    if not (np.all(np.isfinite(c)) and math.isfinite(l)):
        raise NonFinite("non-finite value in plant state")
    if l <= 0.0:
        raise DomainCollapse(f"axon length collapsed to {l!r} m")


_ZERO = np.zeros(1)


def plant_step(s: PlantState, q_s: float, cfg: SolverConfig, p: BioParams,
               feedback: FeedbackRow | None = None) -> tuple[PlantState, StepDiagnostics]:
    """Advance the coupled plant by one step.

    ``q_s`` is the soma concentration input (the left boundary value is
    ``-q_s``).  With ``feedback`` the left boundary is instead the implicit
    linear law it describes and ``q_s`` is ignored.

    For a trial end-of-step length the linear system is solved with the
    cone loss Newton-linearised; the length itself is then found as the root
    of ``l_trial -> l(l_trial) - l_trial``, by fixed-point iteration while
    that contracts and by bracketed root finding once a sign change shows up.
    """
    N = s.N
    if s.l <= 0:
        raise DomainCollapse("axon length must be positive")
    dt, theta = cfg.dt, cfg.theta
    xi = s.xi_grid
    zeros = np.zeros(N + 1)
    c_old = s.c
    l_base = s.l + dt * (1.0 - theta) * p.r_g * (c_old[N] - p.c_inf)
    tol_l = cfg.rtol * s.l
    count = [0]
    cache: dict = {}

    def solve_at(l_new: float):
        if l_new <= 0.0 or not math.isfinite(l_new):
            raise DomainCollapse(f"trial axon length {l_new!r} m")
        ldot = (l_new - s.l) / dt
        if feedback is None:
            omega, tip, rhs0, fb, left = _ZERO, 0.0, 0.0, False, -q_s
        else:
            omega, phi, rhs0 = feedback.row(l_new)
            # l = l_base + dt theta r_g (c_N - c_inf) folded into the law
            tip = phi[0] + phi[1] * dt * theta * p.r_g
            rhs0 = rhs0 + phi[1] * (l_base - dt * theta * p.r_g * p.c_inf)
            fb, left = True, 0.0
        c_star = cache.get("c_star", c_old[N])
        for _ in range(cfg.max_iter):
            count[0] += 1
            c_new, ok, vmax = _kernels.theta_solve(
                c_old, xi, s.l, l_new, ldot, dt, theta, p.D, p.a, p.g,
                zeros, zeros, False, 0.0,
                p.l_c, p.r_g, p.rt_g, p.c_inf, c_star,
                left, omega, tip, rhs0, fb)
            if not ok:
                raise LinearSolveFailure("singular tridiagonal system")
            if not math.isfinite(c_new[N]):
                raise NonFinite("non-finite cone concentration")
            step = abs(c_new[N] - c_star)
            c_star = c_new[N]
            if step <= cfg.rtol * max(abs(c_star), p.c_inf):
                break
        cache["c_star"] = c_star
        l_corr = l_base + dt * theta * p.r_g * (c_new[N] - p.c_inf)
        return c_new, vmax, l_corr

    l_trial = s.l + dt * p.r_g * (c_old[N] - p.c_inf)
    c_new, vmax, l_corr = solve_at(l_trial)
    hist = [(l_trial, l_corr - l_trial)]
    bracket = None
    for _ in range(cfg.max_iter):
        if abs(l_corr - l_trial) <= tol_l:
            break
        l_trial = l_corr
        c_new, vmax, l_corr = solve_at(l_trial)
        g_new = l_corr - l_trial
        for l_prev, g_prev in hist:
            if g_prev * g_new < 0:
                bracket = (l_prev, l_trial)
                break
        hist.append((l_trial, g_new))
        if bracket is not None:
            break
    if bracket is not None:
        lo, hi = bracket
        g_lo = solve_at(lo)[2] - lo
        g_hi = solve_at(hi)[2] - hi
        if g_lo * g_hi < 0:
            root = scipy.optimize.brentq(lambda x: solve_at(x)[2] - x, lo, hi,
                                         xtol=tol_l, rtol=4 * np.finfo(float).eps)
        else:
            # re-evaluation moved a near-zero end across; take the better end
            root = lo if abs(g_lo) <= abs(g_hi) else hi
        c_new, vmax, l_corr = solve_at(root)
    l_new = l_corr
    _check(c_new, l_new)
    out = PlantState(s.t + dt, xi, c_new, float(c_new[N]), float(l_new))
    diag = StepDiagnostics(
        max_c=float(np.max(c_new)),
        l_dot=(l_new - s.l) / dt,
        cfl_like=vmax * dt * N,
        iterations=count[0],
    )
    return out, diag


def advance_pde(c: np.ndarray, xi: np.ndarray, l_old: float, l_new: float, dt: float,
                theta: float, p: BioParams, left: float, right: float,
                src_old: np.ndarray, src_new: np.ndarray) -> np.ndarray:
    """PDE-only theta step with Dirichlet data at both ends and a prescribed
    domain motion; the building block exercised by the convergence study."""
    ldot = (l_new - l_old) / dt
    c_new, ok, _ = _kernels.theta_solve(
        c, xi, l_old, l_new, ldot, dt, theta, p.D, p.a, p.g,
        src_old, src_new, True, right,
        p.l_c, p.r_g, p.rt_g, p.c_inf, 0.0,
        left, _ZERO, 0.0, 0.0, False)
    if not ok:
        raise LinearSolveFailure("singular tridiagonal system")
    return c_new


# -- manufactured-solution convergence study ---------------------------------

@dataclass(frozen=True)
class Manufactured:
    """c_m(x, t) = c_inf (1 + amp sin(pi x / l0) exp(-t)) on a domain that
    stretches as l(t) = l0 (1 + growth t)."""

    p: BioParams
    l0: float = 1e-6
    amp: float = 0.1
    growth: float = 0.5

    def length(self, t: float) -> float:
        return self.l0 * (1.0 + self.growth * t)

    def exact(self, x, t):
        return self.p.c_inf * (1.0 + self.amp * np.sin(np.pi * x / self.l0) * np.exp(-t))

    def source(self, x, t):
        p = self.p
        k = np.pi / self.l0
        e = p.c_inf * self.amp * np.exp(-t)
        c = self.exact(x, t)
        c_t = -e * np.sin(k * x)
        c_x = e * k * np.cos(k * x)
        c_xx = -e * k * k * np.sin(k * x)
        return c_t - (p.D * c_xx - p.a * c_x - p.g * c)


def solve_manufactured(mms: Manufactured, N: int, dt: float, t_end: float,
                       theta: float = 0.5) -> tuple[np.ndarray, np.ndarray]:
    """Integrate the manufactured problem; returns (numerical, exact) at t_end."""
    xi = np.linspace(0.0, 1.0, N + 1)
    steps = int(round(t_end / dt))
    t = 0.0
    l = mms.length(0.0)
    c = mms.exact(xi * l, 0.0)
    src_old = mms.source(xi * l, t)
    for _ in range(steps):
        t_new = t + dt
        l_new = mms.length(t_new)
        src_new = mms.source(xi * l_new, t_new)
        x_new = xi * l_new
        c = advance_pde(c, xi, l, l_new, dt, theta, mms.p,
                        float(mms.exact(x_new[0], t_new)), float(mms.exact(x_new[-1], t_new)),
                        src_old, src_new)
        t, l, src_old = t_new, l_new, src_new
    return c, mms.exact(xi * l, t)


@dataclass(frozen=True)
class OrderReport:
    resolutions: tuple
    errors: tuple
    orders: tuple
    richardson_orders: tuple


def _orders(values: Sequence[float]) -> tuple:
    return tuple(math.log2(values[i] / values[i + 1]) for i in range(len(values) - 1))


def convergence_study(p: BioParams, grid: Sequence[int] = (64, 128, 256), dt: float = 2e-4,
                      t_end: float = 0.05, theta: float = 0.5,
                      mms: Manufactured | None = None) -> OrderReport:
    """Observed spatial order on successively doubled grids.

    ``errors`` are max-norm errors against the manufactured solution;
    ``richardson_orders`` use differences between successive grids at the
    shared nodes, which removes the common time-discretisation error.
    """
    mms = mms or Manufactured(p)
    sols, errs = [], []
    for N in grid:
        c, exact = solve_manufactured(mms, N, dt, t_end, theta)
        sols.append(c)
        errs.append(float(np.max(np.abs(c - exact))))
    diffs = []
    for i in range(len(sols) - 1):
        coarse, fine = sols[i], sols[i + 1]
        diffs.append(float(np.max(np.abs(fine[::2] - coarse))))
    rich = _orders(diffs) if len(diffs) > 1 else ()
    return OrderReport(tuple(grid), tuple(errs), _orders(errs), rich)


def temporal_study(p: BioParams, dts: Sequence[float] = (4e-3, 2e-3, 1e-3, 5e-4), N: int = 128,
                   t_end: float = 0.2, theta: float = 0.5,
                   mms: Manufactured | None = None) -> OrderReport:
    """Observed temporal order by Richardson differences at fixed N."""
    mms = mms or Manufactured(p)
    sols, errs = [], []
    for dt in dts:
        c, exact = solve_manufactured(mms, N, dt, t_end, theta)
        sols.append(c)
        errs.append(float(np.max(np.abs(c - exact))))
    diffs = [float(np.max(np.abs(sols[i + 1] - sols[i]))) for i in range(len(sols) - 1)]
    return OrderReport(tuple(dts), tuple(errs), _orders(errs), _orders(diffs))
