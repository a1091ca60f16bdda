"""Backstepping gain kernels, control laws and the Volterra transform pair.

The kernel row ``phi(s)^T`` solves the second-order row ODE

    D phi''^T = phi^T (g I + A1 + (a/D) B H^T) + phi'^T (a I - B H^T)

with ``phi(0) = H`` and ``phi'(0)^T = K^T - (1/D) H^T B H^T``.  Stacking
``[phi^T, phi'^T]`` gives a linear system ``r' = r N1`` whose solution
``r(s) = r(0) expm(N1 s)`` is tabulated once and interpolated.  The control
kernel is the difference kernel ``k(x, y) = -(1/D) phi(x - y)^T B``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import mpmath
import numpy as np
import scipy.integrate
import scipy.linalg

from . import _kernels
from .model import BioParams, DerivedConstants, ErrorState, steady_state_profile
from .solver import FeedbackRow


class GainConditionViolated(ValueError):
    pass


class MatrixExponentialFailure(ArithmeticError):
    pass


class KernelRangeError(ValueError):
    pass


@dataclass(frozen=True)
class GainConfig:
    k1: float = -0.001
    k2: float = 4e13

    @property
    def K(self) -> np.ndarray:
        return np.array([self.k1, self.k2])

    def admissible(self, dc: DerivedConstants) -> bool:
        """Sufficient gain condition ``k1 > a1~/beta`` and ``k2 > a3~/beta``."""
        return self.k1 > dc.a1_tilde / dc.beta and self.k2 > dc.a3_tilde / dc.beta

    def closed_loop_matrix(self, dc: DerivedConstants) -> np.ndarray:
        return dc.A1 + np.outer(dc.B, self.K)

    def is_hurwitz(self, dc: DerivedConstants) -> bool:
        return bool(np.all(np.linalg.eigvals(self.closed_loop_matrix(dc)).real < 0))


def companion_matrix(dc: DerivedConstants, p: BioParams) -> np.ndarray:
    """4x4 matrix ``N1`` with ``[phi^T, phi'^T]' = [phi^T, phi'^T] N1``."""
    D = p.D
    BH = np.outer(dc.B, dc.H)
    M0 = p.g * np.eye(2) + dc.A1 + (p.a / D) * BH
    M1 = p.a * np.eye(2) - BH
    return np.block([[np.zeros((2, 2)), M0 / D], [np.eye(2), M1 / D]])


@dataclass(frozen=True)
class KernelModel:
    p: BioParams
    dc: DerivedConstants
    gains: GainConfig
    N1: np.ndarray = field(repr=False)
    phi0_row: np.ndarray = field(repr=False)
    l_bar: float
    s_nodes: np.ndarray = field(repr=False)
    table: np.ndarray = field(repr=False)   # [phi, phi'] at s_nodes
    dtable: np.ndarray = field(repr=False)  # [phi', phi''] at s_nodes

    @property
    def ds(self) -> float:
        return float(self.s_nodes[1] - self.s_nodes[0])

    def row_exact(self, s: float) -> np.ndarray:
        """``[phi(s)^T, phi'(s)^T]`` by a direct matrix exponential (any real s)."""
        return self.phi0_row @ scipy.linalg.expm(self.N1 * s)


def build_kernel_model(dc: DerivedConstants, gc: GainConfig, l_bar: float,
                       p: BioParams, n_table: int = 4096) -> KernelModel:
    if not gc.admissible(dc):
        raise GainConditionViolated(
            f"gains ({gc.k1}, {gc.k2}) violate k1 > {dc.a1_tilde / dc.beta:.6g}, "
            f"k2 > {dc.a3_tilde / dc.beta:.6g}")
    if not gc.is_hurwitz(dc):
        raise GainConditionViolated("A1 + B K^T is not Hurwitz")
    if not (l_bar > 0 and math.isfinite(l_bar)):
        raise ValueError("l_bar must be positive")
    N1 = companion_matrix(dc, p)
    r0 = np.concatenate([dc.H, gc.K - (1.0 / p.D) * float(dc.H @ dc.B) * dc.H])
    s_nodes = np.linspace(-l_bar, 0.0, n_table + 1)
    expms = scipy.linalg.expm(N1[None, :, :] * s_nodes[:, None, None])
    table = np.einsum("j,njk->nk", r0, expms)
    table[-1] = r0
    if not np.all(np.isfinite(table)):
        raise MatrixExponentialFailure("non-finite kernel table")
    dtable = table @ N1
    for arr in (N1, r0, s_nodes, table, dtable):
        arr.setflags(write=False)
    return KernelModel(p, dc, gc, N1, r0, float(l_bar), s_nodes, table, dtable)


def _check_range(km: KernelModel, s: np.ndarray) -> None:
    tol = 1e-12 * km.l_bar
    if np.any(s < -km.l_bar - tol) or np.any(s > tol):
        raise KernelRangeError(f"kernel argument outside [-{km.l_bar}, 0]")


def phi_rows(km: KernelModel, s) -> np.ndarray:
    """Interpolated ``[phi, phi']`` (shape (n, 4)) at the points ``s``."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    _check_range(km, s)
    out = np.empty((s.size, 4))
    _kernels.hermite_eval(s, km.s_nodes[0], km.ds, km.table, km.dtable, out)
    return out


def phi_eval(km: KernelModel, s: float) -> tuple[np.ndarray, np.ndarray]:
    r = phi_rows(km, s)[0]
    return r[:2].copy(), r[2:].copy()


def phi_second(km: KernelModel, s) -> np.ndarray:
    """``phi''`` at ``s``, interpolated from the derivative table."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    _check_range(km, s)
    out = np.empty((s.size, 4))
    d2 = km.dtable @ km.N1
    _kernels.hermite_eval(s, km.s_nodes[0], km.ds, km.dtable, d2, out)
    return out[:, 2:]


def kernel_k(km: KernelModel, x, y):
    """k(x, y) = -(1/D) phi(x - y)^T B on the region x <= y."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(x > y + 1e-15 * max(km.l_bar, 1.0)):
        raise KernelRangeError("kernel evaluated outside x <= y")
    s = np.atleast_1d(x - y)
    r = phi_rows(km, s.ravel())
    val = -(r[:, :2] @ km.dc.B) / km.p.D
    return val.reshape(np.shape(x - y)) if np.ndim(x - y) else float(val[0])


def kernel_ode_residual(km: KernelModel, s) -> np.ndarray:
    """Relative residual of the kernel row ODE at the points ``s``."""
    p, dc = km.p, km.dc
    r = phi_rows(km, s)
    phi, dphi = r[:, :2], r[:, 2:]
    ddphi = phi_second(km, s)
    Ht = dc.H
    res = (p.D * ddphi - p.a * dphi - p.g * phi - phi @ dc.A1
           + np.outer(dphi @ dc.B - (p.a / p.D) * (phi @ dc.B), Ht))
    scale = np.maximum(np.abs(p.D * ddphi), np.abs(p.a * dphi)) + np.abs(phi @ dc.A1) + p.g * np.abs(phi)
    scale = np.max(scale, axis=1, keepdims=True)
    return np.abs(res) / np.maximum(scale, np.finfo(float).tiny)


# -- grid-level transforms ---------------------------------------------------

@dataclass
class TransformWorkspace:
    """Kernel samples for one grid and one domain length."""

    l: float
    kappa: np.ndarray      # k(x_i, x_i + m h l) for lag m = 0..N
    phi_tip: np.ndarray    # phi(x_i - l) rows, shape (N+1, 2)
    weights: np.ndarray    # trapezoid weights on [0, l]

    @property
    def N(self) -> int:
        return self.kappa.size - 1

    @property
    def hl(self) -> float:
        return self.l / self.N


def workspace(km: KernelModel, N: int, l: float) -> TransformWorkspace:
    if l > km.l_bar * (1 + 1e-12):
        raise KernelRangeError(f"domain length {l} exceeds l_bar {km.l_bar}")
    if l <= 0:
        raise KernelRangeError("domain length must be positive")
    lags = -np.arange(N + 1) * (l / N)
    rows = phi_rows(km, lags)
    kappa = -(rows[:, :2] @ km.dc.B) / km.p.D
    # phi(x_i - l) with x_i - l = -(N - i) h l, i.e. reversed lag order
    phi_tip = rows[::-1, :2].copy()
    w = np.full(N + 1, l / N)
    w[0] *= 0.5
    w[-1] *= 0.5
    return TransformWorkspace(l, kappa, phi_tip, w)


def continuous_control(km: KernelModel, e: ErrorState, l: float,
                       ws: TransformWorkspace | None = None) -> float:
    """U = int_0^l k(0, y) u(y) dy + phi(-l)^T X (trapezoid rule)."""
    ws = ws or workspace(km, e.u.size - 1, l)
    return float(np.dot(ws.weights * ws.kappa, e.u) + ws.phi_tip[0] @ e.X)


def sampled_control(km: KernelModel, e: ErrorState, l: float,
                    ws: TransformWorkspace | None = None) -> float:
    """Same law evaluated on the state frozen at an event instant."""
    return continuous_control(km, e, l, ws)


def forward_transform(km: KernelModel, e: ErrorState, l: float,
                      ws: TransformWorkspace | None = None, extended: bool = False,
                      digits: int | None = None) -> np.ndarray:
    """w(x) = u(x) - int_x^l k(x, y) u(y) dy - phi(x - l)^T X.

    With ``extended`` the correlation runs in ``np.longdouble`` and the
    result keeps that dtype.  With ``digits`` it runs in mpmath at that many
    decimal digits and returns an object array of ``mpf`` values.
    """
    ws = ws or workspace(km, e.u.size - 1, l)
    if digits is not None:
        M = transform_matrix(ws)
        with mpmath.workdps(digits):
            u = [mpmath.mpf(float(v)) for v in e.u]
            X = [mpmath.mpf(float(v)) for v in e.X]
            return np.array([mpmath.fsum(mpmath.mpf(M[i, j]) * u[j] for j in range(i, len(u)))
                             - mpmath.mpf(ws.phi_tip[i, 0]) * X[0]
                             - mpmath.mpf(ws.phi_tip[i, 1]) * X[1]
                             for i in range(len(u))], dtype=object)
    if extended:
        M = transform_matrix(ws).astype(np.longdouble)
        u = e.u.astype(np.longdouble)
        return M @ u - ws.phi_tip.astype(np.longdouble) @ e.X.astype(np.longdouble)
    tail = _kernels.volterra_tail(ws.kappa, e.u, ws.hl)
    return e.u - tail - ws.phi_tip @ e.X


def transform_matrix(ws: TransformWorkspace) -> np.ndarray:
    """Dense upper-triangular ``I - T`` of the discrete Volterra operator."""
    N = ws.N
    i, j = np.triu_indices(N + 1, 1)
    T = np.zeros((N + 1, N + 1))
    T[i, j] = ws.hl * ws.kappa[j - i]
    T[i, i] = 0.5 * ws.hl * ws.kappa[0]
    T[i, N] = 0.5 * ws.hl * ws.kappa[N - i]
    T[N, N] = 0.0
    return np.eye(N + 1) - T


def _back_substitute(M: np.ndarray, b: np.ndarray) -> np.ndarray:
    n = b.size
    x = np.zeros(n, dtype=M.dtype)
    for i in range(n - 1, -1, -1):
        x[i] = (b[i] - M[i, i + 1:] @ x[i + 1:]) / M[i, i]
    return x


def inverse_transform(km: KernelModel, w: np.ndarray, X, l: float,
                      ws: TransformWorkspace | None = None, extended: bool = False,
                      digits: int | None = None) -> np.ndarray:
    """Solve u - int_x^l k u dy = w + phi(x - l)^T X by back substitution.

    The discrete operator is badly conditioned once l reaches the target
    length (condition number ~3e10 at 12 um), so ``extended`` performs the
    substitution in ``np.longdouble`` and ``digits`` in mpmath; the latter
    returns float64 values rounded from the high-precision solution.
    """
    X = np.asarray(X)
    ws = ws or workspace(km, np.size(w) - 1, l)
    M = transform_matrix(ws)
    if np.any(np.diag(M) == 0) or not np.all(np.isfinite(M)):
        raise np.linalg.LinAlgError("degenerate triangular transform")
    if digits is not None:
        n = np.size(w)
        with mpmath.workdps(digits):
            Xm = [mpmath.mpf(float(v)) for v in X]
            rhs = [mpmath.mpf(w[i]) + mpmath.mpf(ws.phi_tip[i, 0]) * Xm[0]
                   + mpmath.mpf(ws.phi_tip[i, 1]) * Xm[1] for i in range(n)]
            u = [mpmath.mpf(0)] * n
            for i in range(n - 1, -1, -1):
                acc = mpmath.fsum(mpmath.mpf(M[i, j]) * u[j] for j in range(i + 1, n))
                u[i] = (rhs[i] - acc) / mpmath.mpf(M[i, i])
            return np.array([float(v) for v in u])
    if extended:
        ld = np.longdouble
        rhs = np.asarray(w, dtype=ld) + ws.phi_tip.astype(ld) @ X.astype(ld)
        return _back_substitute(M.astype(ld), rhs)
    rhs = np.asarray(w, dtype=float) + ws.phi_tip @ X.astype(float)
    return scipy.linalg.solve_triangular(M, rhs, lower=False)


def inverse_kernels(km: KernelModel, N: int, l: float) -> tuple[np.ndarray, np.ndarray]:
    """Discrete inverse-transform data on the grid of length ``l``.

    Returns ``q`` with ``q[i, j] ~ q(x_i, y_j)`` for ``j > i`` (zero
    elsewhere) and ``phibar`` with rows ``phibar(x_i - l)``, so that
    ``u = w + int_x^l q w dy + phibar^T X`` on the grid.
    """
    ws = workspace(km, N, l)
    M = transform_matrix(ws).astype(np.longdouble)
    n = N + 1
    inv = np.zeros((n, n), dtype=np.longdouble)
    eye = np.eye(n, dtype=np.longdouble)
    for k in range(n):
        inv[:, k] = _back_substitute(M, eye[:, k])
    resolvent = np.asarray(inv - eye, dtype=float)
    wts = np.full(n, ws.hl)
    wts[-1] *= 0.5
    q = np.triu(resolvent, 1) / wts[None, :]
    # the diagonal entry mixes the half-weight endpoint of each row
    q[np.arange(n - 1), np.arange(n - 1)] = resolvent[np.arange(n - 1), np.arange(n - 1)] / (0.5 * ws.hl)
    phibar = np.asarray(inv @ ws.phi_tip.astype(np.longdouble), dtype=float)
    return q, phibar


def F_eval(km: KernelModel, x: float, l: float, X) -> float:
    """F(x, X) = (phi'(x - l)^T - k(x, l) H^T) X."""
    X = np.asarray(X, dtype=float)
    if not (0 <= x <= l * (1 + 1e-14)):
        raise KernelRangeError("x must lie in [0, l]")
    r = phi_rows(km, min(x - l, 0.0))[0]
    k_xl = -(r[:2] @ km.dc.B) / km.p.D
    return float((r[2:] - k_xl * km.dc.H) @ X)


def boundary_residual(km: KernelModel, e: ErrorState, l: float,
                      ws: TransformWorkspace | None = None) -> float:
    """w(0) evaluated with Simpson's rule instead of the trapezoid rule used
    by the control law; measures the quadrature part of the boundary error."""
    ws = ws or workspace(km, e.u.size - 1, l)
    x = np.linspace(0.0, l, e.u.size)
    integral = scipy.integrate.simpson(ws.kappa * e.u, x=x)
    return float(e.u[0] - integral - ws.phi_tip[0] @ e.X)


class ControlRow(FeedbackRow):
    """The continuous law written as an implicit left boundary row."""

    def __init__(self, km: KernelModel, xi_grid: np.ndarray):
        self.km = km
        self.xi = np.asarray(xi_grid, dtype=float)
        self.ceq0 = float(steady_state_profile(km.dc, km.p, 0.0))

    def row(self, l: float):
        km, p = self.km, self.km.p
        ws = workspace(km, self.xi.size - 1, l)
        omega = ws.weights * ws.kappa
        phi = ws.phi_tip[0]
        ceq = steady_state_profile(km.dc, p, self.xi * l)
        rhs = self.ceq0 - float(omega @ ceq) - phi[0] * p.c_inf - phi[1] * p.l_s
        return omega, phi, rhs
