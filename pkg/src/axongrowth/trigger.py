"""Dynamic event-triggering mechanism, its constants and the dwell-time bound.

The trigger watches the deviation ``d = U(t) - U(t_j)`` between the
continuous law and the held sample, and an internal variable ``m < 0``
obeying

    m' = -eta m + rho d^2 - b1 |X|^2 - b2 |X|^4 - b3 w_x(0)^2 - b4 ||w||^2 - b5 w_x(l)^2.

An event fires when ``d^2 > -gamma m``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.integrate

from .backstepping import KernelModel, inverse_kernels, kernel_k, phi_rows, phi_second
from .model import BioParams, DerivedConstants, nonlinearity_bounds


class TriggerError(ArithmeticError):
    pass


@dataclass(frozen=True)
class EtmConfig:
    gamma: float = 1e4
    eta: float = 100.0
    rho: float = 4e22
    sigma: float = 0.5
    beta: tuple = (1.634e22, 5.229e12, 6.569e-14, 2.614e13, 2.94e-12)
    m0: float = -0.5

    def validate(self) -> None:
        for name in ("gamma", "eta", "rho"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive, got {v!r}")
        if not (0.0 < self.sigma < 1.0):
            raise ValueError(f"sigma must lie in (0, 1), got {self.sigma!r}")
        if len(self.beta) != 5 or any(not (math.isfinite(b) and b >= 0) for b in self.beta):
            raise ValueError("beta must hold five non-negative values")
        if not self.m0 < 0:
            raise ValueError("m0 must be negative")


# Literal values of the reference experiment (sigma = 0.5).
PAPER_FIG2 = EtmConfig()


@dataclass(frozen=True)
class AlphaConstants:
    alpha: tuple
    rho1: float
    k_n: float
    k_m: float
    zeta_norm: float
    l_bar: float
    l_argmax: tuple = field(default=(), compare=False)

    @property
    def alpha1(self) -> float:
        return self.alpha[0]

    @property
    def alpha3(self) -> float:
        return self.alpha[2]

    @property
    def alpha5(self) -> float:
        return self.alpha[4]

    def as_dict(self) -> dict:
        out = {f"alpha{i + 1}": a for i, a in enumerate(self.alpha)}
        out.update(rho1=self.rho1, k_n=self.k_n, k_m=self.k_m, zeta_norm=self.zeta_norm,
                   l_bar=self.l_bar)
        return out


def _zeta(km: KernelModel, y: np.ndarray, s_coef: float) -> np.ndarray:
    """zeta(y) = D k_yy(0,y) + a k_y(0,y) - (g + s) k(0,y) from analytic phi derivatives."""
    p, B = km.p, km.dc.B
    r = phi_rows(km, -y)
    dd = phi_second(km, -y)
    k = -(r[:, :2] @ B) / p.D
    k_y = (r[:, 2:] @ B) / p.D
    k_yy = -(dd @ B) / p.D
    return p.D * k_yy + p.a * k_y - (p.g + s_coef) * k


def _trapz(f: np.ndarray, h: float) -> float:
    return float(h * (f.sum() - 0.5 * (f[0] + f[-1])))


def _alphas_at(km: KernelModel, l: float, N: int, s_coef: float, k_n: float) -> tuple:
    p, dc = km.p, km.dc
    B, H, A = dc.B, dc.H, dc.A
    HB = float(H @ B)
    h = l / N
    y = np.linspace(0.0, l, N + 1)

    r_m = phi_rows(km, -l)[0]
    phi_m, dphi_m = r_m[:2], r_m[2:]
    phi_p = km.row_exact(l)[:2]        # phi(+l) as printed; outside the table
    k0l = kernel_k(km, 0.0, l)
    q, phibar = inverse_kernels(km, N, l)

    zeta = _zeta(km, y, s_coef)
    zeta2 = _trapz(zeta**2, h)
    pb_int = np.array([_trapz(phibar[:, 0], h), _trapz(phibar[:, 1], h)])
    pb0 = phibar[-1]                    # phibar(0): x = l
    pbm = phibar[0]                     # phibar(-l): x = 0
    qq = float(h * h * np.sum(np.triu(q, 1) ** 2))
    q_x0 = (-3.0 * q[0] + 4.0 * q[1] - q[2]) / (2.0 * h)
    qx2 = _trapz(q_x0[2:] ** 2, h) if N > 3 else 0.0
    q_ll = 1.0 / p.l_c                  # diagonal of the resolvent equals k(x, x)

    tip = p.D * k0l + float(phi_p @ B)
    lead = float(phi_m @ B) - p.a * k0l
    a1 = (8.0 * float(np.sum((s_coef * phi_m - phi_m @ A) ** 2))
          + 32.0 * HB**2 * float(pbm @ pbm)
          + 32.0 * tip**2 * float(pb0 @ pb0)
          + 64.0 * lead**2 * float(pb0 @ pb0)
          + 12.0 * zeta2 * float(pb_int @ pb_int))
    a2 = (8.0 * (dc.kappa**2 * float(phi_m @ phi_m) + (p.r_g * dphi_m[0]) ** 2)
          + 16.0 * lead**2
          + 124.0 * k_n**2 * tip**2 * q_ll**2)
    a3 = 32.0 * HB**2
    a4 = 18.0 * zeta2 * (1.0 + math.sqrt(qq)) ** 2 + 32.0 * HB**2 * qx2
    a5 = 32.0 * tip**2
    return (a1, a2, a3, a4, a5), zeta2


def alpha_constants(km: KernelModel, dc: DerivedConstants, p: BioParams, l_bar: float,
                    N: int = 64, n_lengths: int = 24) -> AlphaConstants:
    """Trigger-design constants with every length-dependent factor replaced by
    its maximum over a grid of lengths in (0, l_bar].

    Products of a kernel row with ``B`` are read as scalars; where a display
    mixes a scalar and a matrix the row form ``s phi^T - phi^T A`` is used,
    and squared vectors mean squared Euclidean norms.
    """
    B, H = dc.B, dc.H
    dphi0 = km.phi0_row[2:]
    s_coef = float(dphi0 @ B) + float(H @ B) / p.D
    rho1 = 8.0 * abs(float(dphi0 @ B)) + abs(float(H @ B)) / p.D
    k_n, k_m = nonlinearity_bounds(dc, p)
    best = np.zeros(5)
    arg = [0.0] * 5
    zeta_best = 0.0
    for l in np.linspace(l_bar / n_lengths, l_bar, n_lengths):
        vals, zeta2 = _alphas_at(km, float(l), N, s_coef, k_n)
        for i, v in enumerate(vals):
            if not math.isfinite(v):
                raise TriggerError(f"non-finite alpha{i + 1} at l = {l:.3e} m")
            if v > best[i]:
                best[i], arg[i] = v, float(l)
        zeta_best = max(zeta_best, zeta2)
    return AlphaConstants(tuple(float(b) for b in best), rho1, k_n, k_m, zeta_best,
                          float(l_bar), tuple(arg))


def gamma_lower_bound(ac: AlphaConstants, p: BioParams, sigma: float) -> float:
    return 16.0 * (ac.alpha3 + ac.alpha5) / (p.D * (1.0 - sigma))


def d1_lower_bound(ac: AlphaConstants, p: BioParams, beta4: float, l_bar: float) -> float:
    return (4.0 * p.a**2 / p.D**2 + (1.0 + l_bar) / l_bar + 4.0 * beta4 / p.g
            + p.D * ac.alpha[3] / (4.0 * p.g * ac.alpha5))


def rho_rule(ac: AlphaConstants, p: BioParams, d1: float) -> float:
    return 16.0 * p.D * d1**2 + p.a * d1 / 2.0 + 16.0 * p.g / p.D + 16.0 * ac.rho1 / p.D


def etm_defaults(ac: AlphaConstants, p: BioParams, sigma: float = 0.5, eta: float = 100.0,
                 m0: float = -0.5, d1: float | None = None, **overrides) -> EtmConfig:
    """Trigger parameters from the selection rules.

    gamma is twice its lower bound, ``beta_i = alpha_i / (gamma (1 - sigma))``,
    ``d1`` defaults to its lower bound and rho follows from it.  Keyword
    overrides (``gamma``, ``rho``, ``beta``) pin individual values.
    """
    if not (0.0 < sigma < 1.0):
        raise ValueError(f"sigma must lie in (0, 1), got {sigma!r}")
    if not eta > 0:
        raise ValueError("eta must be positive")
    unknown = set(overrides) - {"gamma", "rho", "beta"}
    if unknown:
        raise TypeError(f"unknown overrides {sorted(unknown)}")
    gamma = overrides.get("gamma", 2.0 * gamma_lower_bound(ac, p, sigma))
    beta = overrides.get("beta", tuple(a / (gamma * (1.0 - sigma)) for a in ac.alpha))
    if d1 is None:
        d1 = d1_lower_bound(ac, p, beta[3], ac.l_bar)
    rho = overrides.get("rho", rho_rule(ac, p, d1))
    cfg = EtmConfig(gamma=float(gamma), eta=float(eta), rho=float(rho), sigma=float(sigma),
                    beta=tuple(float(b) for b in beta), m0=float(m0))
    cfg.validate()
    return cfg


def paper_preset(sigma: float = 0.5, eta: float = 100.0) -> EtmConfig:
    """The reference experiment's trigger values with ``sigma`` and ``eta`` set.

    gamma, rho and the betas stay pinned; sigma does not enter the trigger
    rule itself, only the selection rules and the dwell-time constants.
    """
    return replace(PAPER_FIG2, sigma=float(sigma), eta=float(eta))


# -- runtime state -------------------------------------------------------------

@dataclass(frozen=True)
class Event:
    index: int
    t_j: float
    U_tj: float
    gap: float


@dataclass
class EtmState:
    m: float
    d: float = 0.0
    U_held: float = 0.0
    t_last_event: float = 0.0
    events: list = field(default_factory=list)

    @classmethod
    def start(cls, cfg: EtmConfig, U0: float, t0: float = 0.0) -> "EtmState":
        st = cls(m=cfg.m0, d=0.0, U_held=U0, t_last_event=t0)
        st.events.append(Event(0, t0, U0, 0.0))
        return st


@dataclass(frozen=True)
class TriggerSignals:
    U_cont: float
    X: np.ndarray
    w0x: float
    wl_x: float
    w_norm2: float


# smallest magnitude m may take; keeps the strict sign representable
M_FLOOR = -np.finfo(float).tiny


def sink(cfg: EtmConfig, sig: TriggerSignals) -> float:
    XX = float(np.dot(sig.X, sig.X))
    b = cfg.beta
    return (b[0] * XX + b[1] * XX * XX + b[2] * sig.w0x**2 + b[3] * sig.w_norm2
            + b[4] * sig.wl_x**2)


def advance_m(m: float, cfg: EtmConfig, d: float, sig: TriggerSignals, dt: float) -> float:
    """Exact decay over ``dt`` with the source frozen at its end-of-step value."""
    decay = math.exp(-cfg.eta * dt)
    src = cfg.rho * d * d - sink(cfg, sig)
    m_new = m * decay + src * (-math.expm1(-cfg.eta * dt)) / cfg.eta
    # with d = 0 every source is a sink, so m >= 0 can only be underflow
    return min(m_new, M_FLOOR) if m_new < 0 or d == 0 else m_new


def fires(cfg: EtmConfig, d: float, m: float) -> bool:
    return d * d > -cfg.gamma * m


def etm_step(st: EtmState, cfg: EtmConfig, sig: TriggerSignals, dt: float,
             t: float) -> tuple[EtmState, bool]:
    """Advance the trigger to time ``t`` (one step of length ``dt``).

    The new state is returned; on an event the held input jumps to
    ``U_cont``, ``d`` resets to zero and ``m`` is re-advanced with ``d = 0``.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    vals = (sig.U_cont, sig.w0x, sig.wl_x, sig.w_norm2, *np.asarray(sig.X, dtype=float))
    if not all(math.isfinite(v) for v in vals):
        raise TriggerError("non-finite trigger signal")
    d = sig.U_cont - st.U_held
    m = advance_m(st.m, cfg, d, sig, dt)
    if not math.isfinite(m):
        raise TriggerError("non-finite trigger variable")
    if not fires(cfg, d, m):
        return EtmState(m, d, st.U_held, st.t_last_event, st.events), False
    return commit_event(st, cfg, sig, dt, t), True


def commit_event(st: EtmState, cfg: EtmConfig, sig: TriggerSignals, dt: float,
                 t: float) -> EtmState:
    """Sample ``sig.U_cont`` at ``t``: d resets and m advances with d = 0."""
    m = advance_m(st.m, cfg, 0.0, sig, dt)
    ev = Event(len(st.events), t, sig.U_cont, t - st.t_last_event)
    return EtmState(m, 0.0, sig.U_cont, t, st.events + [ev])


# -- dwell time ----------------------------------------------------------------

@dataclass(frozen=True)
class DwellTime:
    tau: float
    a1: float
    a2: float
    a3: float
    tau_length_reading: float
    psi_interval: tuple


def dwell_coefficients(cfg: EtmConfig, rho1: float) -> tuple[float, float, float]:
    s = cfg.sigma
    a1 = cfg.rho * s * cfg.gamma
    a2 = 1.0 + 2.0 * rho1 + (1.0 - s) * cfg.rho + cfg.eta
    a3 = (1.0 + rho1 + cfg.gamma * (1.0 - s) * cfg.rho + cfg.eta) * (1.0 - s) / s
    return a1, a2, a3


def dwell_time(cfg: EtmConfig, ac: AlphaConstants, l_ref: float | None = None) -> DwellTime:
    """Minimum inter-event time from the comparison bound on psi.

    ``tau`` integrates ``1 / (a1 s^2 + a2 s + a3)`` over the excursion of psi
    from its post-event value ``-(1 - sigma)/sigma`` to the firing level 1.
    ``tau_length_reading`` integrates the same function over ``[0, l_ref]``.
    """
    cfg.validate()
    a1, a2, a3 = dwell_coefficients(cfg, ac.rho1)
    lo, hi = -(1.0 - cfg.sigma) / cfg.sigma, 1.0
    f = lambda s: 1.0 / (a1 * s * s + a2 * s + a3)
    grid = np.linspace(lo, hi, 1001)
    if np.any(a1 * grid**2 + a2 * grid + a3 <= 0):
        raise TriggerError("dwell-time integrand denominator is not positive")
    tau, _ = scipy.integrate.quad(f, lo, hi, epsabs=0.0, epsrel=1e-13, limit=200)
    l_ref = ac.l_bar if l_ref is None else l_ref
    tau_l, _ = scipy.integrate.quad(f, 0.0, l_ref, epsabs=0.0, epsrel=1e-13, limit=200)
    return DwellTime(float(tau), a1, a2, a3, float(tau_l), (lo, hi))


@dataclass(frozen=True)
class ZenoReport:
    events: int
    min_gap: float
    mean_gap: float
    dt: float
    tau: float
    zeno_free: bool
    violations: tuple


def zeno_report(events, dt: float, tau: float = float("nan")) -> ZenoReport:
    """Scan an event log (the first entry is the initial sample)."""
    gaps = np.array([e.gap for e in events[1:]], dtype=float)
    if gaps.size == 0:
        return ZenoReport(len(events), math.inf, math.inf, dt, tau, True, ())
    bad = tuple(int(e.index) for e in events[1:] if e.gap < dt * (1 - 1e-9))
    return ZenoReport(len(events), float(gaps.min()), float(gaps.mean()), dt, tau, not bad, bad)
