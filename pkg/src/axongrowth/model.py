"""Plant parameters, steady state, error coordinates and nonlinear remainders.

Everything here is SI: metres, seconds, mol/m^3.  The growth model is a
moving-boundary advection-diffusion-degradation PDE for the tubulin
concentration ``c(x, t)`` on ``0 <= x <= l(t)``, coupled to two ODEs for the
growth-cone concentration ``c_c`` and the axon length ``l``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# |lambda_plus * z2| beyond this leaves the range where the local model means anything
EXPONENT_GUARD = 50.0


class InvalidParameters(ValueError):
    """Raised for physically meaningless parameter sets."""


class ModelRangeError(ArithmeticError):
    """Raised when an error state is far outside the model's validity range."""


@dataclass(frozen=True)
class BioParams:
    """Biological constants of the growth model.

    ``rt_g`` is the lumped rate r~_g; its unit is taken as 1/s, the only
    reading under which the cone-concentration constant a1_tilde is
    dimensionally consistent.
    """

    D: float = 10e-12
    a: float = 1e-8
    g: float = 5e-7
    r_g: float = 1.783e-5
    rt_g: float = 0.053
    l_c: float = 4e-6
    c_inf: float = 0.0119
    l_s: float = 12e-6

    def validate(self) -> None:
        for name in ("D", "r_g", "l_c", "c_inf", "l_s"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise InvalidParameters(f"{name} must be positive, got {value!r}")
        for name in ("a", "g"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise InvalidParameters(f"{name} must be non-negative, got {value!r}")
        if not math.isfinite(self.rt_g):
            raise InvalidParameters("rt_g must be finite")


@dataclass(frozen=True)
class DerivedConstants:
    lambda_plus: float
    lambda_minus: float
    K_plus: float
    K_minus: float
    q_s_star: float
    a1_tilde: float
    a2_tilde: float
    a3_tilde: float
    beta: float
    kappa: float
    A: np.ndarray = field(repr=False)
    A1: np.ndarray = field(repr=False)
    B: np.ndarray = field(repr=False)
    H: np.ndarray = field(repr=False)
    linearization: str = "jacobian"

    def as_dict(self) -> dict:
        return {
            "lambda_plus": self.lambda_plus,
            "lambda_minus": self.lambda_minus,
            "K_plus": self.K_plus,
            "K_minus": self.K_minus,
            "q_s_star": self.q_s_star,
            "a1_tilde": self.a1_tilde,
            "a2_tilde": self.a2_tilde,
            "a3_tilde": self.a3_tilde,
            "beta": self.beta,
            "kappa": self.kappa,
            "A": self.A.tolist(),
            "A1": self.A1.tolist(),
            "B": self.B.tolist(),
            "H": self.H.tolist(),
            "linearization": self.linearization,
        }


def derive_constants(p: BioParams, linearization: str = "jacobian") -> DerivedConstants:
    """Closed-form constants of the steady state and the error system.

    Parameters
    ----------
    p : BioParams
    linearization : {"jacobian", "literal"}
        How the (1, 2) entry of ``A1`` is formed.  ``"jacobian"`` uses
        ``-beta * a2_tilde``, the exact derivative of the cone ODE at the
        origin (so ``A1 == A``).  ``"literal"`` places ``a3_tilde`` there as
        printed in the source derivation; it is kept for comparison only and
        does not yield a working controller with the reference gains.
    """
    p.validate()
    if linearization not in ("jacobian", "literal"):
        raise ValueError(f"unknown linearization {linearization!r}")
    D, a, g = p.D, p.a, p.g
    root = math.sqrt(a * a + 4.0 * D * g)
    lam_p = a / (2 * D) + root / (2 * D)
    lam_m = a / (2 * D) - root / (2 * D)
    shift = (a - 2 * g * p.l_c) / (2 * root)
    K_p = 0.5 + shift
    K_m = 0.5 - shift
    q_s_star = -p.c_inf * (K_p * math.exp(-lam_p * p.l_s) + K_m * math.exp(-lam_m * p.l_s))

    beta = D / p.l_c
    kappa = p.r_g / p.l_c
    a1 = (a - p.r_g * p.c_inf) / p.l_c - g - p.rt_g
    a2 = p.c_inf * (lam_p**2 * K_p + lam_m**2 * K_m)
    a3 = (a * a + D * g - a * g * p.l_c) / D**2

    A = np.array([[a1, -beta * a2], [p.r_g, 0.0]])
    if linearization == "jacobian":
        A1 = A.copy()
    else:
        A1 = np.array([[a1, a3], [p.r_g, 0.0]])
    B = np.array([-beta, 0.0])
    H = np.array([1.0, -(a - g * p.l_c) * p.c_inf / D])
    for arr in (A, A1, B, H):
        arr.setflags(write=False)
    return DerivedConstants(
        lambda_plus=lam_p,
        lambda_minus=lam_m,
        K_plus=K_p,
        K_minus=K_m,
        q_s_star=q_s_star,
        a1_tilde=a1,
        a2_tilde=a2,
        a3_tilde=a3,
        beta=beta,
        kappa=kappa,
        A=A,
        A1=A1,
        B=B,
        H=H,
        linearization=linearization,
    )


def steady_state_profile(dc: DerivedConstants, p: BioParams, x):
    """Equilibrium concentration c_eq(x) for the target length ``p.l_s``."""
    x = np.asarray(x, dtype=float)
    s = x - p.l_s
    return p.c_inf * (dc.K_plus * np.exp(dc.lambda_plus * s) + dc.K_minus * np.exp(dc.lambda_minus * s))


def steady_state_derivatives(dc: DerivedConstants, p: BioParams, x, order: int = 1):
    """``order``-th x-derivative of the equilibrium profile."""
    x = np.asarray(x, dtype=float)
    s = x - p.l_s
    return p.c_inf * (
        dc.K_plus * dc.lambda_plus**order * np.exp(dc.lambda_plus * s)
        + dc.K_minus * dc.lambda_minus**order * np.exp(dc.lambda_minus * s)
    )


@dataclass
class PlantState:
    t: float
    xi_grid: np.ndarray
    c: np.ndarray
    c_c: float
    l: float

    def __post_init__(self) -> None:
        self.xi_grid = np.asarray(self.xi_grid, dtype=float)
        self.c = np.asarray(self.c, dtype=float)
        if self.c.shape != self.xi_grid.shape:
            raise ValueError("concentration samples and grid differ in size")

    @property
    def N(self) -> int:
        return self.xi_grid.size - 1

    @property
    def x(self) -> np.ndarray:
        return self.xi_grid * self.l

    def copy(self) -> "PlantState":
        return PlantState(self.t, self.xi_grid.copy(), self.c.copy(), self.c_c, self.l)


@dataclass
class ErrorState:
    u: np.ndarray
    X: np.ndarray

    def __post_init__(self) -> None:
        self.u = np.asarray(self.u, dtype=float)
        self.X = np.asarray(self.X, dtype=float).reshape(2)


def uniform_grid(N: int) -> np.ndarray:
    return np.linspace(0.0, 1.0, N + 1)


def steady_plant_state(dc: DerivedConstants, p: BioParams, N: int, t: float = 0.0) -> PlantState:
    xi = uniform_grid(N)
    c = steady_state_profile(dc, p, xi * p.l_s)
    c[-1] = p.c_inf
    return PlantState(t, xi, c, p.c_inf, p.l_s)


def to_error_state(s: PlantState, dc: DerivedConstants, p: BioParams) -> ErrorState:
    u = s.c - steady_state_profile(dc, p, s.x)
    return ErrorState(u, np.array([s.c_c - p.c_inf, s.l - p.l_s]))


def from_error_state(e: ErrorState, dc: DerivedConstants, p: BioParams, l: float,
                     xi_grid: np.ndarray | None = None, t: float = 0.0) -> PlantState:
    if l <= 0:
        raise ValueError("axon length must be positive")
    if xi_grid is None:
        xi_grid = uniform_grid(e.u.size - 1)
    xi_grid = np.asarray(xi_grid, dtype=float)
    if xi_grid.size != e.u.size:
        raise ValueError("error profile and grid differ in size")
    c = e.u + steady_state_profile(dc, p, xi_grid * l)
    return PlantState(t, xi_grid, c, e.X[0] + p.c_inf, l)


@dataclass(frozen=True)
class NonlinearTerms:
    f1: float
    h_tilde: float
    f: float
    h: float
    h_star: float


def _guard(dc: DerivedConstants, z2: float) -> None:
    if not math.isfinite(z2) or abs(dc.lambda_plus * z2) > EXPONENT_GUARD:
        raise ModelRangeError(
            f"length error {z2!r} m is outside the model range (|lambda_plus*z2| > {EXPONENT_GUARD})"
        )


def nonlinear_terms(X, dc: DerivedConstants, p: BioParams) -> NonlinearTerms:
    """Nonlinear remainders of the error system at ``X = [z1, z2]``.

    ``f`` is what is left of the cone ODE after removing ``A X`` and the flux
    input; ``h`` is the boundary value of the error profile at the tip, and
    ``h_star = h - H^T X`` its purely nonlinear part.
    """
    z1, z2 = float(X[0]), float(X[1])
    _guard(dc, z2)
    ep = math.exp(dc.lambda_plus * z2)
    em = math.exp(dc.lambda_minus * z2)
    f1 = (
        -p.c_inf * (dc.K_plus * dc.lambda_plus * ep + dc.K_minus * dc.lambda_minus * em)
        + dc.a2_tilde * z2
        + p.c_inf * (p.a - p.g * p.l_c) / p.D
    )
    h_tilde = p.c_inf * (1.0 - dc.K_plus * ep - dc.K_minus * em)
    f = -dc.kappa * z1 * z1 + dc.beta * f1
    h = z1 + h_tilde
    h_star = h - float(dc.H @ np.array([z1, z2]))
    return NonlinearTerms(f1, h_tilde, f, h, h_star)


def nonlinearity_bounds(dc: DerivedConstants, p: BioParams) -> tuple[float, float]:
    """Constants (k_n, k_m) bounding the quadratic and cubic remainders."""
    k_n = max(p.c_inf * dc.K_plus * dc.lambda_plus**2, p.c_inf * dc.K_minus * dc.lambda_minus**2)
    k_m = max(p.c_inf * dc.K_plus * dc.lambda_plus**3, p.c_inf * dc.K_minus * dc.lambda_minus**3)
    return k_n, k_m


def error_dynamics(X, u_x_tip: float, dc: DerivedConstants, p: BioParams) -> np.ndarray:
    """Right side of the ODE pair in error coordinates: ``A X + [f, 0] + B u_x(l)``."""
    X = np.asarray(X, dtype=float)
    nl = nonlinear_terms(X, dc, p)
    return dc.A @ X + np.array([nl.f, 0.0]) + dc.B * u_x_tip
