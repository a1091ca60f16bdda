"""Compiled inner loops: tridiagonal solves, the theta-step assembly,
Hermite table lookups and the Volterra correlation."""
import numpy as np
from numba import njit

PECLET_UPWIND = 2.0
NODE_SNAP = 1e-10


@njit(cache=True)
def thomas(lower, diag, upper, rhs):
    """Solve a tridiagonal system; ``lower[0]`` and ``upper[-1]`` are ignored.

    Returns the solution and a flag that is False on a zero pivot.
    """
    n = diag.size
    cp = np.empty(n)
    dp = np.empty(n)
    x = np.empty(n)
    if diag[0] == 0.0:
        return x, False
    cp[0] = upper[0] / diag[0]
    dp[0] = rhs[0] / diag[0]
    for i in range(1, n):
        den = diag[i] - lower[i] * cp[i - 1]
        if den == 0.0 or not np.isfinite(den):
            return x, False
        cp[i] = upper[i] / den if i < n - 1 else 0.0
        dp[i] = (rhs[i] - lower[i] * dp[i - 1]) / den
    x[n - 1] = dp[n - 1]
    for i in range(n - 2, -1, -1):
        x[i] = dp[i] - cp[i] * x[i + 1]
    return x, True


@njit(cache=True)
def interior_operator(xi, l, ldot, D, a, g, lower, diag, upper):
    """Fill the three-point stencil of c_t = D/l^2 c_xixi + (xi ldot/l - a/l) c_xi - g c.

    Central differences, switched to one-sided upwinding at nodes whose
    cell Peclet number exceeds 2.  Returns the largest |v| h (Courant
    numerator) for diagnostics.
    """
    n = xi.size - 1
    h = 1.0 / n
    dif = D / (l * l * h * h)
    vmax = 0.0
    for i in range(1, n):
        v = xi[i] * ldot / l - a / l
        if abs(v) > vmax:
            vmax = abs(v)
        peclet = abs(v) * h * l * l / D
        if peclet > PECLET_UPWIND:
            if v > 0.0:
                lower[i] = dif
                diag[i] = -2.0 * dif - g - v / h
                upper[i] = dif + v / h
            else:
                lower[i] = dif - v / h
                diag[i] = -2.0 * dif - g + v / h
                upper[i] = dif
        else:
            lower[i] = dif - v / (2.0 * h)
            diag[i] = -2.0 * dif - g
            upper[i] = dif + v / (2.0 * h)
    return vmax


@njit(cache=True)
def theta_solve(c_old, xi, l_old, l_new, ldot, dt, theta, D, a, g,
                src_old, src_new, right_dirichlet, right_value,
                l_c, r_g, rt_g, c_inf, c_tip_star,
                left_value, omega, row0_tip, row0_rhs, feedback):
    """One theta-scheme solve on the front-fixed grid.

    Left boundary: Dirichlet ``left_value`` or, with ``feedback`` set, the
    linear law ``(1-omega_0) c_0 - sum_{j>=1} omega_j c_j - row0_tip c_N = row0_rhs``.
    Right boundary: Dirichlet ``right_value`` or the cone ODE with its
    quadratic loss Newton-linearised about ``c_tip_star``.
    Returns (c_new, ok, vmax_new).
    """
    n = c_old.size - 1
    h = 1.0 / n
    lo_o = np.zeros(n + 1)
    di_o = np.zeros(n + 1)
    up_o = np.zeros(n + 1)
    lo_n = np.zeros(n + 1)
    di_n = np.zeros(n + 1)
    up_n = np.zeros(n + 1)
    interior_operator(xi, l_old, ldot, D, a, g, lo_o, di_o, up_o)
    vmax = interior_operator(xi, l_new, ldot, D, a, g, lo_n, di_n, up_n)

    lower = np.zeros(n + 1)
    diag = np.zeros(n + 1)
    upper = np.zeros(n + 1)
    rhs = np.zeros(n + 1)
    w_old = 1.0 - theta
    for i in range(1, n):
        lower[i] = -dt * theta * lo_n[i]
        diag[i] = 1.0 - dt * theta * di_n[i]
        upper[i] = -dt * theta * up_n[i]
        rhs[i] = (c_old[i] + dt * w_old * (lo_o[i] * c_old[i - 1] + di_o[i] * c_old[i]
                                           + up_o[i] * c_old[i + 1])
                  + dt * (theta * src_new[i] + w_old * src_old[i]))

    if right_dirichlet:
        diag[n] = 1.0
        rhs[n] = right_value
        extra = 0.0
    else:
        # l_c dc_c/dt = (a - g l_c) c_c - D (3c_N - 4c_{N-1} + c_{N-2})/(2 h l)
        #               - r_g c_c (c_c - c_inf) - rt_g l_c (c_c - c_inf)
        # new-level quadratic loss Newton-linearised about c_tip_star
        s_old = D / (l_c * 2.0 * h * l_old)
        s_new = D / (l_c * 2.0 * h * l_new)
        co = c_old[n]
        f_old = ((a - g * l_c) / l_c * co
                 - s_old * (3.0 * co - 4.0 * c_old[n - 1] + c_old[n - 2])
                 - (r_g * co + rt_g * l_c) * (co - c_inf) / l_c)
        slope = (r_g * (2.0 * c_tip_star - c_inf) + rt_g * l_c) / l_c
        const = (r_g * c_tip_star * c_tip_star + rt_g * l_c * c_inf) / l_c
        diag[n] = 1.0 - dt * theta * ((a - g * l_c) / l_c - 3.0 * s_new - slope)
        lower[n] = -dt * theta * 4.0 * s_new
        extra = dt * theta * s_new  # coefficient of c_{N-2}
        rhs[n] = (co + dt * w_old * f_old + dt * theta * const
                  + dt * (theta * src_new[n] + w_old * src_old[n]))
        # eliminate c_{N-2} with row N-1
        fac = extra / lower[n - 1]
        lower[n] -= fac * diag[n - 1]
        diag[n] -= fac * upper[n - 1]
        rhs[n] -= fac * rhs[n - 1]

    if not feedback:
        diag[0] = 1.0
        rhs[0] = left_value
        c_new, ok = thomas(lower, diag, upper, rhs)
        return c_new, ok, vmax

    # c = p + c_0 q on rows 1..N, then close with the feedback row
    m = n
    lo = lower[1:].copy()
    di = diag[1:].copy()
    upv = upper[1:].copy()
    r1 = rhs[1:].copy()
    p, ok1 = thomas(lo, di, upv, r1)
    e = np.zeros(m)
    e[0] = -lower[1]
    q, ok2 = thomas(lo, di, upv, e)
    c_new = np.empty(n + 1)
    if not (ok1 and ok2):
        return c_new, False, vmax
    num = row0_rhs
    den = 1.0 - omega[0]
    for j in range(1, n + 1):
        wj = omega[j]
        if j == n:
            wj += row0_tip
        num += wj * p[j - 1]
        den -= wj * q[j - 1]
    if den == 0.0 or not np.isfinite(den):
        return c_new, False, vmax
    c0 = num / den
    c_new[0] = c0
    for j in range(1, n + 1):
        c_new[j] = p[j - 1] + c0 * q[j - 1]
    return c_new, True, vmax


@njit(cache=True)
def hermite_eval(s_query, s0, ds, f, df, out):
    """Cubic Hermite interpolation on a uniform table; exact at nodes."""
    n = f.shape[0]
    ncol = f.shape[1]
    for k in range(s_query.size):
        t = (s_query[k] - s0) / ds
        i = int(np.floor(t))
        if i < 0:
            i = 0
        if i > n - 2:
            i = n - 2
        u = t - i
        # snap rounding noise in (s - s0)/ds onto the node
        if u < NODE_SNAP:
            for c in range(ncol):
                out[k, c] = f[i, c]
            continue
        if u > 1.0 - NODE_SNAP:
            for c in range(ncol):
                out[k, c] = f[i + 1, c]
            continue
        u2 = u * u
        u3 = u2 * u
        h00 = 2.0 * u3 - 3.0 * u2 + 1.0
        h10 = u3 - 2.0 * u2 + u
        h01 = -2.0 * u3 + 3.0 * u2
        h11 = u3 - u2
        for c in range(ncol):
            out[k, c] = (h00 * f[i, c] + h10 * ds * df[i, c]
                         + h01 * f[i + 1, c] + h11 * ds * df[i + 1, c])


@njit(cache=True)
def volterra_tail(kappa, u, hl):
    """I_i = int_{x_i}^{l} kappa(x_i - y) u(y) dy by the trapezoid rule,
    with ``kappa[m]`` the kernel at lag ``m`` grid cells."""
    n = u.size - 1
    out = np.zeros(n + 1)
    for i in range(n):
        acc = 0.5 * kappa[0] * u[i]
        for j in range(i + 1, n):
            acc += kappa[j - i] * u[j]
        acc += 0.5 * kappa[n - i] * u[n]
        out[i] = hl * acc
    return out
