"""Steady KdV-Burgers fronts, window averaging and effective Burgers fits.

In the moving frame xi = x - t/2 the once-integrated profile equation is

    u'' = u'/R + u/2 - u^2/2,

with u -> 0 as xi -> +inf (a saddle) and u -> 1 as xi -> -inf (a spiral for
R > 1/sqrt(2)).  The profile is found by leaving the saddle along its stable
eigendirection and integrating towards decreasing xi, where the heteroclinic
orbit is attracting.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid
from scipy.optimize import minimize

from .csvio import write_csv
from .ode import IntegrationBlowup

FRONT_SPEED = 0.5


class SpanError(ValueError):
    pass


class WindowError(ValueError):
    pass


class FitInstabilityError(RuntimeError):
    pass


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class WaveProfile:
    xi: np.ndarray
    u: np.ndarray
    reynolds: float = float("nan")
    oscillatory: bool = False

    @property
    def dx(self):
        return float(self.xi[1] - self.xi[0])

    def at(self, x):
        return np.interp(x, self.xi, self.u)

    def to_csv(self, path, stride=1):
        return write_csv(path, ["xi", "u"], zip(self.xi[::stride], self.u[::stride]))


@dataclass(frozen=True)
class BurgersFit:
    eps_eff: float
    shift: float
    residual: float
    window: float
    reynolds: float = float("nan")
    restart_eps: tuple = ()


@dataclass(frozen=True)
class SimilarityFit:
    nu: float
    log_prefactor: float
    r_values: np.ndarray
    fit_residual: float
    window: float = float("nan")


def integrated_flux(u, c=FRONT_SPEED):
    """-c u + u^2/2: the non-derivative part of the integrated profile equation."""
    return -c * u + 0.5 * u * u


def front_speed(u_left=1.0, u_right=0.0):
    """Speed for which both end states are equilibria of the integrated equation."""
    c = 0.5 * (u_left + u_right)
    assert integrated_flux(u_left, c) == integrated_flux(u_right, c) == 0.0
    return c


def oscillatory_threshold():
    """The u=1 equilibrium is a spiral iff R exceeds this value."""
    return 1.0 / math.sqrt(2.0)


def steady_profile(R, xi_span=(-200.0, 40.0), dx=0.01, delta=1e-6):
    """Heteroclinic front from u=1 (left) to u=0 (right) for Reynolds number R.

    The grid is shifted so that the profile passes u = 1/2 at xi = 0.  The
    right end is pushed past the launch point when needed so that |u| < 1e-6
    there.
    """
    if not R > 0:
        raise ValueError("R must be positive")
    if not dx > 0:
        raise ValueError("dx must be positive")
    c = front_speed()
    inv_r = 1.0 / R
    lam = 0.5 * (inv_r - math.sqrt(inv_r * inv_r + 4.0 * c))

    def f(u, p):
        return p, p * inv_r + c * u - 0.5 * u * u

    h = -dx
    u, p = delta, lam * delta
    us, ps = [u], [p]
    k_half = None
    left_extent = -xi_span[0]
    max_steps = int(round((xi_span[1] - xi_span[0]) / dx)) + 10_000_000
    for k in range(max_steps):
        a1, b1 = f(u, p)
        a2, b2 = f(u + 0.5 * h * a1, p + 0.5 * h * b1)
        a3, b3 = f(u + 0.5 * h * a2, p + 0.5 * h * b2)
        a4, b4 = f(u + h * a3, p + h * b3)
        u += h / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4)
        p += h / 6.0 * (b1 + 2 * b2 + 2 * b3 + b4)
        if not (math.isfinite(u) and math.isfinite(p)):
            raise IntegrationBlowup(-(k + 1) * dx)
        us.append(u)
        ps.append(p)
        if k_half is None and u >= 0.5:
            k_half = k + 1
        if k_half is not None and (k + 1 - k_half) * dx >= left_extent:
            break
        if k_half is None and (k + 1) * dx > 10 * (xi_span[1] - xi_span[0]) + 1000:
            raise SpanError("profile never reached u = 1/2")
    u_arr = np.array(us[::-1])
    p_arr = np.array(ps[::-1])
    n = u_arr.size
    # index of the launch point in the reversed array is n-1; xi increases with index
    j = n - 1 - k_half
    # linear interpolation for the exact u = 1/2 crossing between j and j+1
    frac = (u_arr[j] - 0.5) / (u_arr[j] - u_arr[j + 1])
    xi = (np.arange(n) - (j + frac)) * dx
    xi_launch = xi[-1]
    right = max(xi_span[1], xi_launch + 1.0)
    if right > xi_launch:
        n_ext = int(math.ceil((right - xi_launch) / dx))
        xi_ext = xi_launch + dx * np.arange(1, n_ext + 1)
        u_ext = delta * np.exp(lam * (xi_ext - xi_launch))
        xi = np.concatenate([xi, xi_ext])
        u_arr = np.concatenate([u_arr, u_ext])
        p_arr = np.concatenate([p_arr, lam * u_ext])
    tail = xi <= xi[0] + 5.0
    if np.max(np.abs(u_arr[tail] - 1.0)) >= 0.05:
        raise SpanError(f"profile not settled at u=1 within xi_span for R={R}; widen the span")
    tol = 1e-12
    oscillatory = bool((p_arr > tol).any() and (p_arr < -tol).any())
    return WaveProfile(xi, u_arr, float(R), oscillatory)


def window_average(profile, ell):
    """Average over (xi - ell/2, xi + ell/2) with the trapezoidal rule.

    Points whose window leaves the grid are dropped.
    """
    dx = profile.dx
    extent = profile.xi[-1] - profile.xi[0]
    if ell < dx:
        raise WindowError("window shorter than the grid spacing")
    if ell >= extent:
        raise WindowError("window longer than the grid")
    F = np.concatenate([[0.0], cumulative_trapezoid(profile.u, dx=dx)])
    half = ell / 2.0 / dx
    k = int(round(half))
    if abs(half - k) < 1e-9:
        ubar = (F[2 * k:] - F[: F.size - 2 * k]) / ell
        xi = profile.xi[k: profile.xi.size - k]
    else:
        inside = (profile.xi - ell / 2 >= profile.xi[0]) & (profile.xi + ell / 2 <= profile.xi[-1])
        xi = profile.xi[inside]
        ubar = (np.interp(xi + ell / 2, profile.xi, F) - np.interp(xi - ell / 2, profile.xi, F)) / ell
    return WaveProfile(xi, ubar, profile.reynolds, profile.oscillatory)


def burgers_profile(eps, shift, xi_grid):
    """Exact front of -v'/2 + v v' = eps v'', going from 1 (left) to 0 (right)."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    xi = np.asarray(xi_grid, dtype=float)
    v = 0.5 * (1.0 - np.tanh((xi - shift) / (4.0 * eps)))
    return WaveProfile(xi, v)


def burgers_residual(eps, shift, xi_grid):
    """Pointwise -v'/2 + v v' - eps v'' with analytic derivatives of the tanh front."""
    xi = np.asarray(xi_grid, dtype=float)
    z = (xi - shift) / (4.0 * eps)
    th = np.tanh(z)
    sech2 = 1.0 - th * th
    v = 0.5 * (1.0 - th)
    dv = -sech2 / (8.0 * eps)
    d2v = sech2 * th / (16.0 * eps * eps)
    return -FRONT_SPEED * dv + v * dv - eps * d2v


def _half_crossing(profile):
    i = int(np.argmax(profile.u <= 0.5))
    if i == 0:
        return float(profile.xi[0])
    u0, u1 = profile.u[i - 1], profile.u[i]
    return float(profile.xi[i - 1] + (u0 - 0.5) / (u0 - u1) * profile.dx)


def fit_eps_eff(averaged, ell, eps_starts=(0.1, 0.5, 2.0, 8.0), spread_tol=1e-3):
    """Burgers front closest in L2 to ``averaged``; free parameters eps and shift.

    Nelder-Mead runs from each entry of ``eps_starts`` (on log eps), with the
    shift started at the profile's u = 1/2 crossing.  The best minimum wins.
    """
    u = averaged.u
    if not (u.max() > 0.9 and u.min() < 0.1):
        raise ValueError("averaged profile must span both end states")
    xi = averaged.xi

    def objective(p):
        v = 0.5 * (1.0 - np.tanh((xi - p[1]) / (4.0 * math.exp(p[0]))))
        return trapezoid((u - v) ** 2, xi)

    x_half = _half_crossing(averaged)
    results = []
    for e0 in eps_starts:
        res = minimize(objective, [math.log(e0), x_half], method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": 1e-15, "maxiter": 5000, "maxfev": 10000})
        results.append((float(res.fun), math.exp(res.x[0]), float(res.x[1])))
    eps_all = [r[1] for r in results]
    if max(eps_all) - min(eps_all) > spread_tol:
        raise FitInstabilityError(f"restarts disagree: eps_eff in [{min(eps_all):.6g}, {max(eps_all):.6g}]")
    best = min(results)
    return BurgersFit(best[1], best[2], best[0], float(ell), averaged.reynolds, tuple(eps_all))


def similarity_exponent(fits):
    """Slope of log eps_eff against log R over fits sharing one window."""
    if len(fits) < 4:
        raise DataError("need at least four fits")
    r = np.array([f.reynolds for f in fits], dtype=float)
    if len(set(r.tolist())) < 4 or not np.all(np.isfinite(r)):
        raise DataError("need at least four distinct Reynolds numbers")
    windows = {f.window for f in fits}
    if len(windows) != 1:
        raise DataError("fits use different windows")
    y = np.log([f.eps_eff for f in fits])
    X = np.column_stack([np.log(r), np.ones_like(r)])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    return SimilarityFit(float(coef[0]), float(coef[1]), r, float(np.sqrt(np.mean(resid ** 2))),
                         windows.pop())


def write_fits_csv(path, fits):
    return write_csv(path, ["R", "ell", "eps_eff", "shift", "residual"],
                     ([f.reynolds, f.window, f.eps_eff, f.shift, f.residual] for f in fits))


def write_similarity_csv(path, sims):
    return write_csv(path, ["ell", "nu", "log_prefactor", "fit_residual"],
                     ([s.window, s.nu, s.log_prefactor, s.fit_residual] for s in sims))


def default_span(R, base=(-200.0, 40.0)):
    """Left end long enough for the wave train to decay, whose rate is 1/(2R)."""
    return (min(base[0], -20.0 * R), base[1])
