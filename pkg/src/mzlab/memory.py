"""Memory and noise terms of the Mori-Zwanzig decomposition.

Everywhere the orthogonal dynamics exp(tQL) would be needed, it is replaced
by the full flow exp(tL): the noise QLx evaluated along a full trajectory is
used as the orthogonal-dynamics noise.  For a single resolved coordinate with
the linear projection this yields the kernel

    K(s) = E[(QLx_i)(phi(x, s)) (QLx_i)(x)],   x ~ canonical,

and the normalised equilibrium autocorrelation C(t) = E[phi_i(x,t) x_i]/E[x_i^2]
is compared against the solution of

    du/dt = (drift / norm) u - int_0^t (K(s) / norm) u(t - s) ds,

with ``norm = E[x_i^2]`` and ``drift = E[(Lx_i) x_i]``.

A delta at the lower end of the memory integral carries weight 1/2, which is
what the trapezoidal rule gives a kernel concentrated on its first grid
point.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import ode
from .csvio import write_csv
from .reduction import ReducedModel
from .sampling import sample_hald_canonical


class GridError(ValueError):
    pass


class CoverageError(ValueError):
    pass


class DomainError(ValueError):
    pass


class FitError(ValueError):
    pass


@dataclass(frozen=True)
class MemoryKernel:
    s_grid: np.ndarray
    values: np.ndarray
    drift: float = 0.0
    std_errs: Optional[np.ndarray] = None
    normalization: float = 1.0

    def __post_init__(self):
        s = np.asarray(self.s_grid, dtype=float)
        if s.size < 2 or s[0] != 0.0:
            raise GridError("kernel grid must start at 0 and have at least two points")
        d = np.diff(s)
        if not np.allclose(d, d[0], rtol=1e-9, atol=1e-12) or d[0] <= 0:
            raise GridError("kernel grid must be uniform")
        if len(self.values) != s.size:
            raise GridError("values and s_grid differ in length")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("kernel values must be finite")

    @property
    def spacing(self):
        return float(self.s_grid[1] - self.s_grid[0])

    @classmethod
    def constant(cls, value, spacing, n_points, drift=0.0):
        s = spacing * np.arange(n_points)
        return cls(s, np.full(n_points, float(value)), drift)

    @classmethod
    def delta(cls, weight, spacing, n_points, drift=0.0):
        """Discrete delta of total mass ``weight`` concentrated at s=0."""
        values = np.zeros(n_points)
        values[0] = weight / spacing
        return cls(spacing * np.arange(n_points), values, drift)

    @classmethod
    def from_function(cls, func, spacing, n_points, drift=0.0):
        s = spacing * np.arange(n_points)
        return cls(s, np.asarray(func(s), dtype=float), drift)

    def to_csv(self, path):
        errs = self.std_errs if self.std_errs is not None else np.zeros_like(self.values)
        return write_csv(path, ["s", "K", "stderr"], zip(self.s_grid, self.values, errs))


@dataclass(frozen=True)
class NoiseSample:
    value: float
    state: np.ndarray


@dataclass(frozen=True)
class ScalarSeries:
    times: np.ndarray
    values: np.ndarray
    std_errs: np.ndarray


def hald_conditional_rhs(m):
    """E[R_j | first m coordinates] for the Hald system, j = 1..m.

    Uses E[x2 | x1] = 0 and E[x3^2 | x1, ...] = 1/(1+x1^2).
    """
    if m not in (1, 2):
        raise ValueError("closed form available for m = 1 or 2")

    def cond(xhat):
        xhat = np.asarray(xhat)
        x1 = xhat[0]
        r1 = xhat[1] if m == 2 else np.zeros_like(x1)
        r2 = -x1 * (1.0 + 1.0 / (1.0 + x1 ** 2))
        return np.stack([r1, r2])[:m]

    return cond


def noise_initial(system, partition, j, x, cond_rhs=None):
    """Initial fluctuation QLx_j = R_j(x) - E[R_j | xhat]; ``j`` is 1-based."""
    if not 1 <= j <= partition.m:
        raise ValueError(f"component {j} is not resolved")
    cond_rhs = cond_rhs or hald_conditional_rhs(partition.m)
    x = np.asarray(x)
    return system.rhs(x)[j - 1] - cond_rhs(x[: partition.m])[j - 1]


def liouville(system, f, x, h=1e-20):
    """(Lf)(x) = grad f(x) . R(x), by a complex step along R.

    ``f`` must accept complex input and be real-analytic.
    """
    x = np.asarray(x, dtype=float)
    return np.imag(f(x + 1j * h * system.rhs(x))) / h


def hald_conditional_quadrature(f, xhat, order=12):
    """E[f(x) | x1, x2] for the Hald density by tensor Gauss-Hermite quadrature."""
    nodes, weights = np.polynomial.hermite_e.hermegauss(order)
    weights = weights / weights.sum()
    x1, x2 = float(xhat[0]), float(xhat[1])
    sd3 = 1.0 / np.sqrt(1.0 + x1 ** 2)
    z3, z4 = np.meshgrid(nodes, nodes, indexing="ij")
    w = np.outer(weights, weights)
    x = np.stack([np.full(z3.shape, x1), np.full(z3.shape, x2), sd3 * z3, z4])
    return float(np.sum(w * f(x)))


def tmodel_memory_integrand(system, j, xhat, cond_rhs=None):
    """P L Q L x_j at xhat: the s=0 memory integrand that the t-model multiplies by t."""
    cond_rhs = cond_rhs or hald_conditional_rhs(2)

    def qlx(y):
        return system.rhs(y)[j - 1] - cond_rhs(y[:2])[j - 1]

    return hald_conditional_quadrature(lambda y: liouville(system, qlx, y), xhat)


def _linear_projection_stats(system, samples, i):
    x = samples.T
    xi = x[i]
    ri = system.rhs(x)[i]
    norm = float(np.mean(xi * xi))
    drift = float(np.mean(ri * xi))
    return drift, norm


def _canonical_flow(system, samples, dt, n_steps, observe):
    """Integrate every sample, calling ``observe(k, state)`` at each grid point."""
    x = samples.T.copy()
    f = lambda t, y: system.rhs(y)  # noqa: E731
    for k in range(n_steps + 1):
        observe(k, x)
        if k < n_steps:
            x = ode.rk4_step(f, k * dt, x, dt)
            if not np.all(np.isfinite(x)):
                raise ode.IntegrationBlowup((k + 1) * dt)


def kernel_short_memory(system, resolved_index, s_grid, n_samples=10_000, seed=0,
                        sampler=sample_hald_canonical):
    """Short-memory kernel for one resolved coordinate under the linear projection.

    The same canonical samples are followed for every ``s`` so the kernel is
    smooth in ``s``.  ``resolved_index`` is 1-based.
    """
    s_grid = np.asarray(s_grid, dtype=float)
    h = s_grid[1] - s_grid[0] if s_grid.size > 1 else 0.0
    if s_grid.size < 2 or s_grid[0] != 0.0 or not np.allclose(np.diff(s_grid), h, rtol=1e-9):
        raise GridError("s_grid must be uniform and start at 0")
    i = resolved_index - 1
    samples = sampler(n_samples, seed)
    drift, norm = _linear_projection_stats(system, samples, i)
    coef = drift / norm

    def noise(y):
        return system.rhs(y)[i] - coef * y[i]

    noise0 = noise(samples.T)
    values = np.empty(s_grid.size)
    errs = np.empty(s_grid.size)

    def observe(k, x):
        prod = noise(x) * noise0
        values[k] = prod.mean()
        errs[k] = prod.std(ddof=1) / np.sqrt(prod.size)

    _canonical_flow(system, samples, h, s_grid.size - 1, observe)
    return MemoryKernel(s_grid, values, drift, errs, norm)


def autocorrelation_measure(system, resolved_index, n_samples=10_000, dt=0.01, t_end=10.0,
                            seed=0, sampler=sample_hald_canonical):
    """Normalised equilibrium autocorrelation E[phi_i(x,t) x_i] / E[x_i^2]."""
    n_steps = ode.step_count(dt, t_end)
    i = resolved_index - 1
    samples = sampler(n_samples, seed)
    x0 = samples[:, i].copy()
    norm = float(np.mean(x0 * x0))
    values = np.empty(n_steps + 1)
    errs = np.empty(n_steps + 1)

    def observe(k, x):
        prod = x[i] * x0 / norm
        values[k] = prod.mean()
        errs[k] = prod.std(ddof=1) / np.sqrt(prod.size)

    _canonical_flow(system, samples, dt, n_steps, observe)
    values[0] = 1.0
    errs[0] = 0.0
    return ScalarSeries(dt * np.arange(n_steps + 1), values, errs)


def _kernel_on_grid(kernel, dt, n_steps):
    h = kernel.spacing
    if kernel.s_grid[-1] < n_steps * dt - 1e-9 * max(1.0, n_steps * dt):
        raise CoverageError(f"kernel covers s <= {kernel.s_grid[-1]:.6g}, need {n_steps * dt:.6g}")
    if abs(dt - h) <= 1e-12 * h:
        return np.asarray(kernel.values[: n_steps + 1], dtype=float)
    ratio = h / dt
    inv = dt / h
    if abs(ratio - round(ratio)) > 1e-9 and abs(inv - round(inv)) > 1e-9:
        raise GridError("dt must divide the kernel spacing or be a multiple of it")
    return np.interp(dt * np.arange(n_steps + 1), kernel.s_grid, kernel.values)


def volterra_solve(kernel, u0, dt=None, t_end=10.0):
    """Solve du/dt = a u - int_0^t k(s) u(t-s) ds by trapezoidal product integration.

    ``a`` and ``k`` are the kernel's drift and values divided by its
    normalization.  Both the derivative and the memory integral use the
    trapezoidal rule, so the scheme is second order; the equation is linear,
    so each step is solved for u_{n+1} in closed form.
    """
    dt = kernel.spacing if dt is None else dt
    n = ode.step_count(dt, t_end)
    k = _kernel_on_grid(kernel, dt, n) / kernel.normalization
    a = kernel.drift / kernel.normalization
    u = np.empty(n + 1)
    u[0] = u0
    f_prev = a * u0
    for step in range(n):
        # memory integral at t_{step+1} without its u_{step+1} term
        rest = dt * (np.dot(k[1:step + 1], u[step:0:-1]) + 0.5 * k[step + 1] * u[0])
        c = a - 0.5 * dt * k[0]
        u[step + 1] = (u[step] + 0.5 * dt * (f_prev - rest)) / (1.0 - 0.5 * dt * c)
        f_prev = c * u[step + 1] - rest
    return u


@dataclass(frozen=True)
class FdComparison:
    times: np.ndarray
    volterra: np.ndarray
    autocorr: np.ndarray
    std_errs: np.ndarray

    @property
    def sup_gap(self):
        return float(np.max(np.abs(self.volterra - self.autocorr)))

    def to_csv(self, path):
        dev = np.abs(self.volterra - self.autocorr)
        return write_csv(path, ["t", "volterra", "autocorr", "stderr", "abs_dev"],
                         zip(self.times, self.volterra, self.autocorr, self.std_errs, dev))


def fd_compare(kernel, autocorr):
    dt = float(autocorr.times[1] - autocorr.times[0])
    u = volterra_solve(kernel, 1.0, dt, float(autocorr.times[-1]))
    return FdComparison(autocorr.times, u, autocorr.values, autocorr.std_errs)


def white_noise_model(amplitudes, averaged):
    """Averaged dynamics plus white-noise forcing of amplitude A_j on component j.

    The model's ``rhs`` is the deterministic moment equation: the delta memory
    -A_j^2 delta(t-s) with endpoint weight 1/2 subtracts (A_j^2 / 2) phi_j.
    Use :func:`white_noise_paths` for sample paths.
    """
    amps = np.asarray(amplitudes)
    if amps.shape != (averaged.m,):
        raise ValueError(f"need {averaged.m} amplitudes")
    var = np.real_if_close(amps * amps)
    if np.iscomplexobj(var) or not np.all(np.isfinite(var)) or np.any(var < 0):
        raise DomainError("squared amplitudes must be finite and non-negative")
    var = var.astype(float)
    base = averaged.rhs

    def rhs(x, t=0.0):
        x = np.asarray(x, dtype=float)
        damp = (0.5 * var).reshape((-1,) + (1,) * (x.ndim - 1))
        return base(x, t) - damp * x

    return ReducedModel("WhiteNoise", averaged.m, rhs, noise_amp=tuple(np.sqrt(var)))


def white_noise_paths(model, x0, dt, t_end, n_paths, seed=0):
    """Euler-Maruyama paths; each step adds Gaussian increments of variance A_j^2 dt.

    Returns (times, mean, std_err) of the path ensemble.
    """
    n = ode.step_count(dt, t_end)
    rng = np.random.default_rng(seed)
    amp = np.asarray(model.noise_amp, dtype=float).reshape(-1, 1)
    x = np.repeat(np.asarray(x0, dtype=float).reshape(-1, 1), n_paths, axis=1)
    means = np.empty((n + 1, model.m))
    errs = np.empty((n + 1, model.m))
    for k in range(n + 1):
        means[k] = x.mean(axis=1)
        errs[k] = x.std(axis=1, ddof=1) / np.sqrt(n_paths)
        if k < n:
            x = x + dt * model.rhs(x, k * dt) + amp * np.sqrt(dt) * rng.standard_normal(x.shape)
    return dt * np.arange(n + 1), means, errs


@dataclass(frozen=True)
class GaussianFit:
    a: float
    b: float
    residual: float


def gaussian_kernel_fit(kernel, n_fit=5):
    """Match a exp(-b s^2) to the kernel's value and curvature at s = 0.

    a = K(0); K''(0) comes from a least-squares quadratic through (0, K(0))
    over the first ``n_fit`` grid steps.  The linear term is kept in the fit:
    it vanishes for an exact kernel but absorbs Monte-Carlo noise that would
    otherwise leak into the curvature.
    """
    a = float(kernel.values[0])
    if not a > 0:
        raise FitError("K(0) must be positive")
    s = kernel.s_grid[1:n_fit + 1]
    dk = kernel.values[1:n_fit + 1] - a
    (_, c2), *_ = np.linalg.lstsq(np.column_stack([s, s * s]), dk, rcond=None)
    b = -float(c2) / a
    if not b > 0:
        raise FitError(f"non-decaying Gaussian fit (b={b:.3g})")
    model = a * np.exp(-b * kernel.s_grid ** 2)
    residual = float(np.sqrt(np.mean((kernel.values - model) ** 2)))
    return GaussianFit(a, b, residual)


def kernel_linear_coefficient(kernel, s_max=0.2):
    """Least-squares fit K(s) ~ c0 + c1 s + c2 s^2 on [0, s_max]; returns (c1, stderr of c1)."""
    mask = kernel.s_grid <= s_max + 1e-12
    s = kernel.s_grid[mask]
    y = kernel.values[mask]
    design = np.column_stack([np.ones_like(s), s, s ** 2])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    if kernel.std_errs is not None:
        # MC error propagated through the linear least-squares map
        pinv = np.linalg.pinv(design)
        err = float(np.sqrt(np.sum((pinv[1] * kernel.std_errs[mask]) ** 2)))
    else:
        resid = y - design @ coef
        cov = np.linalg.inv(design.T @ design) * resid.var(ddof=3)
        err = float(np.sqrt(cov[1, 1]))
    return float(coef[1]), err
