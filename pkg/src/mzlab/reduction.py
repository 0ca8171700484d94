"""Reduced dynamics for the resolved coordinates.

Three closures are provided: Galerkin truncation (unresolved coordinates set
to zero), conditional-expectation averaging, which yields a Hamiltonian
system for the renormalized Hamiltonian, and the t-model, which adds a memory
damping term growing linearly in time.

The Hald averaged and t-model right-hand sides are closed-form.  The t-model
relies on commuting conditional averaging with nonlinear evaluation
(Pf(phi) = f(P phi)); this is a mean-field approximation, not an identity.
"""

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import ode
from .sampling import EnsembleStats

KINDS = ("Galerkin", "Averaged", "TModel", "VolterraMemory", "WhiteNoise")


class PrecisionWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ReducedModel:
    """Dynamics of ``m`` resolved coordinates; ``rhs(state, t)``."""

    kind: str
    m: int
    rhs: Callable[[np.ndarray, float], np.ndarray]
    kernel: Optional[object] = None
    noise_amp: Optional[tuple] = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")

    @property
    def autonomous(self):
        return self.kind in ("Galerkin", "Averaged")

    def integrate(self, x0, dt=1e-3, t_end=1.0):
        x0 = np.asarray(x0, dtype=float)
        if x0.shape[0] != self.m:
            raise ode.DimensionError(f"state has {x0.shape[0]} components, model has {self.m}")
        if self.kind == "VolterraMemory":
            from .memory import volterra_solve

            u = volterra_solve(self.kernel, float(x0[0]), dt, t_end)
            return ode.Trajectory(dt * np.arange(len(u)), u[:, None])
        rhs = self.rhs
        return ode.solve(lambda t, x: rhs(x, t), x0, dt, t_end)


@dataclass(frozen=True)
class RenormalizedHamiltonian:
    """Hamiltonian of the averaged system, fixed by the convention value(0) = 0."""

    evaluate: Callable[[np.ndarray], np.ndarray]

    def __call__(self, x):
        return self.evaluate(x)


def galerkin_model(system, partition):
    """Resolved equations with every unresolved coordinate frozen at zero."""
    if partition.m < 1:
        raise ValueError("Galerkin model needs at least one resolved coordinate")
    m, n = partition.m, system.n

    def rhs(x, t=0.0):
        x = np.asarray(x, dtype=float)
        full = np.zeros((n,) + x.shape[1:])
        full[:m] = x
        return np.asarray(system.rhs(full))[:m]

    return ReducedModel("Galerkin", m, rhs)


def hald_renormalized_hamiltonian():
    def evaluate(x):
        x = np.asarray(x)
        return 0.5 * (x[0] ** 2 + x[1] ** 2) + 0.5 * np.log1p(x[0] ** 2)

    return RenormalizedHamiltonian(evaluate)


def _hald_markov(x):
    return np.stack([x[1], -x[0] * (1.0 + 1.0 / (1.0 + x[0] ** 2))])


def hald_averaged_model():
    """Conditional-expectation average of the Hald equations for (phi_1, phi_2)."""

    def rhs(x, t=0.0):
        return _hald_markov(np.asarray(x))

    return ReducedModel("Averaged", 2, rhs)


def hald_tmodel_damping(x, t):
    """Memory term of the Hald t-model; acts on the phi_2 equation only."""
    x = np.asarray(x)
    return -2.0 * t * x[0] ** 2 * x[1] / (1.0 + x[0] ** 2) ** 2


def hald_t_model():
    def rhs(x, t=0.0):
        x = np.asarray(x)
        out = _hald_markov(x)
        out[1] = out[1] + hald_tmodel_damping(x, t)
        return out

    return ReducedModel("TModel", 2, rhs)


def _unresolved_log_integrand(density, partition, xhat, draws):
    # log of exp(-H/T) divided by the N(0, T) proposal density, up to a constant
    T = density.temperature
    x = np.empty((partition.n, draws.shape[1]))
    x[: partition.m] = np.asarray(xhat, dtype=float).reshape(-1, 1)
    x[partition.m:] = draws
    return -density.hamiltonian(x) / T + 0.5 * np.sum(draws ** 2, axis=0) / T


def renormalized_hamiltonian_stats(density, partition, xhat, n_samples=100_000, seed=0):
    """Importance-sampling estimate of the renormalized Hamiltonian relative to xhat=0.

    The unresolved coordinates are drawn from N(0, T I); the same draws serve
    ``xhat`` and the reference point so the additive constant cancels with
    little noise.
    """
    xhat = np.atleast_1d(np.asarray(xhat, dtype=float))
    rng = np.random.default_rng(seed)
    T = density.temperature
    k = partition.n - partition.m
    draws = np.sqrt(T) * rng.standard_normal((k, n_samples))
    a = _unresolved_log_integrand(density, partition, xhat, draws)
    b = _unresolved_log_integrand(density, partition, np.zeros(partition.m), draws)
    shift_a, shift_b = a.max(), b.max()
    wa, wb = np.exp(a - shift_a), np.exp(b - shift_b)
    ma, mb = wa.mean(), wb.mean()
    value = -T * ((np.log(ma) + shift_a) - (np.log(mb) + shift_b))
    # delta method for the log of a ratio of correlated means
    err = T * np.std(wa / ma - wb / mb, ddof=1) / np.sqrt(n_samples)
    return EnsembleStats(float(value), float(err), n_samples)


def renormalized_hamiltonian_mc(density, partition, xhat, n_samples=100_000, seed=0,
                                max_std_err=1e-2):
    stats = renormalized_hamiltonian_stats(density, partition, xhat, n_samples, seed)
    if stats.std_err > max_std_err:
        warnings.warn(f"renormalized Hamiltonian std_err {stats.std_err:.3g} exceeds "
                      f"{max_std_err:.3g}", PrecisionWarning, stacklevel=2)
    return stats.estimate


def averaged_rhs_mc(system, partition, xhat, n_samples, seed=0, sampler=None):
    """Monte-Carlo E[R | xhat] for each resolved component, as EnsembleStats."""
    from .sampling import hald_conditional_states

    sampler = sampler or hald_conditional_states
    states = sampler(np.atleast_1d(xhat), n_samples, seed)
    r = np.asarray(system.rhs(states.T))[: partition.m]
    return [EnsembleStats.from_values(row) for row in r]


@dataclass(frozen=True)
class LyapunovReport:
    times: np.ndarray
    hhat: np.ndarray
    max_increment: float
    total_change: float

    def non_increasing(self, tol=1e-6):
        return self.max_increment <= tol


def lyapunov_check(model, hhat, x0, dt=1e-3, t_end=50.0):
    """Track the renormalized Hamiltonian along ``model`` started at ``x0``.

    Intended for the t-model; other kinds are accepted as controls.
    """
    traj = model.integrate(x0, dt, t_end)
    values = np.asarray(hhat(traj.states.T), dtype=float)
    inc = np.diff(values)
    max_inc = float(inc.max()) if inc.size else 0.0
    return LyapunovReport(traj.times, values, max_inc, float(values[-1] - values[0]))
