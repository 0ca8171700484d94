"""ODE systems and a fixed-step classical Runge-Kutta integrator.

State arrays carry the phase-space components on axis 0, so the same
right-hand side works for a single state of shape ``(n,)`` and for an
ensemble of shape ``(n, n_replicas)``.
"""

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .csvio import write_csv


class DimensionError(ValueError):
    pass


class IntegrationBlowup(FloatingPointError):
    """Raised when the integrated state stops being finite."""

    def __init__(self, t):
        super().__init__(f"non-finite state encountered at t={t:.6g}")
        self.t = t


@dataclass(frozen=True)
class SystemDef:
    """An autonomous system d(phi)/dt = rhs(phi) of dimension ``n``.

    ``hamiltonian`` and ``grad_h`` are set for Hamiltonian systems, in which
    case odd/even component pairs (1-based) are conjugate coordinates.
    """

    n: int
    rhs: Callable[[np.ndarray], np.ndarray]
    hamiltonian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    grad_h: Optional[Callable[[np.ndarray], np.ndarray]] = None

    @property
    def is_hamiltonian(self):
        return self.hamiltonian is not None

    def check_hamiltonian(self, n_probe=16, tol=1e-5, seed=0, scale=1.0):
        """Finite-difference consistency of grad_h with H and of rhs with grad_h.

        Returns the largest discrepancy found; raises ``ValueError`` above ``tol``.
        """
        if not self.is_hamiltonian:
            raise ValueError("system carries no Hamiltonian")
        rng = np.random.default_rng(seed)
        h = 1e-6
        worst = 0.0
        for _ in range(n_probe):
            x = scale * rng.standard_normal(self.n)
            g = np.asarray(self.grad_h(x), dtype=float)
            fd = np.empty(self.n)
            for i in range(self.n):
                e = np.zeros(self.n)
                e[i] = h
                fd[i] = (self.hamiltonian(x + e) - self.hamiltonian(x - e)) / (2 * h)
            worst = max(worst, float(np.max(np.abs(fd - g))))
            worst = max(worst, float(np.max(np.abs(self.rhs(x) - symplectic_rhs(g)))))
        if worst > tol:
            raise ValueError(f"Hamiltonian consistency violated: max error {worst:.3g}")
        return worst


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        if len(self.times) != len(self.states):
            raise ValueError("times and states differ in length")
        if len(self.times) > 1 and not np.all(np.diff(self.times) > 0):
            raise ValueError("times must be strictly increasing")

    @property
    def final(self):
        return self.states[-1]

    def component(self, i):
        return self.states[:, i]

    def to_csv(self, path):
        n = self.states.shape[1]
        header = ["t"] + [f"phi_{i + 1}" for i in range(n)]
        rows = ([t, *s] for t, s in zip(self.times, self.states))
        return write_csv(path, header, rows)


def symplectic_rhs(grad):
    """Assemble R from dH/dphi: R_i = dH/dphi_{i+1} for odd i, -dH/dphi_{i-1} for even i."""
    grad = np.asarray(grad)
    out = np.empty_like(grad)
    out[0::2] = grad[1::2]
    out[1::2] = -grad[0::2]
    return out


def step_count(dt, t_end):
    if not dt > 0:
        raise ValueError("dt must be positive")
    if t_end < 0:
        raise ValueError("t_end must be non-negative")
    n = int(round(t_end / dt))
    if abs(n * dt - t_end) > 1e-9 * max(1.0, t_end):
        raise ValueError(f"t_end={t_end} is not a multiple of dt={dt}")
    return n


def rk4_step(f, t, x, dt):
    k1 = f(t, x)
    k2 = f(t + 0.5 * dt, x + 0.5 * dt * k1)
    k3 = f(t + 0.5 * dt, x + 0.5 * dt * k2)
    k4 = f(t + dt, x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def solve(f, x0, dt, t_end, t0=0.0):
    """Integrate the possibly time-dependent field ``f(t, x)`` with RK4.

    When ``t_end`` is not a multiple of ``dt`` the last step is shortened so
    the trajectory ends exactly at ``t0 + t_end``.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if t_end < 0:
        raise ValueError("t_end must be non-negative")
    tol = 1e-9 * max(1.0, t_end)
    n = int(math.floor(t_end / dt + 1e-9))
    times = t0 + dt * np.arange(n + 1)
    if t_end - n * dt > tol:
        times = np.append(times, t0 + t_end)
    x = np.array(x0, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("initial state is not finite")
    states = np.empty((times.size,) + x.shape)
    states[0] = x
    for k in range(times.size - 1):
        h = dt if k < n else t_end - n * dt
        x = rk4_step(f, times[k], x, h)
        if not np.all(np.isfinite(x)):
            raise IntegrationBlowup(float(times[k + 1]))
        states[k + 1] = x
    return Trajectory(times, states)


def integrate(system, x0, dt=1e-3, t_end=1.0):
    """Trajectory of ``system`` from ``x0`` on the uniform grid 0, dt, ..., t_end."""
    x0 = np.asarray(x0, dtype=float)
    if x0.shape[0] != system.n:
        raise DimensionError(f"state has {x0.shape[0]} components, system has {system.n}")
    rhs = system.rhs
    return solve(lambda t, x: rhs(x), x0, dt, t_end)


def hamiltonian_system(H, grad_h, n, check=False):
    """Hamiltonian system whose vector field is built from ``grad_h``."""
    if n <= 0 or n % 2:
        raise DimensionError(f"Hamiltonian systems need even n, got {n}")

    def rhs(x):
        return symplectic_rhs(grad_h(x))

    system = SystemDef(n=n, rhs=rhs, hamiltonian=H, grad_h=grad_h)
    if check:
        system.check_hamiltonian()
    return system


def hald_hamiltonian(x):
    x = np.asarray(x)
    return 0.5 * (x[0] ** 2 + x[1] ** 2 + x[2] ** 2 + x[3] ** 2 + x[0] ** 2 * x[2] ** 2)


def hald_grad(x):
    x = np.asarray(x)
    return np.stack([
        x[0] * (1.0 + x[2] ** 2),
        x[1],
        x[2] * (1.0 + x[0] ** 2),
        x[3],
    ])


def hald_system():
    """Two linear oscillators coupled through the term phi_1^2 phi_3^2 / 2."""
    return hamiltonian_system(hald_hamiltonian, hald_grad, 4)
