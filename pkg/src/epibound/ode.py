"""Deterministic initial-value-problem integration.

Every system in the package (master equation, closed mean-field models, the
explicit two-node pair system) goes through :func:`integrate`. It uses the
Dormand-Prince 4(5) embedded pair from SciPy and restarts the integrator at
each requested output time, so states are produced at exactly those times
rather than by interpolation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .errors import IntegrationError, NumericalError, ValidationError

__all__ = ["IvpSpec", "Trajectory", "integrate", "DEFAULT_ATOL", "DEFAULT_RTOL"]

DEFAULT_ATOL = 1e-10
DEFAULT_RTOL = 1e-10


@dataclass
class IvpSpec:
    rhs: Callable[[float, np.ndarray], np.ndarray]
    y0: np.ndarray
    output_times: Sequence[float]
    t0: float | None = None
    t1: float | None = None
    abs_tol: float = DEFAULT_ATOL
    rel_tol: float = DEFAULT_RTOL

    def __post_init__(self):
        self.y0 = np.atleast_1d(np.asarray(self.y0, dtype=float))
        times = np.asarray(self.output_times, dtype=float)
        if times.ndim != 1 or times.size == 0:
            raise ValidationError("output_times must be a non-empty 1-d sequence")
        if np.any(np.diff(times) <= 0):
            raise ValidationError("output_times must be strictly increasing")
        self.output_times = times
        if self.t0 is None:
            self.t0 = float(times[0])
        if self.t1 is None:
            self.t1 = float(times[-1])
        if times[0] < self.t0 or times[-1] > self.t1:
            raise ValidationError("output_times must lie within [t0, t1]")
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ValidationError("tolerances must be positive")

    @property
    def dimension(self) -> int:
        return self.y0.size


@dataclass
class Trajectory:
    """Solution samples: ``states[k]`` is the state at ``times[k]``."""

    times: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        if self.states.shape[0] != self.times.size:
            raise ValidationError("one state row per output time is required")

    def __len__(self):
        return self.times.size

    def at(self, t: float) -> np.ndarray:
        k = int(np.argmin(np.abs(self.times - t)))
        if not np.isclose(self.times[k], t, rtol=0, atol=1e-12):
            raise KeyError(f"time {t} is not an output time")
        return self.states[k]


def _checked(rhs):
    def wrapped(t, y):
        dy = np.asarray(rhs(t, y), dtype=float)
        if not np.all(np.isfinite(dy)):
            raise NumericalError(f"right-hand side returned non-finite values at t={t}")
        return dy

    return wrapped


def integrate(spec: IvpSpec) -> Trajectory:
    """Integrate ``spec`` and return states at exactly ``spec.output_times``."""
    rhs = _checked(spec.rhs)
    times = spec.output_times
    states = np.empty((times.size, spec.dimension))
    t, y = float(spec.t0), spec.y0.copy()
    first_step = None
    for k, t_out in enumerate(times):
        if t_out > t:
            sol = solve_ivp(
                rhs,
                (t, float(t_out)),
                y,
                method="RK45",
                rtol=spec.rel_tol,
                atol=spec.abs_tol,
                first_step=None if first_step is None else min(first_step, float(t_out) - t),
            )
            if sol.status != 0:
                raise IntegrationError(
                    f"integration failed near t={sol.t[-1]}: {sol.message}",
                    last_time=float(sol.t[-1]),
                )
            y = sol.y[:, -1]
            if sol.t.size >= 2:
                # Reuse the last accepted step so restarts do not cost a ramp-up.
                first_step = min(float(sol.t[-1] - sol.t[-2]), 1.0)
            t = float(t_out)
        states[k] = y
    return Trajectory(times.copy(), states)
