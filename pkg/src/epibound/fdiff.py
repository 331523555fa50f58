"""Finite-difference derivatives of uniformly sampled curves.

All functions act along axis 0 and return values for the interior points
that have enough neighbours; ``interior(order)`` gives the matching slice.
"""

from __future__ import annotations

import numpy as np

__all__ = ["central", "five_point", "third_derivative", "truncation_allowance", "interior"]


def interior(width: int) -> slice:
    return slice(width, -width)


def central(f: np.ndarray, h: float) -> np.ndarray:
    """Second-order central difference at points 1..T-2."""
    return (f[2:] - f[:-2]) / (2 * h)


def five_point(f: np.ndarray, h: float) -> np.ndarray:
    """Fourth-order central difference at points 2..T-3."""
    return (-f[4:] + 8 * f[3:-1] - 8 * f[1:-3] + f[:-4]) / (12 * h)


def third_derivative(f: np.ndarray, h: float) -> np.ndarray:
    """Estimate of f''' at points 2..T-3."""
    return (f[4:] - 2 * f[3:-1] + 2 * f[1:-3] - f[:-4]) / (2 * h**3)


def truncation_allowance(f: np.ndarray, h: float) -> np.ndarray:
    """Bound on the central-difference error at points 2..T-3.

    The leading error term of :func:`central` is ``h^2/6 * f'''``; the
    estimate of f''' is itself approximate, so twice that term is returned.
    """
    return (h**2 / 3.0) * np.abs(third_derivative(f, h))
