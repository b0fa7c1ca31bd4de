"""Power-law fits of distances against depth or qubit count."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats


@dataclass(frozen=True)
class FitResult:
    """Least-squares line through ``(log10 x, log10 y)``.

    ``y ~ 10**intercept * x**exponent``.
    """

    exponent: float
    intercept: float
    r2: float
    x: tuple[float, ...]
    y: tuple[float, ...]

    def predict(self, x) -> np.ndarray:
        return 10.0**self.intercept * np.asarray(x, dtype=float) ** self.exponent


def fit_power_law(points: Sequence[tuple[float, float]]) -> FitResult:
    """Fit ``y = a x**k`` by ordinary least squares in log-log space.

    Raises:
        ValueError: With fewer than three points or any non-positive value.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 3:
        raise ValueError("need at least three (x, y) points")
    if np.any(pts <= 0) or not np.all(np.isfinite(pts)):
        raise ValueError("power-law fits need positive finite data")
    lx, ly = np.log10(pts[:, 0]), np.log10(pts[:, 1])
    if np.ptp(lx) == 0:
        raise ValueError("x values must not all coincide")
    res = stats.linregress(lx, ly)
    r2 = float(min(max(res.rvalue**2, 0.0), 1.0))
    return FitResult(float(res.slope), float(res.intercept), r2, tuple(pts[:, 0]), tuple(pts[:, 1]))


def intercept_gap(unmitigated: FitResult, mitigated: FitResult) -> float:
    """Difference of log10 intercepts; ``10**gap`` is the constant suppression factor."""
    return unmitigated.intercept - mitigated.intercept


def geometric_stats(values: Sequence[float], floor: float = 0.0) -> tuple[float, float]:
    """Geometric mean and geometric standard deviation (a multiplicative factor).

    Values are clipped from below at ``floor`` first, which lets exact zeros
    (distances below double precision) take part when ``floor > 0``.
    """
    v = np.maximum(np.asarray(values, dtype=float), floor)
    if np.any(v <= 0):
        raise ValueError("geometric statistics need positive values")
    logs = np.log(v)
    sd = float(np.exp(logs.std(ddof=1))) if v.size > 1 else 1.0
    return float(np.exp(logs.mean())), sd


def arithmetic_stats(values: Sequence[float]) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    return float(v.mean()), float(v.std(ddof=1)) if v.size > 1 else 0.0
