"""Error curves (control, measured, bound) and log-log rate fits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import InputError

__all__ = ["CurveRow", "ErrorCurve", "fit_rate", "RATE_FLOOR"]

RATE_FLOOR = 1e-13


@dataclass(frozen=True)
class CurveRow:
    control: float
    measured: float
    bound: float | None = None
    extras: Mapping[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class ErrorCurve:
    """Rows sorted by strictly increasing control with non-negative errors."""

    rows: tuple[CurveRow, ...]
    meta: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        rows = tuple(self.rows)
        controls = [r.control for r in rows]
        if any(b <= a for a, b in zip(controls, controls[1:])):
            raise InputError("curve controls must be strictly increasing")
        if any(not (r.measured >= 0) for r in rows):
            raise InputError("measured errors must be non-negative numbers")
        object.__setattr__(self, "rows", rows)

    @classmethod
    def from_rows(cls, rows: Sequence[CurveRow], meta: Mapping[str, Any] | None = None) -> "ErrorCurve":
        return cls(tuple(sorted(rows, key=lambda r: r.control)), dict(meta or {}))

    @property
    def controls(self) -> np.ndarray:
        return np.array([r.control for r in self.rows])

    @property
    def measured(self) -> np.ndarray:
        return np.array([r.measured for r in self.rows])

    @property
    def bounds(self) -> list[float | None]:
        return [r.bound for r in self.rows]

    @property
    def has_bounds(self) -> bool:
        return any(r.bound is not None for r in self.rows)

    def dominated(self, slack: float = 1e-8) -> bool:
        """True when every present bound is at least the measured error minus ``slack``."""
        return all(r.bound is None or r.measured <= r.bound + slack for r in self.rows)

    def window(self, lo: float, hi: float) -> "ErrorCurve":
        return ErrorCurve(tuple(r for r in self.rows if lo <= r.control <= hi), self.meta)


def fit_rate(curve: ErrorCurve, window: tuple[float, float] | None = None) -> tuple[float, float, float]:
    """Least-squares fit of log(measured) = log C - p log(control).

    Returns (C, p, r2).  Rows with measured <= 1e-13 are ignored.
    """
    sub = curve.window(*window) if window is not None else curve
    pts = [(r.control, r.measured) for r in sub.rows if r.measured > RATE_FLOOR and r.control > 0]
    if len(pts) < 3:
        raise InputError(f"rate fit needs at least 3 usable rows, got {len(pts)}")
    x = np.log([p[0] for p in pts])
    y = np.log([p[1] for p in pts])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    total = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if total == 0 else 1.0 - float(np.sum(resid**2)) / total
    return math.exp(intercept), float(-slope), r2
