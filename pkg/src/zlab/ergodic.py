"""Admissible weight schedules and generalized ergodic means of operator functions.

A schedule is a triangular array of positive weights alpha[n, l] whose rows
sum to one.  Its partial sums gamma[n, l] place partition points
rho[n, l](s) = t1 + (s - t1) gamma[n, l] in [t1, s].  The partial means are
weighted sums of T-conjugates of the generator sampled at these points; their
n -> infinity limit is the ergodic mean.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg

from .errors import InputError, ScheduleError, UnsupportedRepresentationError
from .linops import (
    MatrixLike,
    as_matrix,
    commutator,
    dagger,
    is_skew_hermitian,
    is_unitary,
    norm,
    pinch,
    spectral_resolution,
)
from .propagate import TimeDepGenerator, quadrature_nodes, simpson

__all__ = [
    "Schedule",
    "ScheduleDiagnostics",
    "AdmissibilityReport",
    "ErgodicMeanResult",
    "gamma",
    "rho",
    "schedule_diagnostics",
    "check_admissible",
    "psi",
    "partial_ergodic_mean",
    "partial_ergodic_means",
    "integrated_partial_mean",
    "integrated_partial_means",
    "ergodic_mean_discrete",
    "ergodic_mean_pinching",
    "scalar_telescoping_sum",
    "scalar_telescoping_limit",
    "ergodic_mean_group",
    "kernel_bound_check",
    "conjugation_kernel",
]

NORMALIZATION_TOL = 1e-12
REPORT_NORMALIZATION_TOL = 1e-10
DEFAULT_S_POINTS = 33
DEFAULT_MEAN_TOL = 1e-6
DEFAULT_N_MAX = 2**12
SCHEDULE_KINDS = ("uniform", "linear_ramp", "custom")


@dataclass(frozen=True)
class Schedule:
    """Weight rows alpha[n, 0..n-1]; custom schedules list their rows by n."""

    kind: str = "uniform"
    rows: Mapping[int, tuple[float, ...]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in SCHEDULE_KINDS:
            raise ScheduleError(f"unknown schedule kind {self.kind!r}")
        if self.kind == "custom":
            if not self.rows:
                raise ScheduleError("custom schedule needs at least one row")
            clean = {}
            for n, row in self.rows.items():
                arr = np.asarray(row, dtype=float)
                _validate_row(int(n), arr)
                clean[int(n)] = tuple(float(a) for a in arr)
            object.__setattr__(self, "rows", clean)

    @classmethod
    def uniform(cls) -> "Schedule":
        return cls("uniform")

    @classmethod
    def linear_ramp(cls) -> "Schedule":
        return cls("linear_ramp")

    @classmethod
    def custom(cls, rows: Mapping[int, Sequence[float]]) -> "Schedule":
        return cls("custom", {int(n): tuple(r) for n, r in rows.items()})

    @property
    def is_uniform(self) -> bool:
        if self.kind == "uniform":
            return True
        if self.kind == "custom":
            return all(np.allclose(r, 1.0 / len(r), rtol=0, atol=NORMALIZATION_TOL) for r in self.rows.values())
        return False

    def row(self, n: int) -> np.ndarray:
        if n < 1:
            raise ScheduleError(f"row index n must be positive, got {n}")
        if self.kind == "uniform":
            return np.full(n, 1.0 / n)
        if self.kind == "linear_ramp":
            return 2.0 * np.arange(1, n + 1) / (n * (n + 1))
        if n not in self.rows:
            raise ScheduleError(f"custom schedule has no row for n={n}")
        return np.array(self.rows[n])

    def gammas(self, n: int) -> np.ndarray:
        """gamma[n, 0..n] with gamma[n, 0] = 0 and gamma[n, n] = 1 exactly."""
        g = np.concatenate([[0.0], np.cumsum(self.row(n))])
        g[-1] = 1.0
        return g


def _validate_row(n: int, row: np.ndarray) -> None:
    if n < 1 or row.shape != (n,):
        raise ScheduleError(f"row for n={n} must have exactly {n} entries, got shape {row.shape}")
    if not np.all(np.isfinite(row)) or np.any(row <= 0):
        raise ScheduleError(f"row for n={n} must have strictly positive entries")
    residual = abs(row.sum() - 1.0)
    if residual > NORMALIZATION_TOL:
        raise ScheduleError(f"row for n={n} sums to 1 + {row.sum() - 1.0:.3e}")


def gamma(schedule: Schedule, n: int, l: int) -> float:
    if not 0 <= l <= n:
        raise InputError(f"index l={l} outside [0, {n}]")
    return float(schedule.gammas(n)[l])


def rho(schedule: Schedule, n: int, l: int, s: float, t1: float) -> float:
    if s < t1:
        raise InputError(f"need s >= t1, got s={s}, t1={t1}")
    if l == n:
        return float(s)
    return t1 + (s - t1) * gamma(schedule, n, l)


def _rhos(schedule: Schedule, n: int, s: float, t1: float) -> np.ndarray:
    pts = t1 + (s - t1) * schedule.gammas(n)
    pts[-1] = s
    return pts


@dataclass(frozen=True)
class ScheduleDiagnostics:
    n: int
    max_alpha: float
    sum_abs_diff: float
    D_alpha: float
    S_alpha: float
    sqrt_n_sum_abs_diff: float
    normalization_residual: float = 0.0


def schedule_diagnostics(schedule: Schedule, n: int) -> ScheduleDiagnostics:
    row = schedule.row(n)
    max_alpha = float(row.max())
    variation = float(np.abs(np.diff(row)).sum())
    return ScheduleDiagnostics(
        n=n,
        max_alpha=max_alpha,
        sum_abs_diff=variation,
        D_alpha=2 * max_alpha + 3 * variation,
        S_alpha=max_alpha + variation,
        sqrt_n_sum_abs_diff=math.sqrt(n) * variation,
        normalization_residual=float(abs(row.sum() - 1.0)),
    )


@dataclass(frozen=True)
class AdmissibilityReport:
    rows: tuple[ScheduleDiagnostics, ...]
    verdict: str

    @property
    def consistent(self) -> bool:
        return self.verdict == "admissible-consistent"


def check_admissible(schedule: Schedule, n_grid: Sequence[int]) -> AdmissibilityReport:
    """Diagnostics along ``n_grid``; consistent when max alpha and variation never grow."""
    grid = list(n_grid)
    if not grid or any(b <= a for a, b in zip(grid, grid[1:])):
        raise InputError("n_grid must be nonempty and strictly increasing")
    rows = tuple(schedule_diagnostics(schedule, n) for n in grid)
    for r in rows:
        if r.normalization_residual > REPORT_NORMALIZATION_TOL:
            raise ScheduleError(f"row n={r.n} has normalization residual {r.normalization_residual:.3e}")
    slack = 1e-15
    monotone = all(
        b.max_alpha <= a.max_alpha + slack and b.sum_abs_diff <= a.sum_abs_diff + slack
        for a, b in zip(rows, rows[1:])
    )
    return AdmissibilityReport(rows, "admissible-consistent" if monotone else "not-admissible-consistent")


def psi(x: float) -> float:
    """2 max(2, 3x)."""
    return 2.0 * max(2.0, 3.0 * x)


class _UnitaryConjugator:
    """T^{-l} X T^l for unitary T, computed in T's eigenbasis.

    In that basis conjugation multiplies entry (j, k) by (conj(u_j) u_k)^l.
    """

    def __init__(self, T: MatrixLike):
        t = as_matrix(T)
        if not is_unitary(t):
            raise InputError("T must be unitary within 1e-10")
        schur, basis = scipy.linalg.schur(t, output="complex")
        phases = np.diag(schur)
        self.basis = basis
        self.ratio = np.conj(phases)[:, None] * phases[None, :]

    def to_eigenbasis(self, x: np.ndarray) -> np.ndarray:
        return dagger(self.basis) @ x @ self.basis

    def from_eigenbasis(self, x: np.ndarray) -> np.ndarray:
        return self.basis @ x @ dagger(self.basis)

    def weights(self, count: int) -> np.ndarray:
        """(conj(u_j) u_k)^l for l = 0..count-1, shape (count, d, d)."""
        angles = np.angle(self.ratio)
        return np.exp(1j * np.arange(count)[:, None, None] * angles[None])


def partial_ergodic_means(
    gen: TimeDepGenerator, T: MatrixLike, schedule: Schedule, n: int, s: float, t1: float | None = None
) -> np.ndarray:
    """All partial means P^(n,k)[K](s) for k = 0..n-1, shape (n, d, d)."""
    t1 = gen.t1 if t1 is None else t1
    if n < 1:
        raise InputError("n must be at least 1")
    if s < t1:
        raise InputError(f"need s >= t1, got s={s}, t1={t1}")
    conj = _UnitaryConjugator(T)
    if gen.dim != conj.basis.shape[0]:
        raise InputError("generator and T dimensions differ")
    weighted = schedule.gammas(n)[:, None, None] * gen.evaluate(_rhos(schedule, n, s, t1))
    steps = np.diff(weighted, axis=0)
    rotated = conj.to_eigenbasis(steps) * conj.weights(n)
    return conj.from_eigenbasis(np.cumsum(rotated, axis=0))


def partial_ergodic_mean(
    gen: TimeDepGenerator,
    T: MatrixLike,
    schedule: Schedule,
    n: int,
    k: int,
    s: float,
    t1: float | None = None,
) -> np.ndarray:
    """P^(n,k)[K](s) = sum_{l<=k} T^{-l}(gamma_{l+1} K(rho_{l+1}) - gamma_l K(rho_l)) T^l."""
    if not 0 <= k <= n - 1:
        raise InputError(f"k={k} outside [0, {n - 1}]")
    return partial_ergodic_means(gen, T, schedule, n, s, t1)[k]


def integrated_partial_mean(
    gen: TimeDepGenerator,
    T: MatrixLike,
    schedule: Schedule,
    n: int,
    k: int,
    s: float,
    t1: float | None = None,
    method: str = "quadrature",
    quad_points: int = 256,
) -> np.ndarray:
    """Integral of P^(n,k)[K] over [t1, s].

    ``quadrature`` applies Simpson's rule to the partial mean itself.
    ``antiderivative`` uses the change of variables r = rho_{l+1}(v), which
    turns each term into T^{-l} (int_{rho_l(s)}^{rho_{l+1}(s)} K) T^l.
    """
    t1 = gen.t1 if t1 is None else t1
    if not 0 <= k <= n - 1:
        raise InputError(f"k={k} outside [0, {n - 1}]")
    if method == "quadrature":
        nodes = quadrature_nodes(t1, s, quad_points)
        vals = np.stack([partial_ergodic_means(gen, T, schedule, n, v, t1)[k] for v in nodes])
        return simpson(vals, nodes)
    if method != "antiderivative":
        raise InputError(f"unknown integration method {method!r}")
    return integrated_partial_means(gen, T, schedule, n, s, t1)[k]


def integrated_partial_means(
    gen: TimeDepGenerator, T: MatrixLike, schedule: Schedule, n: int, s: float, t1: float | None = None
) -> np.ndarray:
    """Integrals over [t1, s] of P^(n,k)[K] for k = 0..n-1 by the antiderivative route, shape (n, d, d)."""
    t1 = gen.t1 if t1 is None else t1
    if n < 1:
        raise InputError("n must be at least 1")
    if s < t1:
        raise InputError(f"need s >= t1, got s={s}, t1={t1}")
    conj = _UnitaryConjugator(T)
    if gen.dim != conj.basis.shape[0]:
        raise InputError("generator and T dimensions differ")
    pts = _rhos(schedule, n, s, t1)
    pieces = np.stack([gen.integral(pts[l], pts[l + 1]) for l in range(n)])
    rotated = conj.to_eigenbasis(pieces) * conj.weights(n)
    return conj.from_eigenbasis(np.cumsum(rotated, axis=0))


@dataclass(frozen=True)
class ErgodicMeanResult:
    value: np.ndarray
    s_grid: np.ndarray
    n_trace: tuple[tuple[int, float], ...]
    converged: bool
    tol: float
    n_final: int


def ergodic_mean_discrete(
    gen: TimeDepGenerator,
    T: MatrixLike,
    schedule: Schedule,
    s_grid: Sequence[float] | None = None,
    tol: float = DEFAULT_MEAN_TOL,
    n_max: int = DEFAULT_N_MAX,
    n_start: int = 8,
    t1: float | None = None,
) -> ErgodicMeanResult:
    """Cauchy test on P^(n) = P^(n,n-1) under doubling of n, sup over ``s_grid``."""
    t1 = gen.t1 if t1 is None else t1
    grid = np.linspace(t1, gen.t2, DEFAULT_S_POINTS) if s_grid is None else np.asarray(s_grid, dtype=float)
    if grid.size == 0 or np.any(grid < t1 - 1e-12) or np.any(grid > gen.t2 + 1e-12):
        raise InputError("s_grid must be nonempty and inside the generator domain")

    def full_mean(n: int) -> np.ndarray:
        return np.stack([partial_ergodic_means(gen, T, schedule, n, s, t1)[-1] for s in grid])

    n = n_start
    current = full_mean(n)
    trace: list[tuple[int, float]] = []
    converged = False
    while 2 * n <= n_max:
        finer = full_mean(2 * n)
        gap = float(np.linalg.norm(finer - current, 2, axis=(1, 2)).max())
        trace.append((n, gap))
        n, current = 2 * n, finer
        if gap <= tol:
            converged = True
            break
    return ErgodicMeanResult(current, grid, tuple(trace), converged, tol, n)


def ergodic_mean_pinching(
    gen: TimeDepGenerator, U: MatrixLike, schedule: Schedule | None = None
) -> TimeDepGenerator:
    """s -> pinch(K(s)) by the spectral resolution of unitary U.

    Valid for the uniform schedule and finite Fourier or polynomial K; the
    result is returned as a generator of the same representation.
    """
    if gen.rep == "tabulated":
        raise UnsupportedRepresentationError("closed-form mean needs a poly, trig or constant generator")
    if schedule is not None and not schedule.is_uniform:
        raise ScheduleError("closed-form pinching mean is only established for the uniform schedule")
    u = as_matrix(U)
    if not is_unitary(u):
        raise InputError("U must be unitary within 1e-10")
    resolution = spectral_resolution(u)
    return gen.map_linear(lambda c: pinch(c, resolution))


def scalar_telescoping_sum(
    omega: complex, mode: str, n: int, k: int | None = None, z: complex | None = None
) -> complex:
    """Weighted telescoping sums whose n -> infinity limits detect omega = 1.

    power: sum_{l<n} omega^l (((l+1)/n)^k - (l/n)^k)
    exp:   sum_{l<n} omega^l ((l+1)/n e^{z(l+1)/n} - l/n e^{zl/n})
    """
    if abs(abs(omega) - 1.0) > 1e-12:
        raise InputError(f"omega must have unit modulus, got |omega|={abs(omega)}")
    if n < 1:
        raise InputError("n must be at least 1")
    ratios = np.arange(n + 1) / n
    if mode == "power":
        if k is None or k < 2:
            raise InputError("power mode needs k >= 2")
        terms = ratios**k
    elif mode == "exp":
        if z is None:
            raise InputError("exp mode needs z")
        terms = ratios * np.exp(z * ratios)
    else:
        raise InputError(f"unknown mode {mode!r}")
    powers = np.exp(1j * np.angle(omega) * np.arange(n))
    return complex(np.sum(powers * np.diff(terms)))


def scalar_telescoping_limit(omega: complex, mode: str, z: complex | None = None) -> complex:
    """1 (power) or e^z (exp) when omega = 1, otherwise 0."""
    if abs(omega - 1.0) > 1e-12:
        return 0.0
    return 1.0 if mode == "power" else complex(np.exp(z))


def ergodic_mean_group(
    K: MatrixLike,
    A: MatrixLike,
    method: str = "closed_form",
    S: float = 200.0,
    quad_points: int | None = None,
) -> np.ndarray:
    """Cesaro mean (1/S) int_0^S T(-s) K T(s) ds for T(s) = exp(A s), A skew-Hermitian.

    ``closed_form`` pinches K by the spectral resolution of A (the S -> infinity
    limit).  ``integral`` evaluates the finite-S average with the trapezoid
    rule, stepping T(s + h) = T(s) exp(A h).
    """
    k, a = as_matrix(K), as_matrix(A)
    if not is_skew_hermitian(a):
        raise InputError("A must be skew-Hermitian within 1e-10")
    if method == "closed_form":
        return pinch(k, spectral_resolution(a))
    if method != "integral":
        raise InputError(f"unknown method {method!r}")
    if S <= 0:
        raise InputError("S must be positive")
    points = quad_points or max(2049, math.ceil(64 * S * max(1.0, norm(a))) + 1)
    h = S / (points - 1)
    step = scipy.linalg.expm(a * h)
    t = np.eye(a.shape[0], dtype=complex)
    total = 0.5 * k
    for j in range(1, points):
        t = t @ step
        weight = 0.5 if j == points - 1 else 1.0
        total = total + weight * (dagger(t) @ k @ t)
    return total * h / S


def conjugation_kernel(L: TimeDepGenerator, T: MatrixLike) -> TimeDepGenerator:
    """s -> L(s) - T^{-1} L(s) T, an element of the kernel of the ergodic mean."""
    t = as_matrix(T)
    return L.map_linear(lambda c: c - dagger(t) @ c @ t)


def kernel_bound_check(
    L: TimeDepGenerator,
    T: MatrixLike,
    schedule: Schedule,
    n: int,
    k: int,
    s: float,
    t1: float | None = None,
) -> tuple[float, float]:
    """(||P^(n,k)[L - T^{-1}LT](s)||, psi(s - t1) S_alpha(n) ||L||_{C^{0,1}})."""
    if L.rep == "tabulated":
        raise UnsupportedRepresentationError("kernel bound needs the Lipschitz constant of L")
    t1 = L.t1 if t1 is None else t1
    kernel = conjugation_kernel(L, T)
    measured = norm(partial_ergodic_mean(kernel, T, schedule, n, k, s, t1))
    bound = psi(s - t1) * schedule_diagnostics(schedule, n).S_alpha * L.c01_norm()
    return measured, bound


def commutes_with(T: MatrixLike, X: MatrixLike) -> float:
    """||[T, X]||."""
    return norm(commutator(as_matrix(T), as_matrix(X)))
