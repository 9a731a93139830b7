"""Matrix exponentials, time-ordered propagators and product-formula bounds.

The propagator F(u, v) solves dF/du = K(u) F with F(v, v) = 1.  Constant
generators are exponentiated directly; everything else goes through the
exponential midpoint rule (order 2) on equal substeps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
import scipy.integrate
import scipy.linalg

from .errors import InputError, PreconditionError, StepBudgetError, UnsupportedRepresentationError
from .linops import MatrixLike, as_matrix, dagger, norm, weak_growth_bound

__all__ = [
    "TimeDepGenerator",
    "Propagator",
    "expm",
    "propagate",
    "propagate_refined",
    "picard_term",
    "picard_tail_bound",
    "trotter_product",
    "product_difference_bound",
    "perturbation_bound",
    "propagator_growth_check",
    "interleaving_bound_F4",
    "weighted_sum_growth_check",
    "integral_growth_check",
    "quadrature_nodes",
    "simpson",
    "growth_profile",
    "QUAD_INTERVALS",
    "C0_GRID_POINTS",
    "MAX_PICARD_ORDER",
]

QUAD_INTERVALS = 256
C0_GRID_POINTS = 1024
MAX_PICARD_ORDER = 20
MAX_STEPS = 2**20
DOMAIN_SLACK = 1e-9

REPRESENTATIONS = ("constant", "poly", "trig", "tabulated")


@dataclass(frozen=True)
class TimeDepGenerator:
    """Operator-valued function K(t) on [t1, t2].

    Representations:

    * ``constant``: one coefficient.
    * ``poly``: ``K(t) = sum_k C[k] t**k``.
    * ``trig``: ``K(t) = sum_{k=-m}^{m} C[k+m] exp(2 pi i k t / period)``.
    * ``tabulated``: samples at increasing ``times`` joined linearly.
    """

    rep: str
    coefficients: np.ndarray
    t1: float = 0.0
    t2: float = 1.0
    period: float | None = None
    times: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if self.rep not in REPRESENTATIONS:
            raise InputError(f"unknown generator representation {self.rep!r}")
        coeffs = np.array(self.coefficients, dtype=complex)
        if coeffs.ndim == 2:
            coeffs = coeffs[None]
        if coeffs.ndim != 3 or coeffs.shape[1] != coeffs.shape[2] or coeffs.shape[0] == 0:
            raise InputError(f"coefficients must have shape (m, d, d), got {coeffs.shape}")
        if not np.all(np.isfinite(coeffs)):
            raise InputError("generator coefficients contain NaN or infinity")
        if not (math.isfinite(self.t1) and math.isfinite(self.t2) and self.t1 < self.t2):
            raise InputError(f"domain must satisfy t1 < t2, got [{self.t1}, {self.t2}]")
        if self.rep == "constant" and coeffs.shape[0] != 1:
            raise InputError("constant generator takes exactly one coefficient")
        if self.rep == "trig":
            if coeffs.shape[0] % 2 != 1:
                raise InputError("trig generator needs 2m+1 coefficients for k in [-m, m]")
            if self.period is None or not self.period > 0:
                raise InputError("trig generator needs a positive period")
        if self.rep == "tabulated":
            times = np.asarray(self.times, dtype=float)
            if times.shape != (coeffs.shape[0],) or times.size < 2:
                raise InputError("tabulated generator needs one time per sample and at least two samples")
            if np.any(np.diff(times) <= 0):
                raise InputError("sample times must be strictly increasing")
            if times[0] > self.t1 or times[-1] < self.t2:
                raise InputError("sample times must cover the domain")
            times.setflags(write=False)
            object.__setattr__(self, "times", times)
        coeffs.setflags(write=False)
        object.__setattr__(self, "coefficients", coeffs)

    # construction -----------------------------------------------------------

    @classmethod
    def constant(cls, K: MatrixLike, t1: float = 0.0, t2: float = 1.0) -> "TimeDepGenerator":
        return cls("constant", as_matrix(K)[None], t1, t2)

    @classmethod
    def poly(cls, coefficients: Sequence[MatrixLike], t1: float = 0.0, t2: float = 1.0) -> "TimeDepGenerator":
        return cls("poly", np.stack([as_matrix(c) for c in coefficients]), t1, t2)

    @classmethod
    def trig(
        cls, coefficients: Sequence[MatrixLike], period: float, t1: float = 0.0, t2: float = 1.0
    ) -> "TimeDepGenerator":
        return cls("trig", np.stack([as_matrix(c) for c in coefficients]), t1, t2, period=float(period))

    @classmethod
    def tabulated(cls, times: Sequence[float], samples: Sequence[MatrixLike]) -> "TimeDepGenerator":
        times = np.asarray(times, dtype=float)
        return cls("tabulated", np.stack([as_matrix(s) for s in samples]), float(times[0]), float(times[-1]), times=times)

    @classmethod
    def zero(cls, dim: int, t1: float = 0.0, t2: float = 1.0) -> "TimeDepGenerator":
        return cls.constant(np.zeros((dim, dim)), t1, t2)

    # basic properties -------------------------------------------------------

    @property
    def dim(self) -> int:
        return self.coefficients.shape[1]

    @property
    def domain(self) -> tuple[float, float]:
        return (self.t1, self.t2)

    @property
    def is_constant(self) -> bool:
        if self.rep == "constant":
            return True
        if self.rep == "poly":
            return not np.any(self.coefficients[1:])
        if self.rep == "trig":
            m = self.coefficients.shape[0] // 2
            return not (np.any(self.coefficients[:m]) or np.any(self.coefficients[m + 1 :]))
        return False

    # evaluation -------------------------------------------------------------

    def __call__(self, t: float) -> np.ndarray:
        return self.evaluate(np.array([t], dtype=float))[0]

    def evaluate(self, ts: Sequence[float] | np.ndarray) -> np.ndarray:
        """Values at many times, shape (len(ts), d, d)."""
        ts = np.asarray(ts, dtype=float).reshape(-1)
        slack = DOMAIN_SLACK * (1.0 + self.t2 - self.t1)
        if ts.size and (ts.min() < self.t1 - slack or ts.max() > self.t2 + slack):
            raise InputError(f"evaluation times leave the domain [{self.t1}, {self.t2}]")
        c = self.coefficients
        if self.rep == "constant":
            return np.broadcast_to(c[0], (ts.size,) + c.shape[1:]).copy()
        if self.rep == "poly":
            out = np.zeros((ts.size,) + c.shape[1:], dtype=complex)
            for coeff in c[::-1]:
                out = out * ts[:, None, None] + coeff
            return out
        if self.rep == "trig":
            m = c.shape[0] // 2
            ks = np.arange(-m, m + 1)
            phases = np.exp(2j * np.pi * np.outer(ts, ks) / self.period)
            return np.einsum("tk,kij->tij", phases, c)
        idx = np.clip(np.searchsorted(self.times, ts, side="right") - 1, 0, self.times.size - 2)
        t0, t1 = self.times[idx], self.times[idx + 1]
        w = ((ts - t0) / (t1 - t0))[:, None, None]
        return (1 - w) * c[idx] + w * c[idx + 1]

    # derived generators -----------------------------------------------------

    def derivative(self) -> "TimeDepGenerator":
        """Analytic time derivative; undefined for tabulated samples."""
        c = self.coefficients
        if self.rep == "constant" or (self.rep == "poly" and c.shape[0] == 1):
            return TimeDepGenerator.constant(np.zeros(c.shape[1:]), self.t1, self.t2)
        if self.rep == "poly":
            powers = np.arange(1, c.shape[0])[:, None, None]
            return TimeDepGenerator("poly", c[1:] * powers, self.t1, self.t2)
        if self.rep == "trig":
            m = c.shape[0] // 2
            ks = np.arange(-m, m + 1)[:, None, None]
            return TimeDepGenerator("trig", c * (2j * np.pi * ks / self.period), self.t1, self.t2, period=self.period)
        raise UnsupportedRepresentationError("tabulated generators have no analytic derivative")

    def map_linear(self, fn: Callable[[np.ndarray], np.ndarray]) -> "TimeDepGenerator":
        """Apply a linear map to every value; the representation is preserved."""
        coeffs = np.stack([fn(c) for c in self.coefficients])
        return TimeDepGenerator(self.rep, coeffs, self.t1, self.t2, self.period, self.times)

    def plus_constant(self, M: MatrixLike, scale: float = 1.0) -> "TimeDepGenerator":
        """Generator u -> scale*M + K(u)."""
        m = as_matrix(M) * scale
        coeffs = np.array(self.coefficients)
        if self.rep in ("constant", "poly"):
            coeffs[0] += m
        elif self.rep == "trig":
            coeffs[coeffs.shape[0] // 2] += m
        else:
            coeffs += m
        return TimeDepGenerator(self.rep, coeffs, self.t1, self.t2, self.period, self.times)

    def with_domain(self, t1: float, t2: float) -> "TimeDepGenerator":
        return TimeDepGenerator(self.rep, self.coefficients, t1, t2, self.period, self.times)

    def integral(self, a: float, b: float) -> np.ndarray:
        """Exact integral of K over [a, b] (piecewise-linear exact for tabulated)."""
        c = self.coefficients
        if self.rep == "constant":
            return c[0] * (b - a)
        if self.rep == "poly":
            powers = np.arange(1, c.shape[0] + 1, dtype=float)
            weights = (b**powers - a**powers) / powers
            return np.einsum("k,kij->ij", weights, c)
        if self.rep == "trig":
            m = c.shape[0] // 2
            out = c[m] * (b - a)
            for k in range(-m, m + 1):
                if k:
                    freq = 2j * np.pi * k / self.period
                    out = out + c[k + m] * (np.exp(freq * b) - np.exp(freq * a)) / freq
            return out
        lo, hi = min(a, b), max(a, b)
        inner = self.times[(self.times > lo) & (self.times < hi)]
        nodes = np.concatenate([[lo], inner, [hi]])
        vals = self.evaluate(nodes)
        total = np.einsum("t,tij->ij", np.diff(nodes), (vals[1:] + vals[:-1]) / 2)
        return total if b >= a else -total

    # norms ------------------------------------------------------------------

    def c0_norm(self, grid_points: int = C0_GRID_POINTS) -> float:
        """Grid supremum of ||K(t)|| (a lower estimate of the C0 norm)."""
        grid = np.linspace(self.t1, self.t2, grid_points)
        return float(np.linalg.norm(self.evaluate(grid), 2, axis=(1, 2)).max())

    def coefficient_bound(self) -> float:
        """Upper bound on the C0 norm from the coefficients alone."""
        c = self.coefficients
        norms = np.linalg.norm(c, 2, axis=(1, 2))
        if self.rep == "poly":
            reach = max(abs(self.t1), abs(self.t2))
            return float(sum(nk * reach**k for k, nk in enumerate(norms)))
        if self.rep == "trig":
            return float(norms.sum())
        # Norms are convex, so a piecewise-linear path peaks at a sample.
        return float(norms.max())

    def c0_bound(self, grid_points: int = C0_GRID_POINTS) -> float:
        """Rigorous upper bound on sup ||K(t)|| over the domain.

        Grid supremum plus half a grid step times the Lipschitz constant,
        capped by the coefficient bound.
        """
        if self.rep in ("constant", "tabulated"):
            return self.coefficient_bound()
        h = (self.t2 - self.t1) / (grid_points - 1)
        lip = self.derivative().coefficient_bound()
        return min(self.coefficient_bound(), self.c0_norm(grid_points) + 0.5 * h * lip)

    def lipschitz(self, grid_points: int = C0_GRID_POINTS) -> float:
        """Upper bound on the Lipschitz constant via the derivative's C0 bound."""
        if self.rep == "tabulated":
            raise UnsupportedRepresentationError("Lipschitz constant is undefined for tabulated generators")
        if self.is_constant:
            return 0.0
        return self.derivative().c0_bound(grid_points)

    def c01_norm(self, grid_points: int = C0_GRID_POINTS) -> float:
        """C0 bound plus Lipschitz bound."""
        return self.c0_bound(grid_points) + self.lipschitz(grid_points)


def expm(K: MatrixLike, t: float = 1.0) -> np.ndarray:
    """exp(K t) by scaling and squaring with a Pade approximant."""
    if not math.isfinite(t):
        raise InputError("time must be finite")
    return scipy.linalg.expm(as_matrix(K) * t)


def _check_interval(gen: TimeDepGenerator, u: float, v: float) -> None:
    if u < v:
        raise InputError(f"propagation needs u >= v, got u={u}, v={v}")
    slack = 1e-12 * max(1.0, abs(gen.t1), abs(gen.t2))
    if v < gen.t1 - slack or u > gen.t2 + slack:
        raise InputError(f"[{v}, {u}] is outside the generator domain [{gen.t1}, {gen.t2}]")


def propagate(gen: TimeDepGenerator, u: float, v: float, steps: int = 64) -> np.ndarray:
    """F(u, v) by the exponential midpoint rule on ``steps`` equal substeps."""
    _check_interval(gen, u, v)
    if steps < 1:
        raise InputError("steps must be at least 1")
    if steps > MAX_STEPS:
        raise StepBudgetError(f"{steps} steps exceeds the cap {MAX_STEPS}")
    if u == v:
        return np.eye(gen.dim, dtype=complex)
    if gen.is_constant:
        return expm(gen.coefficients[0] if gen.rep != "trig" else gen(u), u - v)
    h = (u - v) / steps
    mids = v + (np.arange(steps) + 0.5) * h
    factors = scipy.linalg.expm(gen.evaluate(mids) * h)
    out = factors[0]
    for f in factors[1:]:
        out = f @ out
    return out


def propagate_refined(
    gen: TimeDepGenerator,
    u: float,
    v: float,
    tol: float = 1e-10,
    start_steps: int = 8,
    max_steps: int = 2**16,
) -> np.ndarray:
    """Propagate to relative accuracy ``tol`` by step doubling.

    The midpoint error expands in even powers of the step, so successive
    Richardson values (4 F_2n - F_n)/3 are fourth order; iteration stops when
    two of them differ by at most tol * max(1, ||F||).
    """
    if gen.is_constant or u == v:
        return propagate(gen, u, v, 1)
    steps = start_steps
    coarse = propagate(gen, u, v, steps)
    prev_extrapolated = None
    while True:
        steps *= 2
        if steps > max_steps:
            raise StepBudgetError(f"no convergence to {tol:g} within {max_steps} steps")
        fine = propagate(gen, u, v, steps)
        extrapolated = (4 * fine - coarse) / 3
        if prev_extrapolated is not None:
            if norm(extrapolated - prev_extrapolated) <= tol * max(1.0, norm(extrapolated)):
                return extrapolated
        coarse, prev_extrapolated = fine, extrapolated


@dataclass(frozen=True)
class Propagator:
    """Callable F(u, v) bound to a generator and a step density."""

    generator: TimeDepGenerator
    solver: str = "exp_midpoint"
    steps_per_unit_time: int = 256

    def __call__(self, u: float, v: float) -> np.ndarray:
        if self.solver == "exact_constant":
            if not self.generator.is_constant:
                raise UnsupportedRepresentationError("exact_constant solver needs a constant generator")
            _check_interval(self.generator, u, v)
            return expm(self.generator(v), u - v)
        if self.solver != "exp_midpoint":
            raise InputError(f"unknown solver {self.solver!r}")
        steps = max(1, math.ceil(self.steps_per_unit_time * (u - v)))
        return propagate(self.generator, u, v, steps)


def quadrature_nodes(a: float, b: float, intervals: int = QUAD_INTERVALS) -> np.ndarray:
    if intervals % 2:
        intervals += 1
    return np.linspace(a, b, intervals + 1)


def simpson(values: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    """Composite Simpson rule along the first axis."""
    if nodes[-1] == nodes[0]:
        return np.zeros(np.shape(values)[1:], dtype=np.asarray(values).dtype)
    return scipy.integrate.simpson(values, x=nodes, axis=0)


def _cumulative_simpson(values: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    # scipy's cumulative Simpson drops imaginary parts, so integrate them separately.
    def cum(part: np.ndarray) -> np.ndarray:
        return scipy.integrate.cumulative_simpson(part, x=nodes, axis=0, initial=0)

    return cum(values.real) + 1j * cum(values.imag)


def picard_term(
    gen: TimeDepGenerator, l: int, u: float, v: float, quad_points: int = QUAD_INTERVALS
) -> np.ndarray:
    """l-th Picard term: the l-fold time-ordered integral of K over [v, u].

    Built recursively on one shared grid with cumulative Simpson quadrature.
    """
    if l < 0:
        raise InputError("Picard order must be non-negative")
    if l > MAX_PICARD_ORDER:
        raise InputError(f"Picard order {l} exceeds the cap {MAX_PICARD_ORDER}")
    _check_interval(gen, u, v)
    d = gen.dim
    if l == 0:
        return np.eye(d, dtype=complex)
    if u == v:
        return np.zeros((d, d), dtype=complex)
    nodes = quadrature_nodes(v, u, quad_points)
    k_vals = gen.evaluate(nodes)
    term = np.broadcast_to(np.eye(d, dtype=complex), k_vals.shape)
    for _ in range(l):
        term = _cumulative_simpson(k_vals @ term, nodes)
    return term[-1]


def picard_tail_bound(c0_norm: float, u: float, v: float, k: int) -> float:
    """(u-v)^k ||K||^k exp((u-v)||K||): bound on the error of the first k Picard terms."""
    if k < 0:
        raise InputError("k must be non-negative")
    if not (math.isfinite(c0_norm) and c0_norm >= 0):
        raise InputError("C0 norm must be a finite non-negative number")
    x = (u - v) * c0_norm
    return x**k * math.exp(x)


def trotter_product(K1: MatrixLike, K2: MatrixLike, t: float, n: int) -> np.ndarray:
    """[exp(K1 t/n) exp(K2 t/n)]^n."""
    if n < 1:
        raise InputError("n must be at least 1")
    step = expm(K1, t / n) @ expm(K2, t / n)
    return np.linalg.matrix_power(step, n)


def product_difference_bound(norm_caps: Sequence[float], N: float, term_gaps: Sequence[float]) -> float:
    """N exp(sum M_k) sum ||A_l - B_l||: telescoping bound on a product difference."""
    caps = np.asarray(norm_caps, dtype=float)
    gaps = np.asarray(term_gaps, dtype=float)
    if caps.shape != gaps.shape:
        raise InputError("norm caps and gaps must have the same length")
    if np.any(gaps < 0):
        raise InputError("gaps must be non-negative")
    return float(N * math.exp(caps.sum()) * gaps.sum())


def growth_profile(gen: TimeDepGenerator, nodes: np.ndarray) -> np.ndarray:
    """Closed-form weak growth bound of K(s) at each node."""
    vals = gen.evaluate(nodes)
    herm = (vals + dagger(vals)) / 2
    return np.linalg.eigvalsh(herm)[:, -1]


def perturbation_bound(
    genK: TimeDepGenerator,
    genL: TimeDepGenerator,
    u: float,
    v: float,
    omega: Callable[[np.ndarray], np.ndarray] | float | None = None,
    quad_points: int = QUAD_INTERVALS,
    tol: float = 1e-10,
) -> tuple[float, float]:
    """(bound, measured) for ||F_K(u,v) - F_L(u,v)||.

    bound = exp(int omega) * int ||K - L||.  ``omega`` must dominate both weak
    growth bounds on the quadrature grid; by default it is their pointwise max.
    """
    if genK.dim != genL.dim:
        raise InputError("generators must share a dimension")
    _check_interval(genK, u, v)
    _check_interval(genL, u, v)
    nodes = quadrature_nodes(v, u, quad_points)
    floor = np.maximum(growth_profile(genK, nodes), growth_profile(genL, nodes))
    if omega is None:
        om = floor
    elif callable(omega):
        om = np.broadcast_to(np.asarray(omega(nodes), dtype=float), nodes.shape)
    else:
        om = np.full(nodes.shape, float(omega))
    if np.any(om < floor - 1e-12):
        worst = float(np.max(floor - om))
        raise PreconditionError(f"omega fails to dominate the weak growth bounds by {worst:.3e}")
    gap = np.linalg.norm(genK.evaluate(nodes) - genL.evaluate(nodes), 2, axis=(1, 2))
    bound = math.exp(float(simpson(om, nodes))) * float(simpson(gap, nodes))
    measured = norm(propagate_refined(genK, u, v, tol) - propagate_refined(genL, u, v, tol))
    return bound, measured


def propagator_growth_check(
    gen: TimeDepGenerator, u: float, v: float, quad_points: int = QUAD_INTERVALS, tol: float = 1e-10
) -> tuple[float, float]:
    """(||F(u,v)||, exp(int_v^u omega_{K(s)} ds))."""
    _check_interval(gen, u, v)
    nodes = quadrature_nodes(v, u, quad_points)
    rhs = math.exp(float(simpson(growth_profile(gen, nodes), nodes)))
    lhs = norm(propagate_refined(gen, u, v, tol))
    return lhs, rhs


def interleaving_bound_F4(
    f_caps: Mapping[str, Callable[[float], float]], u: float, v: float, w: float
) -> float:
    """g^2 e^g + h^2 e^h for the interleaved-propagator commutation estimate.

    ``f_caps`` maps ``"K+M"``, ``"M"`` and ``"K"`` to majorants f_X with
    ||{X}_l(tau)|| <= f_X(tau)^l / l!.  Here g = f_{K+M}(u-v) + f_M(v-w) and
    h = f_K(u-v) + f_M(u-w).
    """
    if not w < v < u:
        raise InputError("interleaving bound needs w < v < u")
    g = f_caps["K+M"](u - v) + f_caps["M"](v - w)
    h = f_caps["K"](u - v) + f_caps["M"](u - w)
    return g * g * math.exp(g) + h * h * math.exp(h)


def weighted_sum_growth_check(
    K: MatrixLike, U: MatrixLike, alphas: Sequence[float], t: float
) -> tuple[float, float]:
    """(||exp(sum_l a_l U^{-l} K U^l t)||, exp(sum_l a_l omega_K t)) for unitary U."""
    k, u = as_matrix(K), as_matrix(U)
    total = np.zeros_like(k)
    conj = k.copy()
    for a in alphas:
        total += a * conj
        conj = dagger(u) @ conj @ u
    lhs = norm(expm(total, t))
    rhs = math.exp(sum(alphas) * weak_growth_bound(k) * t)
    return lhs, rhs


def integral_growth_check(
    gen: TimeDepGenerator, scale: float, quad_points: int = QUAD_INTERVALS
) -> tuple[float, float]:
    """(||exp(v int K)||, exp(v int omega_K)) over the full domain, v = ``scale`` >= 0."""
    if scale < 0:
        raise InputError("scale must be non-negative")
    nodes = quadrature_nodes(gen.t1, gen.t2, quad_points)
    integral = simpson(gen.evaluate(nodes), nodes)
    lhs = norm(expm(integral, scale))
    rhs = math.exp(scale * float(simpson(growth_profile(gen, nodes), nodes)))
    return lhs, rhs
