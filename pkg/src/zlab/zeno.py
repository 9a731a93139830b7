"""Zeno products, their limits, and the decoupling error bounds.

The contraction T = T_I + T_C is interleaved with short propagator slices
F(rho[l+1], rho[l]).  As the partition refines, T_I^{-n} times the product
converges to G(s, t1), generated on X_I by the ergodic mean of P_I K P_I.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .curves import CurveRow, ErrorCurve
from .ergodic import Schedule, ergodic_mean_discrete, ergodic_mean_pinching
from .errors import ContractionError, InputError, LimitUnavailableError, StepBudgetError
from .linops import (
    BlockDecomposition,
    MatrixLike,
    SplitContraction,
    as_matrix,
    dagger,
    is_unitary,
    norm,
    pinch,
    spectral_resolution,
    validate_split_contraction,
    weak_growth_bound,
)
from .propagate import (
    TimeDepGenerator,
    expm,
    growth_profile,
    propagate,
    propagate_refined,
    quadrature_nodes,
    simpson,
)

__all__ = [
    "ZenoInstance",
    "BoundParams",
    "zeno_product",
    "corrected_zeno_product",
    "zeno_limit",
    "decoupled_product",
    "bound_params",
    "zeno_bound_projective",
    "zeno_bound_contraction",
    "zeno_bound_identity_block",
    "zeno_error_row",
    "zeno_error_curve",
    "decoupling_error_row",
    "decoupling_error_curve",
    "kick_witness",
    "single_kick_experiment",
]

DEFAULT_SLICE_STEPS = 8
SLICE_REL_TOL = 1e-9
MAX_SLICE_STEPS = 2**14
LIMIT_TOL = 1e-12
CERTIFY_N_MAX = 2**12
CERTIFY_TOL = 1e-3


@dataclass(frozen=True)
class ZenoInstance:
    split: SplitContraction
    gen: TimeDepGenerator
    schedule: Schedule
    t1: float
    t2: float
    s_grid: np.ndarray
    slice_steps: int = DEFAULT_SLICE_STEPS

    def __post_init__(self) -> None:
        if self.gen.dim != self.split.decomposition.dim:
            raise InputError("generator and contraction dimensions differ")
        if not self.gen.t1 <= self.t1 < self.t2 <= self.gen.t2:
            raise InputError("[t1, t2] must lie inside the generator domain")
        grid = np.asarray(self.s_grid, dtype=float).reshape(-1)
        if grid.size == 0 or np.any(grid < self.t1) or np.any(grid > self.t2):
            raise InputError("s_grid must be nonempty and inside [t1, t2]")
        grid.setflags(write=False)
        object.__setattr__(self, "s_grid", grid)

    @classmethod
    def create(
        cls,
        T: MatrixLike,
        decomposition: BlockDecomposition,
        gen: TimeDepGenerator,
        schedule: Schedule | None = None,
        s_grid: Sequence[float] | None = None,
        t1: float | None = None,
        t2: float | None = None,
    ) -> "ZenoInstance":
        split = validate_split_contraction(T, decomposition)
        t1 = gen.t1 if t1 is None else t1
        t2 = gen.t2 if t2 is None else t2
        grid = np.array([t2]) if s_grid is None else np.asarray(s_grid, dtype=float)
        return cls(split, gen, schedule or Schedule.uniform(), t1, t2, grid)

    @property
    def dec(self) -> BlockDecomposition:
        return self.split.decomposition

    @property
    def isometric_block_is_identity(self) -> bool:
        return norm(self.split.T_I - np.eye(self.dec.dim_I)) <= 1e-12

    @cached_property
    def compressed_generator(self) -> TimeDepGenerator:
        """P_I K P_I written in the X_I basis (dim_I square)."""
        return self.gen.map_linear(self.dec.block_I).with_domain(self.t1, self.t2)

    @cached_property
    def limit_generator(self) -> TimeDepGenerator:
        """Ergodic mean of P_I K P_I with respect to T_I, on the X_I block."""
        compressed = self.compressed_generator
        t_i = self.split.T_I
        if self.isometric_block_is_identity:
            return compressed
        if self.schedule.is_uniform and compressed.rep != "tabulated":
            return ergodic_mean_pinching(compressed, t_i, self.schedule)
        return _certified_mean(compressed, t_i, self.schedule, self.s_grid, self.t1)


def _certified_mean(
    gen: TimeDepGenerator, T_I: np.ndarray, schedule: Schedule, s_grid: np.ndarray, t1: float
) -> TimeDepGenerator:
    # Outside the closed-form regime, trust the pinched generator only when
    # the discrete partial means visibly converge to it on the grid.
    resolution = spectral_resolution(T_I)
    pinched = gen.map_linear(lambda c: pinch(c, resolution))
    result = ergodic_mean_discrete(gen, T_I, schedule, s_grid, tol=CERTIFY_TOL, n_max=CERTIFY_N_MAX, t1=t1)
    scale = max(1.0, gen.c0_norm())
    gap = max(norm(v - pinched(s)) for v, s in zip(result.value, result.s_grid))
    if not result.converged or gap > CERTIFY_TOL * scale:
        raise LimitUnavailableError(
            f"ergodic mean not certified: converged={result.converged}, distance to pinching {gap:.3e}"
        )
    return pinched


def _partition(inst: ZenoInstance, n: int, s: float) -> np.ndarray:
    if n < 1:
        raise InputError("n must be at least 1")
    if not inst.t1 <= s <= inst.t2:
        raise InputError(f"s={s} outside [{inst.t1}, {inst.t2}]")
    pts = inst.t1 + (s - inst.t1) * inst.schedule.gammas(n)
    pts[-1] = s
    return pts


def _slice_propagator(gen: TimeDepGenerator, u: float, v: float, start_steps: int) -> np.ndarray:
    """Step doubling until the self-error estimate is at most 1e-9 times the slice width."""
    if gen.is_constant or u == v:
        return propagate(gen, u, v, 1)
    steps = start_steps
    coarse = propagate(gen, u, v, steps)
    while True:
        steps *= 2
        if steps > MAX_SLICE_STEPS:
            raise StepBudgetError(f"slice [{v}, {u}] did not resolve within {MAX_SLICE_STEPS} steps")
        fine = propagate(gen, u, v, steps)
        if norm(fine - coarse) / 3.0 <= SLICE_REL_TOL * (u - v):
            return fine
        coarse = fine


def _slices(inst: ZenoInstance, gen: TimeDepGenerator, n: int, s: float) -> list[np.ndarray]:
    pts = _partition(inst, n, s)
    return [_slice_propagator(gen, pts[l + 1], pts[l], inst.slice_steps) for l in range(n)]


def zeno_product(inst: ZenoInstance, n: int, s: float) -> np.ndarray:
    """prod_l T F(rho[l+1](s), rho[l](s)), later slices on the left."""
    t = inst.split.T
    out = np.eye(inst.dec.dim, dtype=complex)
    for f in _slices(inst, inst.gen, n, s):
        out = t @ f @ out
    return out


def corrected_zeno_product(inst: ZenoInstance, n: int, s: float) -> np.ndarray:
    """(T_I^{-1} on X_I, identity on X_C)^n times the Zeno product."""
    return inst.split.isometric_inverse_power(n) @ zeno_product(inst, n, s)


def zeno_limit(inst: ZenoInstance, s: float) -> np.ndarray:
    """G(s, t1): propagate the limit generator on X_I from the identity and embed."""
    if not inst.t1 <= s <= inst.t2:
        raise InputError(f"s={s} outside [{inst.t1}, {inst.t2}]")
    gen = inst.limit_generator
    block = propagate_refined(gen, s, inst.t1, tol=LIMIT_TOL)
    return inst.dec.embed_I(block)


def decoupled_product(inst: ZenoInstance, n: int, s: float) -> np.ndarray:
    """T_I^n prod_l T_I^{-l} G_l T_I^l with G_l generated by P_I K P_I from P_I on slice l."""
    dec = inst.dec
    compressed = inst.gen.map_linear(lambda c: dec.P_I @ c @ dec.P_I)
    out = dec.P_I.astype(complex)
    for l, g in enumerate(_slices(inst, compressed, n, s)):
        g_l = dec.P_I @ g @ dec.P_I
        out = inst.split.isometric_power(-l) @ g_l @ inst.split.isometric_power(l) @ out
    return inst.split.isometric_power(n) @ out


@dataclass(frozen=True)
class BoundParams:
    """Constants feeding the decoupling bounds for one (n, s).

    Omega is exp(int omega) over [t1, s]; Lambda is max_l exp(int_{slice l} |omega|).
    """

    k_K: float
    k_P: float
    k_0: float
    tau_C: float
    Lambda: float
    Omega: float
    partition_norm: float
    contraction_norm: float = 0.0
    complement_norm: float = 1.0
    first_slice_width: float = 0.0
    first_slice_omega: float = 0.0

    def __post_init__(self) -> None:
        if self.tau_C < 1 or self.Lambda < 1 or self.Omega <= 0:
            raise InputError("need tau_C >= 1, Lambda >= 1 and Omega > 0")
        if not 0 <= self.contraction_norm < 1:
            raise ContractionError(f"contraction norm {self.contraction_norm} must lie in [0, 1)")


def _dominating_growth(inst: ZenoInstance, nodes: np.ndarray) -> np.ndarray:
    dec = inst.dec
    compressed = inst.gen.map_linear(lambda c: dec.P_I @ c @ dec.P_I)
    return np.maximum(growth_profile(inst.gen, nodes), growth_profile(compressed, nodes))


def bound_params(inst: ZenoInstance, n: int, s: float, nodes_per_slice: int = 4) -> BoundParams:
    """Assemble k_K, k_P, k_0, tau_C, Lambda and Omega for the partition of [t1, s]."""
    pts = _partition(inst, n, s)
    dec = inst.dec
    if s == inst.t1:
        return BoundParams(0.0, 0.0, 0.0, inst.split.tau_C, 1.0, 1.0, 0.0, inst.split.contraction_norm)
    window = inst.gen.with_domain(inst.t1, s)
    k_K = window.c0_bound()
    k_P = window.map_linear(lambda c: dec.P_I @ c @ dec.P_I).c0_bound()
    first = inst.gen.with_domain(pts[0], pts[1]) if pts[1] > pts[0] else None
    k_0 = 0.0 if first is None else first.map_linear(lambda c: dec.P_I @ c @ dec.P_C).c0_bound()

    omega_slices = []
    abs_slices = []
    for a, b in zip(pts[:-1], pts[1:]):
        nodes = quadrature_nodes(a, b, nodes_per_slice)
        om = _dominating_growth(inst, nodes)
        omega_slices.append(float(simpson(om, nodes)))
        abs_slices.append(float(simpson(np.abs(om), nodes)))
    return BoundParams(
        k_K=k_K,
        k_P=k_P,
        k_0=k_0,
        tau_C=inst.split.tau_C,
        Lambda=math.exp(max(abs_slices)),
        Omega=math.exp(sum(omega_slices)),
        partition_norm=float(np.max(np.diff(pts))),
        contraction_norm=inst.split.contraction_norm,
        complement_norm=norm(dec.P_C) if dec.dim_C else 0.0,
        first_slice_width=float(pts[1] - pts[0]),
        first_slice_omega=omega_slices[0],
    )


def zeno_bound_projective(p: BoundParams, n: int, x_split_norms: tuple[float, float] = (1.0, 1.0)) -> float:
    """n Omega |T|^2 f ||Px|| + Omega |T| g ||(1-P)x|| for a norm-one projection."""
    width = p.partition_norm
    f = p.Lambda * (p.k_K**2 * math.exp(p.k_K * width) + p.k_P**2 * math.exp(p.k_P * width))
    g = p.complement_norm * p.k_0 * math.exp(p.k_0 * p.first_slice_width - p.first_slice_omega)
    in_range, off_range = x_split_norms
    return n * p.Omega * width**2 * f * in_range + p.Omega * width * g * off_range


def zeno_bound_contraction(p: BoundParams, n: int, variant: str = "statement") -> float:
    """n Omega |T|^2 h + Omega |T| h1 + Omega ||T_C||^n.

    ``statement`` uses h1 = tau_C Lambda exp(k_P |T|); ``proof`` uses the
    constant the derivation actually produces, tau_C Lambda k_K exp(k_K |T|).
    """
    width = p.partition_norm
    h = p.Lambda * (
        p.k_K**2 * math.exp(p.k_K * width) * (1 + p.tau_C * math.exp(p.k_K * width))
        + p.k_P**2 * math.exp(p.k_P * width)
    )
    if variant == "statement":
        h1 = p.tau_C * p.Lambda * math.exp(p.k_P * width)
    elif variant == "proof":
        h1 = p.tau_C * p.Lambda * p.k_K * math.exp(p.k_K * width)
    else:
        raise InputError(f"unknown variant {variant!r}")
    tail = p.contraction_norm**n if p.contraction_norm > 0 else 0.0
    return n * p.Omega * width**2 * h + p.Omega * width * h1 + p.Omega * tail


def zeno_bound_identity_block(p: BoundParams, n: int) -> float:
    """Bound on ||prod T F - G(s, t1)|| when T_I is the identity."""
    width = p.partition_norm
    k, kp = p.k_K, p.k_P
    g = p.Lambda * (k**2 * math.exp(k * width) + p.tau_C * k**2 * math.exp(2 * k * width) + kp**2 * math.exp(kp * width))
    g1 = p.tau_C * p.Lambda * math.exp(kp * width)
    tail = p.contraction_norm**n if p.contraction_norm > 0 else 0.0
    return n * p.Omega * width**2 * g + p.Omega * width * g1 + p.Omega * tail


def zeno_error_row(inst: ZenoInstance, n: int, limits: dict[float, np.ndarray] | None = None) -> CurveRow:
    """(n, sup_s ||corrected product - G||, sup_s identity-block bound when T_I is the identity).

    The extra ``s`` records where the error supremum is attained.
    """
    errors, bounds = [], []
    with_bound = inst.isometric_block_is_identity
    for s in inst.s_grid:
        limit = limits[s] if limits is not None else zeno_limit(inst, s)
        errors.append(norm(corrected_zeno_product(inst, n, s) - limit))
        if with_bound:
            bounds.append(zeno_bound_identity_block(bound_params(inst, n, s), n))
    worst = int(np.argmax(errors))
    return CurveRow(float(n), errors[worst], max(bounds) if with_bound else None, {"s": float(inst.s_grid[worst])})


def zeno_error_curve(inst: ZenoInstance, n_grid: Sequence[int], mapper: Callable = map) -> ErrorCurve:
    """Error rows over ``n_grid``; ``mapper`` may fan rows out to a worker pool."""
    limits = {s: zeno_limit(inst, s) for s in inst.s_grid}
    grid = sorted(set(int(m) for m in n_grid))
    rows = list(mapper(lambda n: zeno_error_row(inst, n, limits), grid))
    return ErrorCurve.from_rows(rows, {"kind": "zeno"})


def decoupling_error_row(inst: ZenoInstance, n: int) -> CurveRow:
    """(n, sup_s ||prod T F - decoupled product||, contraction bound, statement constant).

    Extras carry the proof-constant contraction bound, the identity-block bound
    when T_I is the identity and the projective bound (unit vectors) when T
    is a projection, each maximized over the s grid.
    """
    errors: list[float] = []
    extras: dict[str, list[float]] = {"contraction_proof_bound": []}
    identity_block = inst.isometric_block_is_identity
    projective = identity_block and inst.split.contraction_norm == 0.0
    if identity_block:
        extras["identity_block_bound"] = []
    if projective:
        extras["projective_bound"] = []
    statement = []
    for s in inst.s_grid:
        errors.append(norm(zeno_product(inst, n, s) - decoupled_product(inst, n, s)))
        p = bound_params(inst, n, s)
        statement.append(zeno_bound_contraction(p, n, "statement"))
        extras["contraction_proof_bound"].append(zeno_bound_contraction(p, n, "proof"))
        if identity_block:
            extras["identity_block_bound"].append(zeno_bound_identity_block(p, n))
        if projective:
            extras["projective_bound"].append(zeno_bound_projective(p, n))
    worst = int(np.argmax(errors))
    out = {"s": float(inst.s_grid[worst])}
    out.update({k: max(v) for k, v in extras.items()})
    return CurveRow(float(n), errors[worst], max(statement), out)


def decoupling_error_curve(inst: ZenoInstance, n_grid: Sequence[int], mapper: Callable = map) -> ErrorCurve:
    """Decoupling rows over ``n_grid``; ``mapper`` may fan rows out to a worker pool."""
    grid = sorted(set(int(m) for m in n_grid))
    return ErrorCurve.from_rows(list(mapper(lambda n: decoupling_error_row(inst, n), grid)), {"kind": "bounds"})


def kick_witness(U: MatrixLike, K: MatrixLike, cluster_tol: float = 1e-8) -> tuple[np.ndarray, np.ndarray]:
    """(M, L) with K = M + L - U^{-1} L U and M commuting with U.

    In U's eigenbasis M keeps the entries between equal eigenvalues and
    L_jk = K_jk / (1 - conj(u_j) u_k) for the rest.
    """
    u, k = as_matrix(U), as_matrix(K)
    if not is_unitary(u):
        raise InputError("U must be unitary within 1e-10")
    resolution = spectral_resolution(u, cluster_tol)
    m = pinch(k, resolution)
    # Orthonormal eigenbasis assembled cluster by cluster from the projections.
    columns, phases = [], []
    for lam, p in zip(resolution.eigenvalues, resolution.projections):
        w, v = np.linalg.eigh(p)
        block = v[:, w > 0.5]
        columns.append(block)
        phases.extend([lam / abs(lam)] * block.shape[1])
    basis = np.hstack(columns)
    phases = np.array(phases)
    off = dagger(basis) @ (k - m) @ basis
    denom = 1 - np.conj(phases)[:, None] * phases[None, :]
    same = np.abs(denom) <= cluster_tol
    l_eig = np.where(same, 0.0, off / np.where(same, 1.0, denom))
    return m, basis @ l_eig @ dagger(basis)


def single_kick_experiment(
    U: MatrixLike,
    K: MatrixLike,
    t: float,
    n_grid: Sequence[int],
    witness: tuple[MatrixLike, MatrixLike] | None = None,
) -> ErrorCurve:
    """Errors ||U^{-n} (U exp(K t/n))^n - exp(pinch(K) t)|| over ``n_grid``.

    The bound column adds the first-order correction (e^{2||L|| t/n} - 1) e^{omega t}
    to the product estimate for the witness split K = M + L - U^{-1} L U.
    Extras hold that product estimate and the quantity it controls.
    """
    u, k = as_matrix(U), as_matrix(K)
    if not is_unitary(u):
        raise InputError("U must be unitary within 1e-10")
    m, l = kick_witness(u, k) if witness is None else (as_matrix(witness[0]), as_matrix(witness[1]))
    residual = norm(m + l - dagger(u) @ l @ u - k)
    if residual > 1e-9 * max(1.0, norm(k)) or norm(u @ m - m @ u) > 1e-9 * max(1.0, norm(m)):
        raise InputError("witness must satisfy K = M + L - U^{-1} L U with M commuting with U")
    limit = expm(pinch(k, spectral_resolution(u)), t)
    omega = max(weak_growth_bound(k), weak_growth_bound(m))
    norm_m, norm_l = norm(m), norm(l)
    rows = []
    for n in sorted(set(int(x) for x in n_grid)):
        if n < 1:
            raise InputError("n must be at least 1")
        product = np.linalg.matrix_power(u @ expm(k, t / n), n)
        u_n = np.linalg.matrix_power(u, n)
        corrected = dagger(u_n) @ product
        error = norm(corrected - limit)
        shifted = expm(l - dagger(u_n) @ l @ u_n, t / n) @ expm(m, t)
        kick_product_measured = norm(u_n @ shifted - product)
        kick_product_bound = (
            math.exp(omega * t) * (norm_m + 2 * norm_l) ** 2 * (2 * t * t / n)
            * math.exp((abs(omega) + norm_m + 2 * norm_l) * t / n)
        )
        bound = kick_product_bound + math.expm1(2 * norm_l * t / n) * math.exp(omega * t)
        rows.append(
            CurveRow(float(n), error, bound, {"t": t, "kick_product_measured": kick_product_measured, "kick_product_bound": kick_product_bound})
        )
    return ErrorCurve.from_rows(rows, {"kind": "single_kick"})
