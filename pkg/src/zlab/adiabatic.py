"""Strong-generator limits: propagators of gamma A + K(u) as gamma grows.

A splits as A_I (skew-Hermitian, a unitary group on X_I) plus A_C (growth
bound w_C < 0).  As gamma grows, F_gamma(t, t1) approaches the fast rotation
exp(gamma A_I (t - t1)) on X_I times G(t, t1), which is generated by the group
ergodic mean of P_I K P_I.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .curves import CurveRow, ErrorCurve
from .errors import InputError, StepBudgetError, StructureError
from .linops import (
    BlockDecomposition,
    MatrixLike,
    STRUCTURE_TOL,
    SpectralResolution,
    as_matrix,
    commutator,
    dagger,
    is_skew_hermitian,
    norm,
    pinch,
    spectral_resolution,
    weak_growth_bound,
)
from .propagate import TimeDepGenerator, expm, propagate, propagate_refined

__all__ = [
    "AdiabaticInstance",
    "AdiabaticBoundParams",
    "adiabatic_propagator",
    "adiabatic_limit",
    "adiabatic_witness",
    "adiabatic_witness_bound",
    "adiabatic_error_curve",
    "adiabatic_bound_strong_damping",
    "adiabatic_bound_eq52",
    "imaginary_axis_mean",
    "group_mean_kernel_witness_check",
    "STEPS_PER_UNIT_GAMMA",
]

STEPS_PER_UNIT_GAMMA = 64
DEFAULT_MAX_STEPS = 2**18
LIMIT_TOL = 1e-12


@dataclass(frozen=True)
class AdiabaticInstance:
    A: np.ndarray
    decomposition: BlockDecomposition
    gen: TimeDepGenerator
    t1: float
    t2: float
    gamma_grid: tuple[float, ...] = (1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0)
    max_steps: int = DEFAULT_MAX_STEPS
    w_C: float = field(default=0.0, init=False)

    def __post_init__(self) -> None:
        a = as_matrix(self.A)
        dec = self.decomposition
        if a.shape[0] != dec.dim or self.gen.dim != dec.dim:
            raise InputError("A, decomposition and generator dimensions differ")
        leak = max(norm(dec.P_I @ a @ dec.P_C), norm(dec.P_C @ a @ dec.P_I))
        if leak > STRUCTURE_TOL:
            raise StructureError(f"A is not block diagonal: leakage {leak:.3e}")
        if not is_skew_hermitian(dec.block_I(a)):
            raise StructureError("A_I must be skew-Hermitian")
        w_c = weak_growth_bound(dec.block_C(a)) if dec.dim_C else -math.inf
        if w_c >= 0:
            raise StructureError(f"A_C must have negative growth bound, got {w_c:.6g}")
        if not self.gen.t1 <= self.t1 < self.t2 <= self.gen.t2:
            raise InputError("[t1, t2] must lie inside the generator domain")
        grid = tuple(float(g) for g in self.gamma_grid)
        if not grid or any(g <= 0 for g in grid) or any(b <= a_ for a_, b in zip(grid, grid[1:])):
            raise InputError("gamma_grid must be positive and strictly increasing")
        object.__setattr__(self, "A", a)
        object.__setattr__(self, "gamma_grid", grid)
        object.__setattr__(self, "w_C", w_c)

    @classmethod
    def create(
        cls,
        A: MatrixLike,
        dim_I: int,
        gen: TimeDepGenerator,
        gamma_grid: Sequence[float] | None = None,
        basis: MatrixLike | None = None,
    ) -> "AdiabaticInstance":
        a = as_matrix(A)
        dec = BlockDecomposition.from_basis(np.eye(a.shape[0]) if basis is None else basis, dim_I)
        kwargs = {} if gamma_grid is None else {"gamma_grid": tuple(gamma_grid)}
        return cls(a, dec, gen, gen.t1, gen.t2, **kwargs)

    @property
    def A_I(self) -> np.ndarray:
        return self.decomposition.block_I(self.A)

    @property
    def resolution_I(self) -> SpectralResolution:
        return spectral_resolution(self.A_I)

    @property
    def limit_generator(self) -> TimeDepGenerator:
        """u -> pinch of P_I K(u) P_I by the spectral resolution of A_I, on the X_I block."""
        resolution = self.resolution_I
        dec = self.decomposition
        return self.gen.map_linear(lambda c: pinch(dec.block_I(c), resolution)).with_domain(self.t1, self.t2)


def _check_time(inst: AdiabaticInstance, t: float) -> None:
    if not inst.t1 < t <= inst.t2:
        raise InputError(f"t={t} outside ({inst.t1}, {inst.t2}]")


def adiabatic_propagator(
    inst: AdiabaticInstance, gamma: float, t: float, steps: int | None = None
) -> np.ndarray:
    """F_gamma(t, t1) for the generator u -> gamma A + K(u).

    Default steps: ceil(64 gamma (t - t1)); constant K is exponentiated exactly.
    """
    if gamma <= 0:
        raise InputError("gamma must be positive")
    _check_time(inst, t)
    gen = inst.gen.plus_constant(inst.A, gamma)
    if gen.is_constant:
        return expm(gen(inst.t1), t - inst.t1)
    if steps is None:
        steps = max(1, math.ceil(STEPS_PER_UNIT_GAMMA * max(gamma, 1.0) * (t - inst.t1)))
    if steps > inst.max_steps:
        raise StepBudgetError(f"{steps} steps exceeds the budget {inst.max_steps}")
    return propagate(gen, t, inst.t1, steps)


def adiabatic_limit(inst: AdiabaticInstance, gamma: float, t: float) -> np.ndarray:
    """exp(gamma A_I (t - t1)) G(t, t1) embedded on X_I, zero on X_C."""
    if gamma <= 0:
        raise InputError("gamma must be positive")
    _check_time(inst, t)
    rotation = expm(inst.A_I, gamma * (t - inst.t1))
    g = propagate_refined(inst.limit_generator, t, inst.t1, tol=LIMIT_TOL)
    return inst.decomposition.embed_I(rotation @ g)


def _eigenbasis(resolution: SpectralResolution) -> tuple[np.ndarray, np.ndarray]:
    columns, values = [], []
    for lam, p in zip(resolution.eigenvalues, resolution.projections):
        w, v = np.linalg.eigh((p + dagger(p)) / 2)
        block = v[:, w > 0.5]
        columns.append(block)
        values.extend([lam] * block.shape[1])
    return np.hstack(columns), np.array(values)


def adiabatic_witness(inst: AdiabaticInstance, cluster_tol: float = 1e-8) -> np.ndarray:
    """L on X_I with [L, A_I] equal to the off-diagonal part of P_I K P_I (constant K).

    In A_I's eigenbasis L_jk = K_jk / (a_k - a_j); pairs with equal
    eigenvalues belong to the pinched part and are left out.
    """
    if not inst.gen.is_constant:
        raise InputError("the witness recipe is implemented for constant K")
    dec = inst.decomposition
    k_i = dec.block_I(inst.gen(inst.t1))
    resolution = inst.resolution_I
    basis, vals = _eigenbasis(resolution)
    off = dagger(basis) @ (k_i - pinch(k_i, resolution)) @ basis
    gaps = vals[None, :] - vals[:, None]
    same = np.abs(gaps) <= cluster_tol
    l_eig = np.where(same, 0.0, off / np.where(same, 1.0, gaps))
    return basis @ l_eig @ dagger(basis)


def adiabatic_witness_bound(inst: AdiabaticInstance, gamma: float, t: float, witness: np.ndarray | None = None) -> float:
    """Commutator-witness bound on ||F_gamma(t, t1) - limit|| for constant K with an exact witness.

    Without a contractive block: (2||L||/gamma) exp(2||L||/gamma).  With one,
    the decay and leakage terms for X_C are added and the witness term is
    weighted by the growth factors, evaluated on the compact set {t}.
    """
    _check_time(inst, t)
    l = adiabatic_witness(inst) if witness is None else as_matrix(witness)
    x = 2 * norm(l) / gamma
    witness_term = x * math.exp(x)
    dec = inst.decomposition
    if not dec.dim_C:
        return witness_term
    tau = t - inst.t1
    k = inst.gen(inst.t1)
    k_norm = norm(k)
    omega_pkp = weak_growth_bound(dec.block_I(k))
    omega = abs(max(weak_growth_bound(k), omega_pkp))
    leakage = 2 * math.exp(omega * tau) / (gamma * abs(inst.w_C)) * (tau * k_norm**2 + k_norm)
    decay = math.exp(omega * tau) * math.exp(gamma * inst.w_C * tau)
    return leakage + decay + math.exp(omega * tau) * math.exp(abs(omega_pkp) * tau) * witness_term


def adiabatic_error_curve(
    inst: AdiabaticInstance,
    t: float,
    strong_damping_params: "AdiabaticBoundParams | None" = None,
    mapper: Callable = map,
) -> ErrorCurve:
    """Rows (gamma, ||F_gamma(t, t1) - limit||, witness bound for constant K).

    When ``strong_damping_params`` is supplied the strong-damping estimate is stored as
    an extra.  ``mapper`` may fan rows out to a worker pool.
    """
    _check_time(inst, t)
    constant = inst.gen.is_constant
    witness = adiabatic_witness(inst) if constant else None

    def row(gamma: float) -> CurveRow:
        err = norm(adiabatic_propagator(inst, gamma, t) - adiabatic_limit(inst, gamma, t))
        bound = adiabatic_witness_bound(inst, gamma, t, witness) if constant else None
        extras = {"t": t}
        if strong_damping_params is not None and constant:
            extras["strong_damping_estimate"] = adiabatic_bound_strong_damping(inst.A, inst.gen(inst.t1), strong_damping_params, t - inst.t1, gamma)
        return CurveRow(gamma, err, bound, extras)

    return ErrorCurve.from_rows(list(mapper(row, inst.gamma_grid)), {"kind": "adiabatic", "t": t})


@dataclass(frozen=True)
class AdiabaticBoundParams:
    """Constants of the strong-damping estimate; c_AB is not derivable and must be supplied."""

    M_A: float = 1.0
    eta: float = 1.0
    p_poly: tuple[float, ...] = (1.0,)
    c_AB: float = 1.0
    self_adjoint_form: bool = False

    def __post_init__(self) -> None:
        if self.M_A < 1:
            raise InputError("M_A must be at least 1")
        if not self.self_adjoint_form and not self.eta > 0:
            raise InputError("eta must be positive")
        if not self.c_AB > 0:
            raise InputError("c_AB must be positive")
        if not self.p_poly:
            raise InputError("p needs at least one coefficient")

    def p(self, x: float) -> float:
        return float(np.polynomial.polynomial.polyval(x, self.p_poly))

    def laplace_p(self) -> float:
        """int_0^inf exp(-eta s) p(s) ds = sum_k c_k k! / eta^(k+1)."""
        return float(sum(c * math.factorial(k) / self.eta ** (k + 1) for k, c in enumerate(self.p_poly)))


def imaginary_axis_mean(A: MatrixLike, B: MatrixLike, tol: float = 1e-9) -> np.ndarray:
    """Sum of P B P over the eigenvalues of A on the imaginary axis."""
    resolution = spectral_resolution(A)
    b = as_matrix(B)
    out = np.zeros_like(b)
    for lam, p in zip(resolution.eigenvalues, resolution.projections):
        if abs(lam.real) <= tol:
            out = out + p @ b @ p
    return out


def _growth_difference_quotient(y: float, x: float, t: float) -> float:
    # (y e^{ty} - x e^{tx}) / (y - x), continued by its derivative e^{ty}(1 + ty) at y = x.
    if abs(y - x) <= 1e-12 * max(1.0, abs(y)):
        return math.exp(t * y) * (1 + t * y)
    return (y * math.exp(t * y) - x * math.exp(t * x)) / (y - x)


def adiabatic_bound_strong_damping(
    A: MatrixLike, B: MatrixLike, params: AdiabaticBoundParams, t: float, gamma: float
) -> float:
    """Three-term strong-damping estimate for ||exp((gamma A + B)t) - P_I exp(gamma A t) exp(mean(B) t)||.

    With ``self_adjoint_form`` (M_A = 1, p = 1, eta -> 0) the two-term version is used.
    """
    if gamma <= 0:
        raise InputError("gamma must be positive")
    b_norm = norm(as_matrix(B))
    mean_norm = norm(imaginary_axis_mean(A, B))
    if params.self_adjoint_form:
        return 2 * params.c_AB / gamma * _growth_difference_quotient(b_norm, mean_norm, t) + math.exp(-gamma * t)
    m = params.M_A
    first = params.c_AB * (m + 1) / gamma * _growth_difference_quotient(m * b_norm, mean_norm, t)
    second = m * math.exp(m * b_norm) / gamma * params.laplace_p()
    third = math.exp(-gamma * t) * params.p(gamma * t)
    return first + second + third


# Name kept for the published operation list.
adiabatic_bound_eq52 = adiabatic_bound_strong_damping


def group_mean_kernel_witness_check(L: MatrixLike, A: MatrixLike, t_check: float = 1.0) -> float:
    """||pinch([L, A])|| for skew-Hermitian A; commutators with A lie in the kernel of the group mean.

    ``t_check`` additionally verifies that the pinched operator commutes with exp(A t_check).
    """
    a = as_matrix(A)
    if not is_skew_hermitian(a):
        raise InputError("A must be skew-Hermitian within 1e-10")
    resolution = spectral_resolution(a)
    pinched = pinch(commutator(as_matrix(L), a), resolution)
    rotation = expm(a, t_check)
    return max(norm(pinched), norm(commutator(rotation, pinched)))
