"""Dense complex-matrix operator algebra.

Operators on a d-dimensional space are carried as ``(d, d)`` complex numpy
arrays.  The :class:`Operator` wrapper exists for the places where the norm
kind matters; every function accepts either form.  Superoperators act on
the Hilbert-Schmidt space, whose vector norm is the Frobenius norm of the
underlying d x d matrix.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
import scipy.linalg

from .errors import (
    ContractionError,
    DiagonalizabilityError,
    InputError,
    IsometryError,
    StructureError,
)

__all__ = [
    "NormKind",
    "Operator",
    "BlockDecomposition",
    "SplitContraction",
    "SpectralResolution",
    "as_matrix",
    "operator_norm",
    "norm",
    "dagger",
    "commutator",
    "is_unitary",
    "is_skew_hermitian",
    "validate_split_contraction",
    "spectral_resolution",
    "pinch",
    "weak_growth_bound",
    "build_superoperator",
    "vec",
    "unvec",
    "STRUCTURE_TOL",
    "RESOLUTION_TOL",
    "DEFAULT_CLUSTER_TOL",
    "MAX_SUPEROPERATOR_DIM",
]

STRUCTURE_TOL = 1e-10
RESOLUTION_TOL = 1e-9
DEFAULT_CLUSTER_TOL = 1e-8
MAX_SUPEROPERATOR_DIM = 16

# Eigenvector matrices worse conditioned than this are treated as defective.
_MAX_EIGVEC_COND = 1e8


class NormKind(str, enum.Enum):
    SPECTRAL = "spectral"
    FROBENIUS = "frobenius"


@dataclass(frozen=True)
class Operator:
    """A square complex matrix tagged with the norm used to measure it."""

    entries: np.ndarray
    norm_kind: NormKind = NormKind.SPECTRAL

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", _validated(self.entries))
        object.__setattr__(self, "norm_kind", NormKind(self.norm_kind))
        self.entries.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def norm(self) -> float:
        return operator_norm(self)

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)


MatrixLike = Union[Operator, np.ndarray, Sequence[Sequence[complex]]]


def _validated(m) -> np.ndarray:
    arr = np.array(m, dtype=complex)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise InputError(f"operator must be a square matrix, got shape {arr.shape}")
    if arr.shape[0] == 0:
        raise InputError("operator dimension must be positive")
    if not np.all(np.isfinite(arr)):
        raise InputError("operator has NaN or infinite entries")
    return arr


def as_matrix(m: MatrixLike) -> np.ndarray:
    """Return ``m`` as a validated complex square array (no copy for Operators)."""
    if isinstance(m, Operator):
        return m.entries
    return _validated(m)


def norm(m: np.ndarray, kind: NormKind | str = NormKind.SPECTRAL) -> float:
    """Norm of a raw array; no validation, for hot loops."""
    if NormKind(kind) is NormKind.FROBENIUS:
        return float(np.linalg.norm(m, "fro"))
    return float(np.linalg.norm(m, 2))


def operator_norm(m: MatrixLike, kind: NormKind | str | None = None) -> float:
    """Largest singular value (spectral) or root-sum-of-squares (frobenius).

    ``kind`` overrides the tag carried by an :class:`Operator`; plain arrays
    default to the spectral norm.
    """
    if kind is None:
        kind = m.norm_kind if isinstance(m, Operator) else NormKind.SPECTRAL
    return norm(as_matrix(m), kind)


def dagger(m: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(m, -1, -2))


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


def is_unitary(u: MatrixLike, tol: float = STRUCTURE_TOL) -> bool:
    u = as_matrix(u)
    return norm(dagger(u) @ u - np.eye(u.shape[0])) <= tol


def is_skew_hermitian(a: MatrixLike, tol: float = STRUCTURE_TOL) -> bool:
    a = as_matrix(a)
    return norm(a + dagger(a)) <= tol


@dataclass(frozen=True)
class BlockDecomposition:
    """Orthogonal splitting of the space into an isometric and a contractive part.

    The first ``dim_I`` columns of ``basis`` span X_I, the rest span X_C.
    """

    dim_I: int
    dim_C: int
    basis: np.ndarray
    P_I: np.ndarray = field(repr=False)
    P_C: np.ndarray = field(repr=False)

    @classmethod
    def from_basis(cls, basis: MatrixLike, dim_I: int) -> "BlockDecomposition":
        v = as_matrix(basis)
        d = v.shape[0]
        if not 1 <= dim_I <= d:
            raise InputError(f"dim_I must lie in [1, {d}], got {dim_I}")
        if not is_unitary(v):
            raise InputError("change-of-basis matrix is not unitary")
        vi, vc = v[:, :dim_I], v[:, dim_I:]
        return cls(dim_I, d - dim_I, v, vi @ dagger(vi), vc @ dagger(vc))

    @classmethod
    def standard(cls, dim: int, dim_I: int) -> "BlockDecomposition":
        """Split along the first ``dim_I`` canonical basis vectors."""
        return cls.from_basis(np.eye(dim), dim_I)

    @classmethod
    def from_projection(cls, p: MatrixLike) -> "BlockDecomposition":
        """Build from an orthogonal projection onto X_I; oblique ones are rejected."""
        p = as_matrix(p)
        if norm(p - dagger(p)) > STRUCTURE_TOL or norm(p @ p - p) > STRUCTURE_TOL:
            raise InputError("only orthogonal (Hermitian, idempotent) projections are supported")
        w, v = np.linalg.eigh(p)
        order = np.argsort(-w)
        rank = int(np.sum(w > 0.5))
        return cls.from_basis(v[:, order], rank)

    @property
    def dim(self) -> int:
        return self.dim_I + self.dim_C

    @property
    def V_I(self) -> np.ndarray:
        return self.basis[:, : self.dim_I]

    @property
    def V_C(self) -> np.ndarray:
        return self.basis[:, self.dim_I :]

    def block_I(self, m: np.ndarray) -> np.ndarray:
        """Compression of ``m`` to X_I in the decomposition basis."""
        return dagger(self.V_I) @ m @ self.V_I

    def block_C(self, m: np.ndarray) -> np.ndarray:
        return dagger(self.V_C) @ m @ self.V_C

    def embed_I(self, x: np.ndarray) -> np.ndarray:
        """Embed a ``dim_I`` square block as an operator vanishing on X_C."""
        return self.V_I @ x @ dagger(self.V_I)

    def embed_C(self, x: np.ndarray) -> np.ndarray:
        return self.V_C @ x @ dagger(self.V_C)


@dataclass(frozen=True)
class SplitContraction:
    """T = T_I (unitary on X_I) plus T_C (strict contraction on X_C)."""

    decomposition: BlockDecomposition
    T: np.ndarray
    T_I: np.ndarray
    T_C: np.ndarray
    contraction_norm: float

    @property
    def tau_C(self) -> float:
        c = self.contraction_norm
        return (1.0 + c) / (1.0 - c)

    def isometric_inverse_power(self, n: int) -> np.ndarray:
        """(T_I^{-1} on X_I, identity on X_C) to the power n, full size."""
        dec = self.decomposition
        inv_block = np.linalg.matrix_power(dagger(self.T_I), n)
        return dec.embed_I(inv_block) + dec.P_C

    def isometric_power(self, n: int) -> np.ndarray:
        """T_I^n on X_I embedded, zero on X_C; negative n uses the inverse."""
        base = self.T_I if n >= 0 else dagger(self.T_I)
        return self.decomposition.embed_I(np.linalg.matrix_power(base, abs(n)))


def validate_split_contraction(
    T: MatrixLike, decomposition: BlockDecomposition, margin: float = 1e-6
) -> SplitContraction:
    """Check that ``T`` splits as unitary plus strict contraction and extract the blocks."""
    t = as_matrix(T)
    dec = decomposition
    if t.shape[0] != dec.dim:
        raise InputError(f"operator dimension {t.shape[0]} does not match decomposition {dec.dim}")
    leak = max(norm(dec.P_I @ t @ dec.P_C), norm(dec.P_C @ t @ dec.P_I))
    if leak > STRUCTURE_TOL:
        raise StructureError(f"off-diagonal block leakage {leak:.3e} exceeds {STRUCTURE_TOL}")
    t_i = dec.block_I(t)
    defect = norm(dagger(t_i) @ t_i - np.eye(dec.dim_I))
    if defect > STRUCTURE_TOL:
        raise IsometryError(f"isometric block deviates from unitary by {defect:.3e}")
    if dec.dim_C:
        t_c = dec.block_C(t)
        c = norm(t_c)
    else:
        t_c = np.zeros((0, 0), dtype=complex)
        c = 0.0
    if c >= 1.0 - margin:
        raise ContractionError(f"contractive block has norm {c:.6g} >= 1 - {margin}")
    return SplitContraction(dec, t, t_i, t_c, c)


@dataclass(frozen=True)
class SpectralResolution:
    eigenvalues: tuple[complex, ...]
    projections: tuple[np.ndarray, ...]
    cluster_tol: float

    @property
    def ranks(self) -> tuple[int, ...]:
        return tuple(int(round(np.trace(p).real)) for p in self.projections)

    @property
    def dim(self) -> int:
        return self.projections[0].shape[0]


def _cluster(values: np.ndarray, tol: float) -> list[list[int]]:
    order = sorted(range(len(values)), key=lambda i: (round(values[i].real, 6), round(values[i].imag, 6)))
    clusters: list[list[int]] = []
    centers: list[complex] = []
    for i in order:
        for c, center in enumerate(centers):
            if abs(values[i] - center) <= tol:
                clusters[c].append(i)
                break
        else:
            clusters.append([i])
            centers.append(values[i])
    return clusters


def spectral_resolution(M: MatrixLike, cluster_tol: float = DEFAULT_CLUSTER_TOL) -> SpectralResolution:
    """Eigenvalues clustered within ``cluster_tol`` and their spectral projections.

    Normal matrices go through the complex Schur form so the projections are
    orthogonal; other matrices use the eigenvector basis and are rejected when
    that basis is numerically singular.
    """
    m = as_matrix(M)
    d = m.shape[0]
    scale = max(1.0, norm(m))
    if norm(m @ dagger(m) - dagger(m) @ m) <= 1e-10 * scale**2:
        schur, q = scipy.linalg.schur(m, output="complex")
        vals = np.diag(schur)
        groups = _cluster(vals, cluster_tol)
        projections = [q[:, g] @ dagger(q[:, g]) for g in groups]
    else:
        vals, v = np.linalg.eig(m)
        if np.linalg.cond(v) > _MAX_EIGVEC_COND:
            raise DiagonalizabilityError("matrix is defective: eigenvector basis is singular")
        vinv = np.linalg.inv(v)
        groups = _cluster(vals, cluster_tol)
        projections = [v[:, g] @ vinv[g, :] for g in groups]
    eigenvalues = [complex(np.mean(vals[g])) for g in groups]
    for lam, p in zip(eigenvalues, projections):
        if norm(m @ p - lam * p) > 1e-6 * scale:
            raise DiagonalizabilityError(f"eigenvalue {lam:.6g} has a nontrivial Jordan block")
    total = sum(projections)
    if norm(total - np.eye(d)) > RESOLUTION_TOL * max(1.0, d):
        raise DiagonalizabilityError("spectral projections do not resolve the identity")
    return SpectralResolution(tuple(eigenvalues), tuple(projections), cluster_tol)


def pinch(K: MatrixLike, resolution: SpectralResolution) -> np.ndarray:
    """Sum of P K P over the projections of ``resolution``."""
    k = as_matrix(K)
    if k.shape[0] != resolution.dim:
        raise InputError(f"dimension mismatch: {k.shape[0]} vs resolution {resolution.dim}")
    return sum(p @ k @ p for p in resolution.projections)


def weak_growth_bound(
    K: MatrixLike,
    method: str = "closed_form",
    sample_grid: Sequence[float] | np.ndarray | None = None,
) -> float:
    """Least w with ||exp(Kv)|| <= exp(wv) for v >= 0.

    ``closed_form`` is the numerical abscissa (top eigenvalue of the
    Hermitian part).  ``sampled`` takes the largest ln||exp(Kv)||/v over a
    grid of positive v and can only under-estimate the closed form.
    """
    k = as_matrix(K)
    if method == "closed_form":
        return float(np.linalg.eigvalsh((k + dagger(k)) / 2).max())
    if method == "sampled":
        grid = np.logspace(-4, 1, 64) if sample_grid is None else np.asarray(sample_grid, float)
        if grid.size == 0:
            raise InputError("sample grid is empty")
        if np.any(grid <= 0):
            raise InputError("sample grid must contain positive values only")
        return max(np.log(norm(scipy.linalg.expm(k * v))) / v for v in grid)
    raise InputError(f"unknown weak growth bound method {method!r}")


def build_superoperator(
    kind: str, X: MatrixLike, max_dim: int = MAX_SUPEROPERATOR_DIM
) -> Operator:
    """Superoperator on the Hilbert-Schmidt space with column-stacking vec.

    vec(A rho B) = (B^T kron A) vec(rho), so left multiplication is
    ``I kron X`` and right multiplication is ``X^T kron I``.  The result is
    tagged with the spectral norm of the d^2 x d^2 matrix, which is the
    operator norm induced by the Frobenius norm on d x d matrices.
    """
    x = as_matrix(X)
    d = x.shape[0]
    if d * d > max_dim:
        raise InputError(f"superoperator dimension {d * d} exceeds cap {max_dim}")
    eye = np.eye(d)
    left = np.kron(eye, x)
    right = np.kron(x.T, eye)
    table = {
        "left_mul": lambda: left,
        "right_mul": lambda: right,
        "commutator": lambda: left - right,
        "anticommutator": lambda: left + right,
    }
    if kind not in table:
        raise InputError(f"unknown superoperator kind {kind!r}")
    return Operator(table[kind](), NormKind.SPECTRAL)


def vec(rho: np.ndarray) -> np.ndarray:
    """Column-stacking vectorization."""
    return np.asarray(rho).reshape(-1, order="F")


def unvec(v: np.ndarray) -> np.ndarray:
    d = int(round(np.sqrt(v.size)))
    return np.asarray(v).reshape(d, d, order="F")
