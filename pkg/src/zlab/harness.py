"""Experiment configuration, canned instances, CSV emission and dispatch.

Configs are JSON documents validated by :class:`ExperimentConfig`.  Complex
matrices are nested arrays of ``[re, im]`` pairs, row-major.  Randomized
instances draw from ``numpy.random.default_rng(SeedSequence([seed, index]))``
so every (seed, index) pair reproduces one instance exactly; the draw order
inside each stream is documented on :func:`random_instance`.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Literal, Mapping, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .adiabatic import AdiabaticInstance, adiabatic_error_curve
from .curves import CurveRow, ErrorCurve, fit_rate
from .ergodic import Schedule, ergodic_mean_discrete, partial_ergodic_means, psi, schedule_diagnostics
from .errors import ConfigError, InputError, InvariantError, LimitUnavailableError, ZlabError
from .linops import BlockDecomposition, as_matrix, build_superoperator, dagger, norm, pinch, spectral_resolution
from .propagate import TimeDepGenerator
from .zeno import ZenoInstance, decoupling_error_curve, single_kick_experiment, zeno_error_curve

__all__ = [
    "ExperimentConfig",
    "PRESETS",
    "preset",
    "load_config",
    "read_config_data",
    "random_instance",
    "stream_rng",
    "complex_gaussian",
    "haar_unitary",
    "random_poly_coefficients",
    "run_experiment",
    "compute_curve",
    "RunOutcome",
    "curve_to_csv",
    "csv_body",
    "assertion_holds",
    "worker_count",
    "fit_rate",
]

KINDS = ("zeno", "adiabatic", "ergodic", "bounds", "selftest")
PRESETS = (
    "zeno_projective",
    "zeno_contraction",
    "unitary_kick",
    "cptp_kick",
    "adiabatic_unitary",
    "adiabatic_block",
)
BOUND_SLACK = 1e-8
DEFAULT_WORKERS = 4
CSV_DIGITS = 17

ComplexEntries = list[list[tuple[float, float]]]


def encode_matrix(m: Any) -> ComplexEntries:
    """Matrix -> nested [re, im] pairs."""
    a = as_matrix(m)
    return [[(float(z.real), float(z.imag)) for z in row] for row in a]


def decode_matrix(entries: ComplexEntries) -> np.ndarray:
    a = np.asarray(entries, dtype=float)
    if a.ndim != 3 or a.shape[2] != 2:
        raise ValueError("matrix must be a nested array of [re, im] pairs")
    return a[..., 0] + 1j * a[..., 1]


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GeneratorConfig(_Model):
    """K(u) on [t1, t2]: one coefficient for constant, ascending powers for poly,
    k = -m..m for trig (period required), samples at ``times`` for tabulated."""

    rep: Literal["constant", "poly", "trig", "tabulated"] = "constant"
    coefficients: list[ComplexEntries] = Field(min_length=1)
    t1: float = 0.0
    t2: float = 1.0
    period: Optional[float] = None
    times: Optional[list[float]] = None

    @model_validator(mode="after")
    def _check(self) -> "GeneratorConfig":
        shapes = {decode_matrix(c).shape for c in self.coefficients}
        if len(shapes) != 1 or len({*next(iter(shapes))}) != 1:
            raise ValueError("coefficients must be square matrices of one size")
        if self.rep == "constant" and len(self.coefficients) != 1:
            raise ValueError("constant generator takes exactly one coefficient")
        if self.rep == "trig" and (self.period is None or len(self.coefficients) % 2 == 0):
            raise ValueError("trig generator needs a period and an odd number of coefficients")
        if self.rep == "tabulated":
            if self.times is None or len(self.times) != len(self.coefficients):
                raise ValueError("tabulated generator needs one time per sample")
        elif not self.t1 < self.t2:
            raise ValueError("need t1 < t2")
        return self

    @property
    def dim(self) -> int:
        return len(self.coefficients[0])

    def build(self) -> TimeDepGenerator:
        mats = [decode_matrix(c) for c in self.coefficients]
        if self.rep == "constant":
            return TimeDepGenerator.constant(mats[0], self.t1, self.t2)
        if self.rep == "poly":
            return TimeDepGenerator.poly(mats, self.t1, self.t2)
        if self.rep == "trig":
            return TimeDepGenerator.trig(mats, self.period, self.t1, self.t2)
        return TimeDepGenerator.tabulated(self.times, mats)


class ScheduleConfig(_Model):
    kind: Literal["uniform", "linear_ramp", "custom"] = "uniform"
    rows: Optional[dict[int, list[float]]] = None

    @field_validator("rows")
    @classmethod
    def _rows(cls, rows: Optional[dict[int, list[float]]]) -> Optional[dict[int, list[float]]]:
        if rows is not None:
            try:
                Schedule.custom(rows)
            except InputError as exc:
                raise ValueError(str(exc)) from None
        return rows

    @model_validator(mode="after")
    def _check(self) -> "ScheduleConfig":
        if (self.kind == "custom") != (self.rows is not None):
            raise ValueError("rows are required for, and only allowed with, kind 'custom'")
        return self

    def build(self) -> Schedule:
        if self.kind == "custom":
            return Schedule.custom(self.rows)
        return Schedule(self.kind)


class RandomConfig(_Model):
    """Select stream ``index`` of the seeded generator; see :func:`random_instance`."""

    index: int = Field(0, ge=0)
    contraction_norm: float = Field(0.6, gt=0, lt=1)
    max_degree: int = Field(2, ge=0, le=4)


class InstanceConfig(_Model):
    """``operator`` is T (zeno, bounds), U (ergodic, single kick) or A (adiabatic)."""

    dimension: int = Field(ge=1, le=16)
    dim_I: Optional[int] = Field(None, ge=1)
    operator: Optional[ComplexEntries] = None
    basis: Optional[ComplexEntries] = None
    generator: Optional[GeneratorConfig] = None
    schedule: ScheduleConfig = ScheduleConfig()
    protocol: Literal["product", "single_kick"] = "product"
    kernel_form: bool = False
    random: Optional[RandomConfig] = None

    @model_validator(mode="after")
    def _check(self) -> "InstanceConfig":
        d = self.dimension
        if self.dim_I is not None and self.dim_I > d:
            raise ValueError(f"dim_I={self.dim_I} exceeds dimension={d}")
        if self.random is None and (self.operator is None or self.generator is None):
            raise ValueError("operator and generator are required unless random is set")
        for name in ("operator", "basis"):
            entries = getattr(self, name)
            if entries is not None and decode_matrix(entries).shape != (d, d):
                raise ValueError(f"{name} must be {d}x{d}")
        if self.generator is not None and self.generator.dim != d:
            raise ValueError(f"generator coefficients must be {d}x{d}")
        return self


class GridConfig(_Model):
    n: list[int] = Field(default_factory=lambda: [2**k for k in range(3, 10)], min_length=1)
    gamma: list[float] = Field(default_factory=lambda: [2.0**k for k in range(7)], min_length=1)
    s: Optional[list[float]] = None
    t: float = 1.0

    @field_validator("n")
    @classmethod
    def _n(cls, v: list[int]) -> list[int]:
        if any(x < 1 for x in v):
            raise ValueError("n values must be positive")
        return v

    @field_validator("gamma")
    @classmethod
    def _gamma(cls, v: list[float]) -> list[float]:
        if any(x <= 0 for x in v):
            raise ValueError("gamma values must be positive")
        return v


class Tolerances(_Model):
    bound_slack: float = Field(BOUND_SLACK, ge=0)
    mean_tol: float = Field(1e-6, gt=0)


class ExperimentConfig(_Model):
    kind: Literal["zeno", "adiabatic", "ergodic", "bounds", "selftest"]
    name: Optional[str] = None
    instance: Optional[InstanceConfig] = None
    grid: GridConfig = GridConfig()
    tolerances: Tolerances = Tolerances()
    output: Optional[str] = None
    seed: int = Field(0, ge=0, lt=2**64)

    @model_validator(mode="after")
    def _check(self) -> "ExperimentConfig":
        if self.kind != "selftest" and self.instance is None:
            raise ValueError(f"kind {self.kind!r} needs an instance")
        inst = self.instance
        if inst is not None and inst.protocol == "single_kick" and self.kind != "zeno":
            raise ValueError("protocol 'single_kick' is only available for kind 'zeno'")
        if inst is not None and inst.kernel_form and self.kind != "ergodic":
            raise ValueError("kernel_form is only available for kind 'ergodic'")
        if inst is not None and inst.random is None and self.kind in ("zeno", "bounds", "adiabatic"):
            if inst.protocol == "product" and inst.dim_I is None:
                raise ValueError("dim_I is required for block experiments")
        return self


def _format_validation(exc: ValidationError) -> str:
    parts = []
    for err in exc.errors():
        loc = ".".join(str(x) for x in err["loc"]) or "<root>"
        parts.append(f"{loc}: {err['msg']}")
    return "; ".join(parts)


def parse_config(data: Mapping[str, Any]) -> ExperimentConfig:
    """Validate a mapping; schema violations raise ConfigError naming the field."""
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"invalid config: {_format_validation(exc)}") from None


def read_config_data(path: str | os.PathLike) -> dict[str, Any]:
    """Raw JSON object from ``path``; unreadable or malformed files raise ConfigError."""
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return data


def load_config(path: str | os.PathLike) -> ExperimentConfig:
    return parse_config(read_config_data(path))


# presets ---------------------------------------------------------------------

_SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)


def _constant(K: Any) -> dict:
    return {"rep": "constant", "coefficients": [encode_matrix(K)]}


def _preset_data(name: str) -> dict:
    powers_to_512 = [2**k for k in range(3, 10)]
    gammas = [2.0**k for k in range(7)]
    if name in ("zeno_projective", "zeno_contraction"):
        t = np.diag([1.0, 0.0]) if name == "zeno_projective" else np.diag([1.0, 0.5])
        return {
            "kind": "zeno",
            "instance": {"dimension": 2, "dim_I": 1, "operator": encode_matrix(t), "generator": _constant(-1j * _SIGMA_X)},
            "grid": {"n": powers_to_512, "s": [1.0]},
        }
    if name == "unitary_kick":
        h = np.array([[1, 2], [2, 4]], dtype=complex)
        return {
            "kind": "zeno",
            "instance": {
                "dimension": 2,
                "operator": encode_matrix(np.diag([1, 1j])),
                "generator": _constant(-1j * h),
                "protocol": "single_kick",
            },
            "grid": {"n": powers_to_512, "t": 1.0},
        }
    if name == "cptp_kick":
        # Column-stacked vec basis: indices 0 and 3 are the populations.
        channel = np.diag([1.0, 0.7, 0.7, 1.0])
        liouvillian = -1j * np.asarray(build_superoperator("commutator", _SIGMA_X))
        basis = np.eye(4)[:, [0, 3, 1, 2]]
        return {
            "kind": "zeno",
            "instance": {
                "dimension": 4,
                "dim_I": 2,
                "operator": encode_matrix(channel),
                "basis": encode_matrix(basis),
                "generator": _constant(liouvillian),
            },
            "grid": {"n": [2**k for k in range(3, 11)], "s": [1.0]},
        }
    if name == "adiabatic_unitary":
        return {
            "kind": "adiabatic",
            "instance": {
                "dimension": 2,
                "dim_I": 2,
                "operator": encode_matrix(np.diag([1j, -1j])),
                "generator": _constant(-1j * _SIGMA_X),
            },
            "grid": {"gamma": gammas, "t": 1.0},
        }
    if name == "adiabatic_block":
        return {
            "kind": "adiabatic",
            "instance": {
                "dimension": 3,
                "dim_I": 2,
                "operator": encode_matrix(np.diag([1j, -1j, -1.0])),
                "generator": _constant(-1j * (np.ones((3, 3)) - np.eye(3))),
            },
            "grid": {"gamma": gammas, "t": 1.0},
        }
    raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")


def preset(name: str) -> ExperimentConfig:
    """Fully specified config for a named canned scenario."""
    data = _preset_data(name)
    data["name"] = name
    return parse_config(data)


def preset_data(name: str) -> dict:
    """Preset as a JSON-ready mapping (for merging with user overrides)."""
    return preset(name).model_dump(mode="json")


# random instances --------------------------------------------------------------


def stream_rng(seed: int, index: int) -> np.random.Generator:
    """Independent generator for stream ``index`` under ``seed``."""
    return np.random.default_rng(np.random.SeedSequence([seed, index]))


def complex_gaussian(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2)


def haar_unitary(rng: np.random.Generator, d: int) -> np.ndarray:
    q, r = np.linalg.qr(complex_gaussian(rng, (d, d)))
    diag = np.diag(r)
    return q * (diag / np.abs(diag))


def random_poly_coefficients(rng: np.random.Generator, d: int, max_degree: int) -> list[np.ndarray]:
    degree = int(rng.integers(0, max_degree + 1))
    coeffs = []
    for _ in range(degree + 1):
        c = complex_gaussian(rng, (d, d))
        coeffs.append(c * rng.uniform(0.5, 1.0) / norm(c))
    return coeffs


def random_instance(kind: str, seed: int, index: int, dimension: int = 4, dim_I: int = 2, options: RandomConfig | None = None) -> dict:
    """Instance section for stream (seed, index).  Draw order per stream:

    zeno/bounds: unitary T_I (dim_I), T_C gaussian, T_C scale factor, poly degree, coefficients.
    ergodic: eigenphase gaps, eigenbasis unitary, poly degree, coefficients.
    adiabatic: A_I frequencies, A_C decay rates, constant K.
    Each coefficient is a normalized gaussian times a uniform factor in [0.5, 1].
    """
    opts = options or RandomConfig(index=index)
    rng = stream_rng(seed, index)
    d = dimension
    if not 1 <= dim_I <= d:
        raise ConfigError(f"dim_I={dim_I} outside [1, {d}]")
    inst: dict[str, Any] = {"dimension": d, "dim_I": dim_I}
    if kind in ("zeno", "bounds"):
        t = np.zeros((d, d), dtype=complex)
        t[:dim_I, :dim_I] = haar_unitary(rng, dim_I)
        if d > dim_I:
            c = complex_gaussian(rng, (d - dim_I, d - dim_I))
            t[dim_I:, dim_I:] = c * (opts.contraction_norm * rng.uniform(0.1, 1.0) / norm(c))
        gen = random_poly_coefficients(rng, d, opts.max_degree)
        inst.update(operator=encode_matrix(t), generator={"rep": "poly", "coefficients": [encode_matrix(c) for c in gen]})
    elif kind == "ergodic":
        # Distinct eigenphases separated by at least 0.2 rad.
        gaps = 0.2 + rng.uniform(0.0, 1.0, d)
        phases = np.cumsum(gaps) * (2 * math.pi - 0.2) / gaps.sum()
        v = haar_unitary(rng, d)
        u = v @ np.diag(np.exp(1j * phases)) @ dagger(v)
        gen = random_poly_coefficients(rng, d, opts.max_degree)
        inst.update(operator=encode_matrix(u), generator={"rep": "poly", "coefficients": [encode_matrix(c) for c in gen]})
        inst.pop("dim_I")
    elif kind == "adiabatic":
        freqs = np.cumsum(0.5 + rng.uniform(0.0, 1.0, dim_I)) - 1.0
        decay = rng.uniform(0.5, 2.0, d - dim_I)
        a = np.diag(np.concatenate([1j * freqs, -decay]))
        k = complex_gaussian(rng, (d, d))
        k = k * rng.uniform(0.5, 1.0) / norm(k)
        inst.update(operator=encode_matrix(a), generator=_constant(k))
    else:
        raise ConfigError(f"kind {kind!r} has no random instances")
    inst["random"] = opts.model_dump()
    return inst


def resolve_instance(config: ExperimentConfig) -> InstanceConfig:
    inst = config.instance
    if inst is None:
        raise ConfigError("config has no instance")
    if inst.random is None:
        return inst
    data = inst.model_dump(mode="json")
    dim_I = inst.dim_I if inst.dim_I is not None else max(1, inst.dimension // 2)
    data.update(random_instance(config.kind, config.seed, inst.random.index, inst.dimension, dim_I, inst.random))
    try:
        return InstanceConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"invalid random instance: {_format_validation(exc)}") from None


# dispatch -------------------------------------------------------------------------


def worker_count() -> int:
    """Worker pool size: ZLAB_THREADS when set, else min(4, cpu count)."""
    raw = os.environ.get("ZLAB_THREADS")
    if raw is None or raw == "":
        return max(1, min(DEFAULT_WORKERS, os.cpu_count() or 1))
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"ZLAB_THREADS must be a positive integer, got {raw!r}") from None
    if value < 1:
        raise ConfigError(f"ZLAB_THREADS must be a positive integer, got {raw!r}")
    return value


def _s_grid(config: ExperimentConfig, gen: TimeDepGenerator) -> list[float]:
    return config.grid.s if config.grid.s is not None else [gen.t2]


def _decomposition(inst: InstanceConfig) -> BlockDecomposition:
    basis = np.eye(inst.dimension) if inst.basis is None else decode_matrix(inst.basis)
    return BlockDecomposition.from_basis(basis, inst.dim_I)


def _zeno_instance(config: ExperimentConfig, inst: InstanceConfig) -> ZenoInstance:
    gen = inst.generator.build()
    return ZenoInstance.create(
        decode_matrix(inst.operator), _decomposition(inst), gen, inst.schedule.build(), _s_grid(config, gen)
    )


def _run_zeno(config: ExperimentConfig, inst: InstanceConfig, mapper: Callable) -> ErrorCurve:
    if inst.protocol == "single_kick":
        gen = inst.generator.build()
        if not gen.is_constant:
            raise ConfigError("instance.generator: the single-kick protocol needs a constant generator")
        return single_kick_experiment(decode_matrix(inst.operator), gen(gen.t1), config.grid.t, config.grid.n)
    return zeno_error_curve(_zeno_instance(config, inst), config.grid.n, mapper)


def _run_bounds(config: ExperimentConfig, inst: InstanceConfig, mapper: Callable) -> ErrorCurve:
    return decoupling_error_curve(_zeno_instance(config, inst), config.grid.n, mapper)


def _run_adiabatic(config: ExperimentConfig, inst: InstanceConfig, mapper: Callable) -> ErrorCurve:
    gen = inst.generator.build()
    basis = None if inst.basis is None else decode_matrix(inst.basis)
    ad = AdiabaticInstance.create(decode_matrix(inst.operator), inst.dim_I, gen, config.grid.gamma, basis)
    return adiabatic_error_curve(ad, gen.t1 + config.grid.t, mapper=mapper)


def _ergodic_reference(gen: TimeDepGenerator, u: np.ndarray, schedule: Schedule, s_grid: list[float], tol: float):
    if schedule.is_uniform and gen.rep != "tabulated":
        resolution = spectral_resolution(u)
        return [pinch(gen(s), resolution) for s in s_grid]
    result = ergodic_mean_discrete(gen, u, schedule, s_grid, tol=tol)
    if not result.converged:
        raise LimitUnavailableError("discrete ergodic mean did not converge; no reference available")
    return list(result.value)


def _run_ergodic(config: ExperimentConfig, inst: InstanceConfig, mapper: Callable) -> ErrorCurve:
    """Rows (n, sup_s distance of the full partial mean to the ergodic mean).

    With ``kernel_form`` the generator L is replaced by L - U^{-1} L U; the
    measured column is then the sup over k and s of the partial means and the
    bound column is psi(s - t1) S_alpha(n) ||L||_{C^{0,1}}.
    """
    u = decode_matrix(inst.operator)
    gen = inst.generator.build()
    schedule = inst.schedule.build()
    s_grid = config.grid.s if config.grid.s is not None else list(np.linspace(gen.t1, gen.t2, 9))
    grid = sorted(set(config.grid.n))
    if inst.kernel_form:
        if gen.rep == "tabulated":
            raise ConfigError("instance.generator: kernel_form needs a poly, trig or constant generator")
        lip = gen.c01_norm()
        kernel = gen.map_linear(lambda c: c - dagger(u) @ c @ u)

        def kernel_row(n: int) -> CurveRow:
            sup = [float(np.max(np.linalg.norm(partial_ergodic_means(kernel, u, schedule, n, s), 2, axis=(1, 2)))) for s in s_grid]
            worst = int(np.argmax(sup))
            bound = max(psi(s - gen.t1) for s in s_grid) * schedule_diagnostics(schedule, n).S_alpha * lip
            return CurveRow(float(n), sup[worst], bound, {"s": float(s_grid[worst])})

        return ErrorCurve.from_rows(list(mapper(kernel_row, grid)), {"kind": "ergodic"})
    reference = _ergodic_reference(gen, u, schedule, s_grid, config.tolerances.mean_tol)

    def row(n: int) -> CurveRow:
        errs = [norm(partial_ergodic_means(gen, u, schedule, n, s)[-1] - ref) for s, ref in zip(s_grid, reference)]
        worst = int(np.argmax(errs))
        return CurveRow(float(n), errs[worst], None, {"s": float(s_grid[worst])})

    return ErrorCurve.from_rows(list(mapper(row, grid)), {"kind": "ergodic"})


def _run_selftest(config: ExperimentConfig, inst: Any, mapper: Callable) -> ErrorCurve:
    from .acceptance import run_all

    rows = [CurveRow(float(r.number), 0.0 if r.passed else 1.0, 0.0) for r in run_all()]
    return ErrorCurve.from_rows(rows, {"kind": "selftest"})


_RUNNERS = {
    "zeno": _run_zeno,
    "bounds": _run_bounds,
    "adiabatic": _run_adiabatic,
    "ergodic": _run_ergodic,
    "selftest": _run_selftest,
}


# CSV -----------------------------------------------------------------------------


def _fmt(x: float | None) -> str:
    return "" if x is None else format(float(x), f".{CSV_DIGITS}g")


def _extra_columns(curve: ErrorCurve) -> list[str]:
    names: set[str] = set()
    for r in curve.rows:
        names.update(r.extras)
    return sorted(names)


def assertion_holds(curve: ErrorCurve, slack: float = BOUND_SLACK) -> bool | None:
    """bound >= measured on every row; paired ``x_bound``/``x_measured`` extras
    are checked against each other and lone ``x_bound`` extras against measured.
    None when the curve carries no bound at all."""
    checked = False
    for r in curve.rows:
        pairs = []
        if r.bound is not None:
            pairs.append((r.measured, r.bound))
        for key, value in r.extras.items():
            if key.endswith("_bound"):
                partner = key[: -len("_bound")] + "_measured"
                pairs.append((r.extras.get(partner, r.measured), value))
        for measured, bound in pairs:
            checked = True
            if not measured <= bound + slack:
                return False
    return True if checked else None


def csv_body(curve: ErrorCurve) -> list[str]:
    """Header, data rows and the assertion line; everything but the timestamp."""
    extras = _extra_columns(curve)
    lines = [",".join(["control", "measured", "bound", *extras])]
    for r in curve.rows:
        cells = [_fmt(r.control), _fmt(r.measured), _fmt(r.bound)] + [_fmt(r.extras.get(k)) for k in extras]
        lines.append(",".join(cells))
    verdict = assertion_holds(curve)
    lines.append(f"# assertion bound>=measured: {'n/a' if verdict is None else str(verdict).lower()}")
    return lines


def curve_to_csv(curve: ErrorCurve, config: ExperimentConfig, timestamp: str | None = None) -> str:
    stamp = timestamp or datetime.now(timezone.utc).isoformat(timespec="seconds")
    echo = json.dumps(config.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    lines = [f"# generated {stamp}", f"# config {echo}", *csv_body(curve)]
    return "\n".join(lines) + "\n"


# entry point -------------------------------------------------------------------------


def compute_curve(config: ExperimentConfig, workers: int | None = None) -> ErrorCurve:
    """Dispatch ``config`` to its module and return the curve without writing or asserting."""
    inst = resolve_instance(config) if config.kind != "selftest" else None
    pool_size = worker_count() if workers is None else max(1, int(workers))
    if pool_size == 1:
        curve = _RUNNERS[config.kind](config, inst, map)
    else:
        with ThreadPoolExecutor(max_workers=pool_size) as pool:
            curve = _RUNNERS[config.kind](config, inst, pool.map)
    return ErrorCurve(curve.rows, {**curve.meta, "config": config.model_dump(mode="json")})


@dataclass(frozen=True)
class RunOutcome:
    curve: ErrorCurve
    csv_text: str
    path: Path | None


def run_experiment(config: ExperimentConfig, out: str | os.PathLike | None = None, workers: int | None = None) -> RunOutcome:
    """Dispatch ``config`` to its module, write the CSV and return the curve.

    Grid points fan out over a thread pool of ``workers`` (default from
    ZLAB_THREADS); rows are sorted by control so output order is fixed.
    Raises InvariantError after writing when a bound-bearing run is not dominated.
    """
    curve = compute_curve(config, workers)
    text = curve_to_csv(curve, config)
    target = out if out is not None else config.output
    path = None
    if target is not None:
        path = Path(target)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    if assertion_holds(curve, config.tolerances.bound_slack) is False:
        raise InvariantError(f"bound < measured in {config.kind} run{f' ({path})' if path else ''}")
    return RunOutcome(curve, text, path)


def error_exit_code(exc: BaseException) -> int:
    if isinstance(exc, ZlabError):
        return exc.exit_code
    return 3
