"""Acceptance suite: twelve end-to-end checks shared by ``zlab selftest`` and the tests.

Each check returns a :class:`CriterionResult`; none of them raises on a
numerical miss, so a failing criterion is reported with its measured values.
"""

from __future__ import annotations

import math
import time
import traceback
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .adiabatic import AdiabaticBoundParams, adiabatic_bound_strong_damping
from .curves import ErrorCurve, fit_rate
from .ergodic import (
    Schedule,
    ergodic_mean_discrete,
    ergodic_mean_pinching,
    integrated_partial_means,
    partial_ergodic_means,
    psi,
    scalar_telescoping_limit,
    scalar_telescoping_sum,
    schedule_diagnostics,
)
from .harness import (
    ExperimentConfig,
    assertion_holds,
    complex_gaussian,
    compute_curve,
    csv_body,
    curve_to_csv,
    decode_matrix,
    haar_unitary,
    parse_config,
    preset_data,
    random_instance,
    random_poly_coefficients,
    stream_rng,
)
from .linops import commutator, dagger, norm, weak_growth_bound
from .propagate import (
    TimeDepGenerator,
    expm,
    perturbation_bound,
    picard_tail_bound,
    picard_term,
    propagate_refined,
    propagator_growth_check,
    trotter_product,
    weighted_sum_growth_check,
    integral_growth_check,
)

__all__ = ["CriterionResult", "CRITERIA", "ACCEPTANCE_SEED", "run_all", "run_criterion"]

ACCEPTANCE_SEED = 20261015
SLACK = 1e-8
KERNEL_SLACK = 1e-9
POWERS_8_TO_256 = [2**k for k in range(3, 9)]
SCHEDULES = (Schedule.uniform(), Schedule.linear_ramp())


@dataclass(frozen=True)
class CriterionResult:
    number: int
    title: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return f"criterion {self.number:2d} [{verdict}] {self.title}: {self.detail} ({self.seconds:.1f}s)"


def _config(name: str, **overrides) -> ExperimentConfig:
    data = preset_data(name)
    for key, value in overrides.items():
        data[key] = {**data.get(key, {}), **value} if isinstance(value, dict) else value
    return parse_config(data)


def _random_config(kind: str, index: int, grid: dict) -> ExperimentConfig:
    instance = random_instance(kind, ACCEPTANCE_SEED, index)
    return parse_config({"kind": kind, "instance": instance, "grid": grid, "seed": ACCEPTANCE_SEED})


def _poly(coeffs: Iterable[np.ndarray]) -> TimeDepGenerator:
    return TimeDepGenerator.poly(list(coeffs), 0.0, 1.0)


# 1 ---------------------------------------------------------------------------------


def zeno_rate() -> tuple[bool, str]:
    parts, ok = [], True
    grid = {"n": [2**k for k in range(5, 10)], "s": [1.0]}
    for name in ("zeno_projective", "zeno_contraction"):
        curve = compute_curve(_config(name, grid=grid))
        _, p, r2 = fit_rate(curve)
        terminal = curve.rows[-1].measured
        good = p >= 0.9 and r2 >= 0.98 and terminal <= 1e-2
        ok &= good
        parts.append(f"{name} p={p:.3f} r2={r2:.4f} err(512)={terminal:.2e}")
    return ok, "; ".join(parts)


# 2 ---------------------------------------------------------------------------------


def _min_margin(curve: ErrorCurve) -> float:
    margins = []
    for r in curve.rows:
        if r.bound is not None:
            margins.append(r.bound - r.measured)
        margins.extend(v - r.measured for k, v in r.extras.items() if k.endswith("_bound"))
    return min(margins)


def bound_domination() -> tuple[bool, str]:
    grid = {"n": POWERS_8_TO_256, "s": [0.5, 1.0]}
    configs = [_config(name, kind="bounds", grid=grid) for name in ("zeno_projective", "zeno_contraction")]
    configs += [_random_config("bounds", i, grid) for i in range(5)]
    ok, worst = True, math.inf
    for cfg in configs:
        curve = compute_curve(cfg)
        ok &= bool(assertion_holds(curve, SLACK))
        worst = min(worst, _min_margin(curve))
    return ok, f"{len(configs)} instances x {len(POWERS_8_TO_256)} n values, smallest bound-measured margin {worst:.3e}"


# 3 ---------------------------------------------------------------------------------


def ergodic_mean_correctness() -> tuple[bool, str]:
    s_grid = list(np.linspace(0.0, 1.0, 9))
    worst_mean, worst_comm, worst_inv = 0.0, 0.0, 0.0
    for i in range(5):
        inst = random_instance("ergodic", ACCEPTANCE_SEED, i)
        u = decode_matrix(inst["operator"])
        gen = _poly(decode_matrix(c) for c in inst["generator"]["coefficients"])
        closed = ergodic_mean_pinching(gen, u)
        twice = ergodic_mean_pinching(closed, u)
        result = ergodic_mean_discrete(gen, u, Schedule.uniform(), s_grid, n_max=2**12)
        for s, value in zip(s_grid, result.value):
            at_max = partial_ergodic_means(gen, u, Schedule.uniform(), 2**12, s)[-1]
            worst_mean = max(worst_mean, norm(value - closed(s)), norm(at_max - closed(s)))
            worst_comm = max(worst_comm, norm(commutator(u, closed(s))))
            worst_inv = max(worst_inv, norm(twice(s) - closed(s)))
    ok = worst_mean <= 5e-3 and worst_comm <= 1e-8 and worst_inv <= 1e-8
    return ok, f"max distance to pinching {worst_mean:.2e}, commutator {worst_comm:.1e}, involution {worst_inv:.1e}"


# 4 and 5 ---------------------------------------------------------------------------


def _kernel_cases() -> list[tuple[np.ndarray, TimeDepGenerator]]:
    fix_b = (np.diag([1, 1j]), TimeDepGenerator.constant([[0, 1], [0, 0]]))
    cases = [fix_b]
    for i in range(2):
        inst = random_instance("ergodic", ACCEPTANCE_SEED, 10 + i)
        u = decode_matrix(inst["operator"])
        cases.append((u, TimeDepGenerator.constant(decode_matrix(inst["generator"]["coefficients"][0]))))
        rng = stream_rng(ACCEPTANCE_SEED, 20 + i)
        cases.append((u, _poly(random_poly_coefficients(rng, u.shape[0], 2))))
    return cases


def kernel_decay() -> tuple[bool, str]:
    s_grid = np.linspace(0.0, 1.0, 9)
    worst_ratio, violations = 0.0, 0
    for u, l_gen in _kernel_cases():
        lip = l_gen.c01_norm()
        kernel = l_gen.map_linear(lambda c: c - dagger(u) @ c @ u)
        for schedule in SCHEDULES:
            for n in POWERS_8_TO_256:
                s_alpha = schedule_diagnostics(schedule, n).S_alpha
                for s in s_grid:
                    measured = np.linalg.norm(partial_ergodic_means(kernel, u, schedule, n, s), 2, axis=(1, 2)).max()
                    bound = psi(s - kernel.t1) * s_alpha * lip
                    violations += int(measured > bound + KERNEL_SLACK)
                    worst_ratio = max(worst_ratio, measured / bound if bound > 0 else 0.0)
    return violations == 0, f"{violations} violations, largest measured/bound {worst_ratio:.3f}"


def integral_bounds() -> tuple[bool, str]:
    s_grid = np.linspace(0.0, 1.0, 9)
    worst_22, worst_25, violations = 0.0, 0.0, 0
    for u, k_gen in _kernel_cases():
        c0 = k_gen.c0_bound()
        kernel = k_gen.map_linear(lambda c: c - dagger(u) @ c @ u)
        for schedule in SCHEDULES:
            for n in POWERS_8_TO_256:
                d_alpha = schedule_diagnostics(schedule, n).D_alpha
                for s in s_grid:
                    width = s - k_gen.t1
                    plain = np.linalg.norm(integrated_partial_means(k_gen, u, schedule, n, s), 2, axis=(1, 2)).max()
                    kern = np.linalg.norm(integrated_partial_means(kernel, u, schedule, n, s), 2, axis=(1, 2)).max()
                    violations += int(plain > width * c0 + KERNEL_SLACK)
                    violations += int(kern > d_alpha * width * c0 + KERNEL_SLACK)
                    if width > 0:
                        worst_22 = max(worst_22, plain / (width * c0))
                        worst_25 = max(worst_25, kern / (d_alpha * width * c0))
    return violations == 0, f"{violations} violations, largest ratios {worst_22:.3f} (plain), {worst_25:.3f} (kernel)"


# 6 ---------------------------------------------------------------------------------


def scalar_telescoping() -> tuple[bool, str]:
    n = 10**5
    worst = 0.0
    for omega in (1.0, 1j, complex(np.exp(1j))):
        for k in (2, 3, 4):
            worst = max(worst, abs(scalar_telescoping_sum(omega, "power", n, k=k) - scalar_telescoping_limit(omega, "power")))
        for z in (1.0, 1j, 1 + 1j):
            worst = max(worst, abs(scalar_telescoping_sum(omega, "exp", n, z=z) - scalar_telescoping_limit(omega, "exp", z)))
    return worst <= 1e-3, f"max |value - limit| {worst:.2e} at n = 1e5"


# 7 ---------------------------------------------------------------------------------


def growth_bounds() -> tuple[bool, str]:
    worst = -math.inf
    for i in range(10):
        rng = stream_rng(ACCEPTANCE_SEED, 100 + i)
        gen = _poly(c * 2 for c in random_poly_coefficients(rng, 3, 2))
        lhs, rhs = propagator_growth_check(gen, 1.0, 0.0)
        worst = max(worst, lhs - rhs)
        lhs, rhs = integral_growth_check(gen, 0.5 + i / 10)
        worst = max(worst, lhs - rhs)
        k = 2 * complex_gaussian(rng, (3, 3))
        u = haar_unitary(rng, 3)
        alphas = rng.uniform(0.0, 1.0, 6)
        lhs, rhs = weighted_sum_growth_check(k, u, alphas / alphas.sum(), 1.0)
        worst = max(worst, lhs - rhs)
    for i in range(20):
        rng = stream_rng(ACCEPTANCE_SEED, 150 + i)
        m = complex_gaussian(rng, (4, 4))
        worst = max(worst, weak_growth_bound(m, "sampled") - weak_growth_bound(m))
    return worst <= SLACK, f"largest lhs - rhs {worst:.3e}"


# 8 ---------------------------------------------------------------------------------


def perturbation() -> tuple[bool, str]:
    worst = -math.inf
    for i in range(10):
        rng = stream_rng(ACCEPTANCE_SEED, 200 + i)
        k_coeffs = random_poly_coefficients(rng, 3, 2)
        l_coeffs = [c + 0.3 * complex_gaussian(rng, c.shape) for c in k_coeffs]
        bound, measured = perturbation_bound(_poly(k_coeffs), _poly(l_coeffs), 1.0, 0.0)
        worst = max(worst, measured - bound)
    return worst <= SLACK, f"largest measured - bound {worst:.3e}"


# 9 ---------------------------------------------------------------------------------


def picard_trotter() -> tuple[bool, str]:
    rng = stream_rng(ACCEPTANCE_SEED, 300)
    coeffs = random_poly_coefficients(rng, 3, 2)
    gen = _poly(coeffs)
    gen = gen.map_linear(lambda c: c / gen.c0_bound())
    exact = propagate_refined(gen, 1.0, 0.0, tol=1e-13)
    partial = np.zeros_like(exact)
    picard_ok, worst_ratio = True, 0.0
    for k in range(1, 7):
        partial = partial + picard_term(gen, k - 1, 1.0, 0.0)
        measured = norm(exact - partial)
        bound = picard_tail_bound(gen.c0_bound(), 1.0, 0.0, k)
        picard_ok &= measured <= bound + SLACK
        worst_ratio = max(worst_ratio, measured / bound)
    k1, k2 = complex_gaussian(rng, (3, 3)), complex_gaussian(rng, (3, 3))
    target = expm(k1 + k2, 1.0)
    errors = [norm(trotter_product(k1, k2, 1.0, n) - target) for n in (32, 64, 128, 256, 512)]
    ratios = [a / b for a, b in zip(errors, errors[1:])]
    trotter_ok = all(1.7 <= r <= 2.3 for r in ratios)
    ratio_text = ", ".join(f"{r:.3f}" for r in ratios)
    return picard_ok and trotter_ok, f"Picard measured/bound max {worst_ratio:.3f}; Trotter ratios {ratio_text}"


# 10 --------------------------------------------------------------------------------


def adiabatic_rate() -> tuple[bool, str]:
    parts, ok = [], True
    for name in ("adiabatic_block", "adiabatic_unitary"):
        curve = compute_curve(_config(name))
        _, p, r2 = fit_rate(curve)
        failing = [r.control for r in curve.rows if not r.measured <= r.bound + SLACK]
        good = p >= 0.9 and r2 >= 0.95 and not failing
        ok &= good
        dom = "dominated" if not failing else f"bound exceeded at gamma={','.join(f'{g:g}' for g in failing)}"
        parts.append(f"{name} p={p:.3f} r2={r2:.4f} {dom}")
    value = adiabatic_bound_strong_damping(
        np.diag([-1.0, -2.0]),
        np.array([[0.0, 1.0], [1.0, 0.0]]),
        AdiabaticBoundParams(c_AB=1.0, self_adjoint_form=True),
        1.0,
        10.0,
    )
    strong_damping_ok = abs(value - 0.5437) <= 1e-3
    parts.append(f"strong-damping plug-in {value:.6f}")
    return ok and strong_damping_ok, "; ".join(parts)


# 11 --------------------------------------------------------------------------------


def cptp_kick() -> tuple[bool, str]:
    curve = compute_curve(_config("cptp_kick", grid={"n": [2**10], "s": [1.0]}))
    err = curve.rows[-1].measured
    return err <= 5e-3, f"error at n = 1024: {err:.4e} (tolerance 5e-3)"


# 12 --------------------------------------------------------------------------------


def determinism() -> tuple[bool, str]:
    configs = [
        _config("zeno_contraction"),
        _random_config("bounds", 0, {"n": [8, 16, 32], "s": [1.0]}),
        _random_config("ergodic", 0, {"n": [8, 16, 32]}),
    ]
    same = True
    for cfg in configs:
        first = curve_to_csv(compute_curve(cfg, workers=1), cfg, "t0").splitlines()[1:]
        second = curve_to_csv(compute_curve(cfg, workers=4), cfg, "t1").splitlines()[1:]
        same &= first == second and csv_body(compute_curve(cfg, workers=2)) == first[1:]
    return same, f"{len(configs)} configs, serial and pooled runs byte-identical: {same}"


# (number, title, check, runtime limit in seconds or None)
CRITERIA: tuple[tuple[int, str, Callable[[], tuple[bool, str]], float | None], ...] = (
    (1, "Zeno rate", zeno_rate, 30.0),
    (2, "bound domination", bound_domination, None),
    (3, "ergodic mean correctness", ergodic_mean_correctness, None),
    (4, "kernel decay", kernel_decay, None),
    (5, "integral bounds", integral_bounds, None),
    (6, "scalar telescoping sums", scalar_telescoping, 5.0),
    (7, "growth bounds", growth_bounds, None),
    (8, "perturbation", perturbation, None),
    (9, "Picard and Trotter", picard_trotter, None),
    (10, "adiabatic rate", adiabatic_rate, 60.0),
    (11, "CPTP kick", cptp_kick, None),
    (12, "determinism", determinism, None),
)


def run_criterion(number: int) -> CriterionResult:
    for num, title, check, limit in CRITERIA:
        if num != number:
            continue
        start = time.perf_counter()
        try:
            passed, detail = check()
        except Exception as exc:
            passed, detail = False, f"raised {type(exc).__name__}: {exc}; {traceback.format_exc(limit=1).strip()}"
        elapsed = time.perf_counter() - start
        if limit is not None and elapsed > limit:
            passed, detail = False, f"{detail}; runtime {elapsed:.1f}s exceeds {limit:g}s"
        return CriterionResult(num, title, bool(passed), detail, elapsed)
    raise KeyError(f"no criterion {number}")


def run_all(report: Callable[[CriterionResult], None] | None = None) -> list[CriterionResult]:
    results = []
    for number, *_ in CRITERIA:
        result = run_criterion(number)
        if report is not None:
            report(result)
        results.append(result)
    return results
