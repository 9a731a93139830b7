import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import complex_gaussian
from oracles import brute_partial_mean, lagrange_pinch, loop_telescoping_exp, loop_telescoping_power, poly_function
from zlab.errors import InputError, ScheduleError, UnsupportedRepresentationError
from zlab.ergodic import (
    Schedule,
    check_admissible,
    ergodic_mean_discrete,
    ergodic_mean_group,
    ergodic_mean_pinching,
    gamma,
    integrated_partial_mean,
    integrated_partial_means,
    kernel_bound_check,
    partial_ergodic_mean,
    partial_ergodic_means,
    psi,
    rho,
    scalar_telescoping_limit,
    scalar_telescoping_sum,
    schedule_diagnostics,
)
from zlab.linops import commutator, norm, weak_growth_bound
from zlab.propagate import TimeDepGenerator, expm

seeds = st.integers(min_value=0, max_value=2**32 - 1)
KICK_U = np.diag([1, 1j])
KICK_K = np.array([[1, 2], [3, 4]], dtype=complex)


def random_unitary(rng, d):
    q, r = np.linalg.qr(complex_gaussian(rng, d))
    return q * (np.diag(r) / np.abs(np.diag(r)))


def distinct_unitary(rng, d):
    phases = np.cumsum(0.3 + rng.uniform(0, 1, d))
    phases *= 5.5 / phases[-1]
    v = random_unitary(rng, d)
    return v @ np.diag(np.exp(1j * phases)) @ v.conj().T


class TestSchedule:
    @pytest.mark.parametrize("n,max_alpha", [(4, 0.25), (8, 0.125), (16, 0.0625)])
    def test_uniform_diagnostics(self, n, max_alpha):
        diag = schedule_diagnostics(Schedule.uniform(), n)
        assert diag.max_alpha == pytest.approx(max_alpha)
        assert diag.sum_abs_diff == 0.0 and diag.sqrt_n_sum_abs_diff == 0.0

    def test_linear_ramp_variation(self):
        assert schedule_diagnostics(Schedule.linear_ramp(), 4).sum_abs_diff == pytest.approx(0.3)

    def test_custom_row_must_sum_to_one(self):
        with pytest.raises(ScheduleError):
            Schedule.custom({2: [0.5, 0.6]})

    def test_custom_row_must_be_positive(self):
        with pytest.raises(ScheduleError):
            Schedule.custom({2: [1.5, -0.5]})

    def test_both_builtins_admissible_consistent(self):
        for sched in (Schedule.uniform(), Schedule.linear_ramp()):
            assert check_admissible(sched, [4, 8, 16, 32, 64]).consistent

    def test_gamma_and_rho(self):
        sched = Schedule.linear_ramp()
        assert gamma(sched, 4, 0) == 0.0 and gamma(sched, 4, 4) == 1.0
        assert gamma(sched, 4, 2) == pytest.approx(0.3)
        assert rho(sched, 4, 2, 2.0, 1.0) == pytest.approx(1.3)

    def test_psi(self):
        assert psi(0.1) == 4.0 and psi(2.0) == 12.0

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 300))
    def test_linear_ramp_closed_forms(self, n):
        diag = schedule_diagnostics(Schedule.linear_ramp(), n)
        assert diag.max_alpha == pytest.approx(2 / (n + 1))
        assert diag.sum_abs_diff == pytest.approx(2 * (n - 1) / (n * (n + 1)))
        assert diag.normalization_residual <= 1e-12


class TestPartialMean:
    def test_two_term_value(self):
        gen = TimeDepGenerator.constant(KICK_K)
        value = partial_ergodic_mean(gen, KICK_U, Schedule.uniform(), 2, 1, 1.0)
        assert np.allclose(value, [[1, 1 + 1j], [1.5 - 1.5j, 4]])

    def test_commuting_full_sum(self):
        k = np.diag([2.0, -1j])
        value = partial_ergodic_mean(TimeDepGenerator.constant(k), KICK_U, Schedule.linear_ramp(), 7, 6, 1.0)
        assert np.allclose(value, k)

    def test_single_term(self):
        gen = TimeDepGenerator.poly([KICK_K, np.eye(2)])
        sched = Schedule.linear_ramp()
        value = partial_ergodic_mean(gen, KICK_U, sched, 5, 0, 0.8)
        g1 = gamma(sched, 5, 1)
        assert np.allclose(value, g1 * gen(0.8 * g1))

    def test_non_unitary(self):
        with pytest.raises(InputError):
            partial_ergodic_mean(TimeDepGenerator.constant(KICK_K), np.diag([1, 2]), Schedule.uniform(), 2, 1, 1.0)

    @settings(max_examples=25, deadline=None)
    @given(seeds, st.integers(1, 20), st.floats(0.0, 1.0), st.sampled_from(["uniform", "linear_ramp"]))
    def test_matches_brute_force(self, seed, n, s, kind):
        rng = np.random.default_rng(seed)
        u = random_unitary(rng, 3)
        coeffs = [complex_gaussian(rng, 3) for _ in range(3)]
        sched = Schedule(kind)
        all_k = partial_ergodic_means(TimeDepGenerator.poly(coeffs), u, sched, n, s)
        for k in {0, n // 2, n - 1}:
            oracle = brute_partial_mean(poly_function(coeffs), u, sched.row(n), k, s, 0.0)
            assert np.allclose(all_k[k], oracle, atol=1e-10)

    @settings(max_examples=20, deadline=None)
    @given(seeds, st.integers(1, 40), st.floats(0.0, 1.0))
    def test_lipschitz_bound(self, seed, n, s):
        rng = np.random.default_rng(seed)
        gen = TimeDepGenerator.poly([complex_gaussian(rng, 3) for _ in range(3)])
        u = random_unitary(rng, 3)
        bound = s * gen.lipschitz() + gen.c0_bound()
        for sched in (Schedule.uniform(), Schedule.linear_ramp()):
            sup = np.linalg.norm(partial_ergodic_means(gen, u, sched, n, s), 2, axis=(1, 2)).max()
            assert sup <= bound + 1e-9


class TestIntegratedMean:
    @settings(max_examples=15, deadline=None)
    @given(seeds, st.integers(1, 12), st.floats(0.05, 1.0))
    def test_routes_agree(self, seed, n, s):
        rng = np.random.default_rng(seed)
        gen = TimeDepGenerator.poly([complex_gaussian(rng, 2) for _ in range(3)])
        u = random_unitary(rng, 2)
        sched = Schedule.linear_ramp()
        k = n - 1
        quad = integrated_partial_mean(gen, u, sched, n, k, s, method="quadrature")
        anti = integrated_partial_mean(gen, u, sched, n, k, s, method="antiderivative")
        assert np.allclose(quad, anti, atol=1e-9)
        assert np.allclose(integrated_partial_means(gen, u, sched, n, s)[k], anti)

    @settings(max_examples=15, deadline=None)
    @given(seeds, st.integers(1, 64), st.floats(0.0, 1.0))
    def test_integral_bounds(self, seed, n, s):
        rng = np.random.default_rng(seed)
        gen = TimeDepGenerator.poly([complex_gaussian(rng, 3) for _ in range(2)])
        u = random_unitary(rng, 3)
        c0 = gen.c0_bound()
        kernel = gen.map_linear(lambda c: c - u.conj().T @ c @ u)
        for sched in (Schedule.uniform(), Schedule.linear_ramp()):
            d_alpha = schedule_diagnostics(sched, n).D_alpha
            plain = np.linalg.norm(integrated_partial_means(gen, u, sched, n, s), 2, axis=(1, 2)).max()
            kern = np.linalg.norm(integrated_partial_means(kernel, u, sched, n, s), 2, axis=(1, 2)).max()
            assert plain <= s * c0 + 1e-9
            assert kern <= d_alpha * s * c0 + 1e-9


class TestDiscreteMean:
    def test_commuting_converges_immediately(self):
        k = np.diag([1.0, 2j])
        result = ergodic_mean_discrete(TimeDepGenerator.constant(k), KICK_U, Schedule.uniform(), [0.5, 1.0])
        assert result.converged and result.n_final == 16
        assert np.allclose(result.value, k)

    def test_fix_b_mean(self):
        gen = TimeDepGenerator.constant(KICK_K)
        oracle = brute_partial_mean(lambda t: KICK_K, KICK_U, np.full(10**4, 1e-4), 10**4 - 1, 1.0, 0.0)
        assert np.allclose(oracle, np.diag([1, 4]), atol=1e-3)
        result = ergodic_mean_discrete(gen, KICK_U, Schedule.uniform(), [1.0], tol=1e-6)
        assert np.allclose(result.value[0], np.diag([1, 4]), atol=1e-5)

    def test_kernel_element_vanishes(self):
        k0 = np.array([[0.3, 1], [2j, -1]])
        k = k0 - KICK_U.conj().T @ k0 @ KICK_U
        result = ergodic_mean_discrete(TimeDepGenerator.constant(k), KICK_U, Schedule.uniform(), [1.0], n_max=2**10)
        norms = [norm(v) for v in result.value]
        bound = psi(1.0) * schedule_diagnostics(Schedule.uniform(), result.n_final).S_alpha * norm(k0)
        assert max(norms) <= bound

    def test_nonconvergence_is_reported(self):
        gen = TimeDepGenerator.constant(KICK_K)
        result = ergodic_mean_discrete(gen, np.diag([1, np.exp(1e-4j)]), Schedule.uniform(), [1.0], n_max=64)
        assert not result.converged

    def test_matches_pinching_with_trig_coefficient(self):
        gen = TimeDepGenerator.trig([np.zeros((2, 2)), KICK_K, np.array([[0, 1], [1, 0]])], period=1.0)
        grid = np.linspace(0, 1, 9)
        result = ergodic_mean_discrete(gen, KICK_U, Schedule.uniform(), grid, n_max=2**12, tol=1e-9)
        closed = ergodic_mean_pinching(gen, KICK_U)
        for s, v in zip(grid, result.value):
            assert norm(v - closed(s)) <= 5e-3

    @settings(max_examples=8, deadline=None)
    @given(seeds)
    def test_closed_form_properties(self, seed):
        rng = np.random.default_rng(seed)
        u = distinct_unitary(rng, 3)
        gen = TimeDepGenerator.poly([complex_gaussian(rng, 3) for _ in range(2)])
        closed = ergodic_mean_pinching(gen, u)
        twice = ergodic_mean_pinching(closed, u)
        for s in np.linspace(0, 1, 5):
            assert norm(commutator(u, closed(s))) <= 1e-8
            assert norm(twice(s) - closed(s)) <= 1e-10
            assert np.allclose(closed(s), lagrange_pinch(gen(s), u), atol=1e-8)


class TestPinchingMean:
    def test_diagonal(self):
        assert np.allclose(ergodic_mean_pinching(TimeDepGenerator.constant(KICK_K), KICK_U)(0.3), np.diag([1, 4]))

    def test_linearity_over_trig(self):
        k1 = np.array([[0, 1], [1, 0]], dtype=complex)
        gen = TimeDepGenerator.trig([np.zeros((2, 2)), KICK_K, k1], period=1.0)
        closed = ergodic_mean_pinching(gen, KICK_U)
        s = 0.3
        assert np.allclose(closed(s), np.diag([1, 4]))

    def test_refuses_tabulated(self):
        gen = TimeDepGenerator.tabulated([0, 1], [KICK_K, KICK_K])
        with pytest.raises(UnsupportedRepresentationError):
            ergodic_mean_pinching(gen, KICK_U)

    def test_refuses_ramp(self):
        with pytest.raises(ScheduleError):
            ergodic_mean_pinching(TimeDepGenerator.constant(KICK_K), KICK_U, Schedule.linear_ramp())


class TestScalarSums:
    def test_power_at_one(self):
        for n in (1, 7, 100):
            assert scalar_telescoping_sum(1, "power", n, k=3) == pytest.approx(1.0)

    def test_power_two_terms(self):
        assert scalar_telescoping_sum(-1, "power", 2, k=2) == pytest.approx(-0.5)

    def test_exp_vanishes_off_one(self):
        assert abs(scalar_telescoping_sum(1j, "exp", 10**5, z=1)) <= 1e-3

    def test_non_unit_omega(self):
        with pytest.raises(InputError):
            scalar_telescoping_sum(1.1, "power", 4, k=2)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0, 2 * math.pi), st.integers(1, 60), st.integers(2, 5), st.complex_numbers(max_magnitude=2))
    def test_matches_loops(self, theta, n, k, z):
        omega = cmath.exp(1j * theta)
        assert scalar_telescoping_sum(omega, "power", n, k=k) == pytest.approx(loop_telescoping_power(omega, n, k), abs=1e-10)
        assert scalar_telescoping_sum(omega, "exp", n, z=z) == pytest.approx(loop_telescoping_exp(omega, n, z), abs=1e-9)

    def test_limits(self):
        assert scalar_telescoping_limit(1, "exp", 1 + 1j) == pytest.approx(cmath.exp(1 + 1j))
        assert scalar_telescoping_limit(1j, "power") == 0


class TestGroupMean:
    def test_commuting(self):
        k = np.diag([1.0, -2j])
        assert np.allclose(ergodic_mean_group(k, np.diag([1j, -1j])), k)

    def test_pinching(self):
        assert np.allclose(ergodic_mean_group(KICK_K, np.diag([1j, -1j])), np.diag([1, 4]))

    def test_integral_agrees(self):
        a = np.diag([1j, -1j])
        closed = ergodic_mean_group(KICK_K, a)
        integral = ergodic_mean_group(KICK_K, a, "integral", S=200)
        assert norm(integral - closed) <= 2 / (200 * 2) * norm(KICK_K)

    def test_requires_skew(self):
        with pytest.raises(InputError):
            ergodic_mean_group(KICK_K, np.diag([1.0, -1.0]))

    @settings(max_examples=15, deadline=None)
    @given(seeds)
    def test_group_properties(self, seed):
        rng = np.random.default_rng(seed)
        h = complex_gaussian(rng, 3)
        a = -1j * (h + h.conj().T) / 2
        k = complex_gaussian(rng, 3)
        mean = ergodic_mean_group(k, a)
        for s in (0.3, 1.0, 2.7):
            assert norm(commutator(expm(a, s), mean)) <= 1e-9
        assert weak_growth_bound(mean) <= weak_growth_bound(k) + 1e-8


class TestKernelBound:
    def test_commuting_is_zero(self):
        measured, _ = kernel_bound_check(TimeDepGenerator.constant(np.diag([1, 2])), KICK_U, Schedule.uniform(), 8, 5, 1.0)
        assert measured == pytest.approx(0.0, abs=1e-14)

    def test_constant_uniform(self):
        l_gen = TimeDepGenerator.constant([[0, 1], [0, 0]])
        for k in range(64):
            measured, bound = kernel_bound_check(l_gen, KICK_U, Schedule.uniform(), 64, k, 1.0)
            assert measured <= bound + 1e-9
            assert bound == pytest.approx(psi(1.0) / 64)

    def test_degenerate_interval(self):
        l_gen = TimeDepGenerator.poly([[[0, 1], [0, 0]], [[1, 0], [2, 0]]])
        measured, bound = kernel_bound_check(l_gen, KICK_U, Schedule.uniform(), 8, 3, 0.0)
        assert measured == pytest.approx(0.0, abs=1e-14) and bound >= 0

    def test_refuses_tabulated(self):
        l_gen = TimeDepGenerator.tabulated([0, 1], [KICK_K, KICK_K])
        with pytest.raises(UnsupportedRepresentationError):
            kernel_bound_check(l_gen, KICK_U, Schedule.uniform(), 8, 3, 1.0)

    @settings(max_examples=10, deadline=None)
    @given(seeds, st.sampled_from([8, 16, 32, 64]), st.floats(0.0, 1.0), st.sampled_from(["uniform", "linear_ramp"]))
    def test_poly_dominated(self, seed, n, s, kind):
        rng = np.random.default_rng(seed)
        l_gen = TimeDepGenerator.poly([complex_gaussian(rng, 3) for _ in range(3)])
        u = random_unitary(rng, 3)
        for k in (0, n // 3, n - 1):
            measured, bound = kernel_bound_check(l_gen, u, Schedule(kind), n, k, s)
            assert measured <= bound + 1e-9
