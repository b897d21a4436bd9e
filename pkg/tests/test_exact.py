import math
from fractions import Fraction
from itertools import product

import numpy as np
import pytest

from incproc import (ConditionNotSatisfied, OutOfRange, ProcessParams,
                     RegionSpec, WalkSpec, analyze_walk, enumerate_states,
                     flow, flow_profile, hitting_probabilities, m_function,
                     mean_jump_rate_exact, reciprocal_sum, region_masses,
                     stationary_closed_form, stationary_exact)
from incproc.exact import build_generator, reciprocal_bound_holds


class TestStationaryExact:
    def test_two_site_hand_balance(self, two_sym):
        mu = stationary_exact(two_sym, ProcessParams(2, 0.1))
        assert mu.weights == pytest.approx([11 / 24, 1 / 12, 11 / 24], abs=1e-14)

    def test_residual_identity(self, up3):
        params = ProcessParams(15, 0.01)
        mu = stationary_exact(up3, params)
        q = build_generator(up3, params, mu.enum)
        scale = np.abs(q.data).max()
        assert np.abs(mu.weights @ q).max() <= 1e-10 * scale

    def test_per_state_balance_relative(self, up3):
        # inflow equals outflow state by state, relative to the local flux
        from incproc.exact import build_rate_matrix
        params = ProcessParams(30, 1e-4)
        mu = stationary_exact(up3, params)
        rates = build_rate_matrix(up3, params, mu.enum)
        holding = np.asarray(rates.sum(axis=1)).ravel()
        inflow = mu.weights @ rates
        outflow = mu.weights * holding
        assert (np.abs(inflow - outflow) / outflow).max() <= 1e-10

    def test_totally_asymmetric_concentrates(self):
        spec = WalkSpec.from_matrix([[0.0, 1.0], [1e-30, 0.0]])
        # effectively one-way (tiny back rate keeps the walk irreducible)
        mu = stationary_exact(spec, ProcessParams(10, 1e-6))
        assert mu.xi_mass(1) > 0.99

    def test_matches_closed_form_under_ui(self, cycle3):
        for n, d in product((10, 30), (1e-2, 1e-4)):
            mu = stationary_exact(cycle3, ProcessParams(n, d))
            cf = stationary_closed_form(cycle3, ProcessParams(n, d))
            assert np.abs(mu.weights - cf.weights).max() <= 1e-10

    def test_matches_closed_form_under_rev(self, two_asym):
        mu = stationary_exact(two_asym, ProcessParams(20, 1e-3))
        cf = stationary_closed_form(two_asym, ProcessParams(20, 1e-3))
        assert np.abs(mu.weights - cf.weights).max() <= 1e-10

    def test_kappa4_agreement(self):
        spec = WalkSpec.cycle(4, 0.6)
        mu = stationary_exact(spec, ProcessParams(12, 1e-2))
        cf = stationary_closed_form(spec, ProcessParams(12, 1e-2))
        assert np.abs(mu.weights - cf.weights).max() <= 1e-10


class TestClosedForm:
    def test_two_site_partition_value(self, two_sym):
        cf = stationary_closed_form(two_sym, ProcessParams(2, 0.1))
        assert cf.log_norm == pytest.approx(math.log(0.12), abs=1e-12)
        assert cf.weights == pytest.approx(
            np.array([0.055, 0.01, 0.055]) / 0.12, abs=1e-14)

    def test_requires_rev_or_ui(self, up3):
        an = analyze_walk(up3)
        assert not an.rev and not an.ui
        with pytest.raises(ConditionNotSatisfied):
            stationary_closed_form(up3, ProcessParams(5, 0.1))

    def test_uniform_measure_site_ratio_is_one(self, cycle3):
        an = analyze_walk(cycle3)
        assert an.ui
        assert np.abs(an.m / an.m_star - 1.0).max() <= 1e-12


class TestRegionMasses:
    def test_two_site_masses(self, two_sym):
        mu = stationary_exact(two_sym, ProcessParams(2, 0.1))
        rep = region_masses(mu)
        assert rep.e_mass == pytest.approx(22 / 24, abs=1e-14)
        # single-occupied mass is E; all-states mass is 1
        assert rep.b_mass[0] == pytest.approx(rep.e_mass, abs=1e-14)
        assert rep.b_mass[-1] == pytest.approx(1.0, abs=1e-14)

    def test_cycle_condensation(self, cycle3):
        mu = stationary_exact(cycle3, ProcessParams(100, 1e-5))
        rep = region_masses(mu)
        assert rep.e_mass >= 0.99

    def test_region_decomposition(self, up3):
        params = ProcessParams(25, 1e-3)
        mu = stationary_exact(up3, params)
        reg = RegionSpec(up3, mu.enum, (0, 1, 2), eps=0.1)
        rep = region_masses(mu, [reg]).regions[0]
        total = rep.boundary + rep.outer_core + rep.inner_core
        assert total == pytest.approx(rep.tube, rel=1e-12)
        # slices at one site partition the tube
        assert rep.slices[0].sum() == pytest.approx(rep.tube, rel=1e-12)

    def test_region_identities(self, up3):
        enum = enumerate_states(3, 20)
        reg = RegionSpec(up3, enum, (0, 1), eps=0.1)
        # extreme slices: all particles at x, and the tube without x
        assert set(reg.slice_indices(0, 20)) == {enum.xi_index(0)}
        sub = RegionSpec(up3, enum, (1,), eps=0.1)
        assert set(reg.slice_indices(0, 0)) == set(sub.tube)

    def test_slice_bound_under_up(self, up3):
        # stationary slice masses obey the flow-derived ratio bound
        params = ProcessParams(20, 1e-3)
        mu = stationary_exact(up3, params)
        an = analyze_walk(up3)
        reg = RegionSpec(up3, mu.enum, (0, 1, 2), eps=0.1)
        sl = region_masses(mu, [reg]).regions[0].slices
        n, d = params.n, params.d
        for xi in range(3):
            for k in range(n - 1):
                cap = (an.r2 * (k + d) * (n - k)
                       / (an.r1 * (k + 1) * (n - k - 1 + d)))
                assert sl[xi, k + 1] <= cap * sl[xi, k] * (1 + 1e-9)

    def test_epsilon_validation_warns(self, up3):
        # a huge threshold makes the slice-growth budget exceed N
        enum = enumerate_states(3, 50)
        with pytest.warns(UserWarning, match="threshold"):
            RegionSpec(up3, enum, (0, 1, 2), eps=2.5)

    def test_default_epsilon_is_admissible(self, up3):
        import warnings
        enum = enumerate_states(3, 50)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            RegionSpec(up3, enum, (0, 1, 2), eps=0.1)

    def test_monotone_slice_decay(self, up3):
        params = ProcessParams(20, 1e-3)
        mu = stationary_exact(up3, params)
        an = analyze_walk(up3)
        reg = RegionSpec(up3, mu.enum, (0, 1, 2), eps=0.1)
        sl = region_masses(mu, [reg]).regions[0].slices
        c1 = an.r2 / an.r1 * params.n / (params.n - 1 + params.d)
        for xi in range(3):
            assert sl[xi, 1] <= c1 * params.d * sl[xi, 0]


class TestHitting:
    def test_symmetric_midpoint(self, two_sym):
        h, enum = hitting_probabilities(two_sym, ProcessParams(2, 0.1), (0, 1), 1)
        assert h[enum.rank((1, 1))] == pytest.approx(0.5, abs=1e-12)

    def test_no_backward_moves(self):
        spec = WalkSpec.from_matrix([[0.0, 1.0], [1e-300, 0.0]])
        h, enum = hitting_probabilities(spec, ProcessParams(6, 0.01), (0, 1), 1)
        for i in range(1, 6):
            assert h[enum.rank((6 - i, i))] == pytest.approx(1.0, abs=1e-12)

    def test_target_partition_of_unity(self, up3):
        params = ProcessParams(8, 0.05)
        total = None
        for y in range(3):
            h, enum = hitting_probabilities(up3, params, (0, 1, 2), y)
            total = h if total is None else total + h
        interior = [i for i in range(enum.size)
                    if i not in {enum.xi_index(x) for x in range(3)}]
        assert np.abs(total[interior] - 1.0).max() <= 1e-10

    def test_against_monte_carlo_absorption(self, up3):
        # independent oracle: direct jump-chain absorption frequencies
        from incproc.simulate import _Blocks, replica_rng
        params = ProcessParams(4, 0.3)
        h, enum = hitting_probabilities(up3, params, (0, 1, 2), 2)
        start = (2, 1, 1)
        targets = {enum.xi_index(x): x for x in range(3)}
        runs = 100_000
        blocks = _Blocks(replica_rng(99, 0))
        moves = [(x, y, up3.rates[x, y]) for x in range(3) for y in range(3)
                 if x != y and up3.rates[x, y] > 0]
        wins = 0
        for _ in range(runs):
            counts = list(start)
            while True:
                rates = [counts[x] * (params.d + counts[y]) * r
                         for x, y, r in moves]
                total = sum(rates)
                u = blocks.uniform() * total
                acc = 0.0
                for k, rate in enumerate(rates):
                    acc += rate
                    if u <= acc:
                        break
                x, y, _ = moves[k]
                counts[x] -= 1
                counts[y] += 1
                if max(counts) == params.n:
                    wins += counts.index(params.n) == 2
                    break
        p_exact = h[enum.rank(start)]
        sigma = math.sqrt(p_exact * (1 - p_exact) / runs)
        assert abs(wins / runs - p_exact) <= 3 * sigma


class TestMeanJumpRate:
    def test_two_site_symmetric_value(self, two_sym):
        tr = mean_jump_rate_exact(two_sym, ProcessParams(2, 0.1), (0, 1))
        assert tr.raw[0, 1] == pytest.approx(0.1, abs=1e-15)
        assert tr.normalized[0, 1] == pytest.approx(0.5, abs=1e-14)

    def test_totally_asymmetric_value(self):
        spec = WalkSpec.from_matrix([[0.0, 1.0], [1e-300, 0.0]])
        tr = mean_jump_rate_exact(spec, ProcessParams(5, 0.01), (0, 1))
        assert tr.raw[0, 1] == pytest.approx(0.05, rel=1e-12)

    def test_cycle_approaches_drift(self, cycle3):
        tr = mean_jump_rate_exact(cycle3, ProcessParams(60, 1e-6), (0, 1, 2))
        assert tr.normalized[0, 1] == pytest.approx(0.4, rel=0.05)
        assert tr.normalized[0, 2] < 0.01

    def test_trace_stationary_matches_conditioned_measure(self, up3):
        params = ProcessParams(12, 0.05)
        mu = stationary_exact(up3, params)
        tr = mean_jump_rate_exact(up3, params, (0, 1, 2))
        nu = tr.stationary()
        cond = np.array([mu.xi_mass(x) for x in range(3)])
        cond /= cond.sum()
        assert np.abs(nu - cond).max() <= 1e-8

    def test_row_sum_escape_minus_return(self, up3):
        params = ProcessParams(12, 0.05)
        tr = mean_jump_rate_exact(up3, params, (0, 1, 2))
        h0, enum = hitting_probabilities(up3, params, (0, 1, 2), 0)
        lam = up3.holding
        escape = tr.raw[0, 1] + tr.raw[0, 2]
        ret = sum(params.n * params.d * up3.rates[0, z]
                  * h0[enum.rank(tuple(params.n - 1 if i == 0 else (1 if i == z else 0)
                                       for i in range(3)))]
                  for z in (1, 2))
        assert escape == pytest.approx(params.n * params.d * lam[0] - ret,
                                       rel=1e-10)

    def test_generator_rows_sum_to_zero(self, up3):
        tr = mean_jump_rate_exact(up3, ProcessParams(10, 0.05), (0, 1, 2))
        gen = tr.generator()
        assert np.abs(gen.sum(axis=1)).max() <= 1e-14


class TestFlows:
    def test_two_site_example(self, two_sym):
        params = ProcessParams(2, 0.1)
        mu = stationary_exact(two_sym, params)
        up, down = flow(two_sym, params, mu, (0, 1), 0, 0)
        assert up == pytest.approx(11 / 120, abs=1e-14)
        assert down == pytest.approx(11 / 120, abs=1e-14)

    def test_full_set_flow_symmetry(self, up3):
        params = ProcessParams(20, 1e-3)
        mu = stationary_exact(up3, params)
        for x in range(3):
            up, down = flow_profile(up3, params, mu, (0, 1, 2), x)
            assert np.abs(up - down).max() <= 1e-12

    def test_k_out_of_range(self, two_sym):
        params = ProcessParams(2, 0.1)
        mu = stationary_exact(two_sym, params)
        with pytest.raises(ValueError):
            flow(two_sym, params, mu, (0, 1), 0, 2)


class TestMFunction:
    def test_metastable_states_vanish(self, up3):
        mu = stationary_exact(up3, ProcessParams(5, 0.1))
        vals = m_function(mu, (0, 1, 2))
        for x in range(3):
            assert vals[mu.enum.xi_index(x)] == 0.0

    def test_two_site_value(self, two_sym):
        mu = stationary_exact(two_sym, ProcessParams(2, 0.1))
        vals = m_function(mu, (0, 1))
        assert vals[mu.enum.rank((1, 1))] == pytest.approx(1 / 12, abs=1e-14)

    def test_single_site_region(self, two_sym):
        mu = stationary_exact(two_sym, ProcessParams(2, 0.1))
        vals = m_function(mu, (0,))
        counts = mu.enum.counts_matrix()
        assert vals == pytest.approx(mu.weights * counts[:, 0])


def _brute_reciprocal(n, k):
    total = Fraction(0)

    def rec(rem, parts, prod):
        nonlocal total
        if parts == 1:
            total += prod / rem
            return
        for a in range(1, rem - parts + 2):
            rec(rem - a, parts - 1, prod / a)

    rec(n, k, Fraction(1))
    return total


class TestReciprocalSums:
    def test_single_part(self):
        for n in (1, 7, 50):
            assert reciprocal_sum(n, 1).value == Fraction(1, n)

    def test_spot_values(self):
        assert reciprocal_sum(3, 2).value == Fraction(1)
        assert reciprocal_sum(4, 2).value == Fraction(11, 12)

    def test_recursion_matches_enumeration(self):
        for n in range(1, 11):
            for k in range(1, min(n, 5) + 1):
                assert reciprocal_sum(n, k).value == _brute_reciprocal(n, k)

    def test_bound_small_grid(self):
        for n in range(1, 61):
            for k in range(1, min(n, 6) + 1):
                assert reciprocal_sum(n, k).within_bound

    def test_float_mode_beyond_exact_limit(self):
        res = reciprocal_sum(1000, 3)
        assert isinstance(res.value, float)
        assert res.within_bound

    def test_out_of_range(self):
        with pytest.raises(OutOfRange):
            reciprocal_sum(5, 6)
        with pytest.raises(OutOfRange):
            reciprocal_sum(20_000, 2)

    def test_bound_helper_exact_at_k1(self):
        # the k = 1 bound is an equality; rational comparison must accept it
        assert reciprocal_bound_holds(Fraction(1, 3), 3, 1)
