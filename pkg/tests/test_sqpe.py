#!/usr/bin/env python3
"""
Tests for the single-step phase estimation estimators
"""

import math
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from sqpe_estimators.deuteron import deuteron
from sqpe_estimators.operators import (
    ObservableExpansion,
    PureState,
    eigenstate,
    exact_sine_expectation,
    expectation,
    moments,
    random_observable,
)
from sqpe_estimators.reports import EstimatorError, InfeasibleTargetError
from sqpe_estimators.shot_sim import RngStream, ShotBatch, sample_ancilla_z
from sqpe_estimators.sqpe import (
    INFEASIBLE_COST,
    BiasMode,
    ExactOracle,
    MleEstimate,
    PairCombiner,
    SearchDomain,
    ShotSplit,
    TimeStepPair,
    approximate_linear_step,
    bias_a1,
    bias_a2,
    cubic_bias_bound,
    cubic_run,
    design_cost,
    design_lattice,
    design_next_pair,
    estimator_K,
    exact_bias,
    f_K,
    fisher_variances,
    initial_pair,
    likelihood_score,
    linear_inflation,
    linear_mse,
    linear_run,
    log_likelihood,
    mle_from_probabilities,
    mle_pair,
    model_probability,
    optimal_time_step,
    plan,
    split_shots,
    trotter_scaling,
    truncation_bias_bound,
    variance_upper_bound,
)


class TestPlanning:
    """Order-K time steps and shot counts"""

    def setup_method(self):
        bench = deuteron()
        self.obs = bench.observable
        self.state = bench.ground_state
        self.eps = 0.01 * abs(expectation(self.obs, self.state))
        self.m1 = moments(self.obs, self.state, 1).m(1)

    def test_f1(self):
        """f(1) = sqrt(3) / 4"""
        assert f_K(1) == pytest.approx(math.sqrt(3) / 4)

    def test_f_decreases(self):
        """Higher orders have smaller prefactors"""
        values = [f_K(K) for K in range(1, 7)]
        assert all(b < a for a, b in zip(values, values[1:]))

    def test_invalid_order(self):
        """K must be at least 1"""
        with pytest.raises(EstimatorError):
            f_K(0)
        with pytest.raises(EstimatorError):
            trotter_scaling(0)

    def test_linear_plan_deuteron(self):
        """tau_opt about 0.0879 and 4.3e5 shots at 1%"""
        p = plan(1, self.eps, self.m1)
        assert p.tau_opt == pytest.approx(0.0879, abs=5e-4)
        assert 4.0e5 <= p.predicted_shots <= 4.6e5

    def test_bias_at_optimum_is_third_of_mse(self):
        """At tau_opt the squared bias is eps^2 / (2K + 1)"""
        for K, m in ((1, self.m1), (2, moments(self.obs, self.state, 2).m(2))):
            p = plan(K, self.eps, m)
            assert p.bias_bound_at_tau ** 2 == pytest.approx(self.eps ** 2 / (2 * K + 1), rel=1e-9)

    def test_trotter_split_cost(self):
        """Halving the budget multiplies the shots by 2^(1 + 1/K)"""
        for K in (1, 2, 3):
            base = plan(K, self.eps, 10.0).predicted_shots
            split = plan(K, self.eps, 10.0, trotter_split=True).predicted_shots
            assert split / base == pytest.approx(2 ** (1 + 1 / K))

    def test_plan_rejects_bad_input(self):
        """Zero moment or target is rejected"""
        with pytest.raises(EstimatorError):
            plan(1, self.eps, 0.0)
        with pytest.raises(EstimatorError):
            plan(1, 0.0, 1.0)

    def test_truncation_bias(self):
        """tau^(2K) |m_K| / (2K+1)!"""
        assert truncation_bias_bound(1, 0.1, 12.0) == pytest.approx(0.01 * 12 / 6)


class TestEstimatorK:
    """Truncated sine-series estimator"""

    def setup_method(self):
        self.rng = np.random.default_rng(3)

    def test_zero_tau_rejected(self):
        """tau = 0 is degenerate"""
        with pytest.raises(EstimatorError):
            estimator_K(0.1, 0.0)

    def test_linear_bias_bound_holds(self):
        """|O_1(tau) - <O>| <= tau^2 E|lambda|^3 / 6 with the exact ancilla mean"""
        for _ in range(20):
            obs = random_observable(2, self.rng)
            state = PureState.random(2, self.rng)
            tau = float(self.rng.uniform(0.01, 0.5))
            z = -exact_sine_expectation(obs, state, tau)
            table = moments(obs, state, 1)
            error = abs(estimator_K(z, tau) - table.mean)
            assert error <= truncation_bias_bound(1, tau, table.absolute_entries[1]) + 1e-12

    def test_known_moment_reduces_bias(self):
        """Supplying <O^3> lowers the error for small tau"""
        bench = deuteron()
        tau = 0.05
        z = -exact_sine_expectation(bench.observable, bench.ground_state, tau)
        exact = expectation(bench.observable, bench.ground_state)
        m1 = moments(bench.observable, bench.ground_state, 1).m(1)
        assert abs(estimator_K(z, tau, [m1]) - exact) < abs(estimator_K(z, tau) - exact)


class TestLinear:
    """Fixed-tau linear algorithm"""

    def setup_method(self):
        bench = deuteron()
        self.obs = bench.observable
        self.state = bench.ground_state
        self.exact = expectation(self.obs, self.state)
        self.eps = 0.01 * abs(self.exact)
        self.m1 = moments(self.obs, self.state, 1).m(1)
        self.tau = optimal_time_step(1, self.eps, self.m1)

    def test_reaches_one_percent(self):
        """tau_opt reaches 1% in 3e5 to 7e5 shots"""
        run = linear_run(self.obs, self.state, self.tau, self.eps, None, RngStream(31))
        assert run.reached
        assert 3e5 <= run.report.total_shots <= 7e5
        assert abs(run.report.value - self.exact) < 5 * self.eps

    def test_half_step_inflation(self):
        """tau_opt / 2 costs 2 to 3.7 times more"""
        full = linear_run(self.obs, self.state, self.tau, self.eps, None, RngStream(1))
        half = linear_run(self.obs, self.state, self.tau / 2, self.eps, None, RngStream(2))
        assert 2.0 <= half.report.total_shots / full.report.total_shots <= 3.7

    def test_bias_above_target_is_infeasible(self):
        """A tau whose bias alone exceeds the target is rejected"""
        with pytest.raises(InfeasibleTargetError):
            linear_run(self.obs, self.state, 1.0, self.eps, None, RngStream(1))

    def test_shot_cap_stops_run(self):
        """The cap ends the run without reaching the target"""
        run = linear_run(self.obs, self.state, self.tau, self.eps, None, RngStream(1), shot_cap=5_000)
        assert not run.reached
        assert run.report.total_shots == 5_000

    def test_mse_formula(self):
        """(1 - z^2) / (tau^2 N) + tau^4 m1^2 / 36"""
        assert linear_mse(0.0, 0.1, 100, 6.0) == pytest.approx(1 / (0.01 * 100) + 1e-4 * 36 / 36)

    def test_overestimated_eigenvalue(self):
        """lambda_u = lambda gives tau_opt; doubling it inflates by 2^(3/2)"""
        lam = self.exact
        assert approximate_linear_step(0.01, abs(lam)) == pytest.approx(self.tau, rel=1e-3)
        assert linear_inflation(2 * abs(lam), lam) == pytest.approx(2 ** 1.5)


class TestCubicLikelihood:
    """Two-time-step maximum likelihood"""

    def setup_method(self):
        self.pair = TimeStepPair(0.15, 0.3)

    def test_degenerate_pair(self):
        """Equal time steps are rejected"""
        with pytest.raises(EstimatorError):
            TimeStepPair(0.2, 0.2)

    def test_recovers_model_parameters(self):
        """Closed form inverts the cubic model exactly"""
        mu, eta = -2.0, -9.5
        p_a = float(model_probability(self.pair.tau_a, mu, eta))
        p_b = float(model_probability(self.pair.tau_b, mu, eta))
        assert mle_from_probabilities(p_a, p_b, self.pair) == pytest.approx((mu, eta))

    def test_score_vanishes_at_mle(self):
        """Gradient of the log-likelihood is zero at the estimate"""
        batch_a, batch_b = ShotBatch(1170, 2000, 0.58), ShotBatch(1290, 2000, 0.64)
        mu, eta = mle_from_probabilities(batch_a.frequency, batch_b.frequency, self.pair)
        d_mu, d_eta = likelihood_score(mu, eta, batch_a, batch_b, self.pair)
        assert d_mu == pytest.approx(0.0, abs=1e-6)
        assert d_eta == pytest.approx(0.0, abs=1e-6)
        assert log_likelihood(mu, eta, batch_a, batch_b, self.pair) > log_likelihood(
            mu + 0.1, eta, batch_a, batch_b, self.pair
        )

    def test_score_matches_finite_differences(self):
        """Analytic score agrees with centered differences on random inputs"""
        rng = np.random.default_rng(31)
        h = 1e-6
        for _ in range(20):
            mu, eta = rng.uniform(-2.0, 2.0), rng.uniform(-10.0, 10.0)
            ta, tb = sorted(rng.uniform(0.05, 0.3, size=2))
            pair = TimeStepPair(float(ta), float(tb) + 1e-3)
            x_a, x_b = rng.integers(400, 1600, size=2)
            batch_a, batch_b = ShotBatch(int(x_a), 2000, 0.5), ShotBatch(int(x_b), 2000, 0.5)

            def ll(m, e):
                return log_likelihood(m, e, batch_a, batch_b, pair)

            fd_mu = (ll(mu + h, eta) - ll(mu - h, eta)) / (2 * h)
            fd_eta = (ll(mu, eta + h) - ll(mu, eta - h)) / (2 * h)
            d_mu, d_eta = likelihood_score(mu, eta, batch_a, batch_b, pair)
            assert d_mu == pytest.approx(fd_mu, rel=1e-5, abs=1e-5)
            assert d_eta == pytest.approx(fd_eta, rel=1e-5, abs=1e-5)

    def test_mle_pair_swap_symmetry(self):
        """Exchanging the two time steps and their data leaves the fit unchanged"""
        batch_a, batch_b = ShotBatch(1170, 2000, 0.58), ShotBatch(1290, 2000, 0.64)
        forward = mle_pair(batch_a, batch_b, self.pair)
        backward = mle_pair(batch_b, batch_a, TimeStepPair(self.pair.tau_b, self.pair.tau_a))
        assert backward.mu == pytest.approx(forward.mu, rel=1e-12)
        assert backward.eta == pytest.approx(forward.eta, rel=1e-12)
        assert backward.var_mu == pytest.approx(forward.var_mu, rel=1e-12)
        assert backward.var_eta == pytest.approx(forward.var_eta, rel=1e-12)
        assert backward.bias_bound == pytest.approx(forward.bias_bound, rel=1e-12)

    def test_fisher_matches_replicas(self):
        """Fisher variances agree with replica variances within 20%"""
        bench = deuteron()
        rng = RngStream(17)
        estimates = []
        for _ in range(1000):
            a = sample_ancilla_z(bench.observable, bench.ground_state, self.pair.tau_a, 2000, None, rng)
            b = sample_ancilla_z(bench.observable, bench.ground_state, self.pair.tau_b, 2000, None, rng)
            estimates.append(mle_from_probabilities(a.frequency, b.frequency, self.pair))
        p_a, p_b = a.true_probability, b.true_probability
        var_mu, var_eta = fisher_variances(p_a, p_b, 2000, 2000, self.pair)
        est = np.array(estimates)
        assert np.var(est[:, 0]) == pytest.approx(var_mu, rel=0.2)
        assert np.var(est[:, 1]) == pytest.approx(var_eta, rel=0.2)

    def test_mle_pair_report(self):
        """mle_pair carries Fisher variances and the A1 bias"""
        est = mle_pair(ShotBatch(1170, 2000, 0.58), ShotBatch(1290, 2000, 0.64), self.pair)
        assert est.var_mu > 0 and est.var_eta > 0
        assert est.bias_bound == pytest.approx(bias_a1(est.mu, est.eta, self.pair))

    def test_a2_below_a1(self):
        """The tighter estimator never exceeds A1"""
        assert bias_a2(2.0, 9.0, self.pair) <= bias_a1(2.0, 9.0, self.pair)

    def test_cubic_bias_bound_holds(self):
        """|B_E| <= E|lambda|^5 / 120 * ta^2 tb^2 (ta^2 + tb^2) / |ta^2 - tb^2| on random instances"""
        rng = np.random.default_rng(23)
        for _ in range(30):
            obs = random_observable(2, rng)
            state = PureState.random(2, rng)
            ta, tb = sorted(rng.uniform(0.01, 0.4, size=2))
            if tb - ta < 1e-3:
                continue
            pair = TimeStepPair(float(ta), float(tb))
            fifth = moments(obs, state, 2).absolute_entries[2]
            assert abs(exact_bias(obs, state, pair)) <= cubic_bias_bound(fifth, pair) + 1e-12

    def test_variance_upper_bound(self):
        """P(1 - P) <= 1/4 bounds the Fisher variance"""
        var_mu, _ = fisher_variances(0.3, 0.6, 1, 1, self.pair)
        assert var_mu <= variance_upper_bound(self.pair)


class TestDesign:
    """Adaptive choice of the next time-step pair"""

    def setup_method(self):
        bench = deuteron()
        self.obs = bench.observable
        self.state = bench.ground_state
        self.domain = SearchDomain.for_observable(self.obs, tau_max=0.5)
        self.oracle = ExactOracle(self.obs, self.state)
        self.current = MleEstimate(-2.1, -9.5, 1.0, 10.0, 0.0)

    def test_default_upper_is_pi_over_norm(self):
        """Without tau_max the domain ends at pi / ||O||_1"""
        assert SearchDomain.for_observable(self.obs).upper == pytest.approx(math.pi / 205.0)

    def test_a2_cap(self):
        """A2 restricts max(tau)^2 < pi / ||O||_1"""
        assert self.domain.upper_for(BiasMode.A2) < math.sqrt(math.pi / 205.0)
        assert self.domain.upper_for(BiasMode.A1) == 0.5

    def test_invalid_domain(self):
        """lower must be below upper"""
        with pytest.raises(EstimatorError):
            SearchDomain(lower=1.0, upper=0.5)

    def test_cost_infeasible_for_equal_steps(self):
        """tau_a = tau_b has no finite cost"""
        cost = design_cost(0.2, 0.2, self.current, 1, 40, BiasMode.A1)
        assert cost == INFEASIBLE_COST

    def test_exact_mode_needs_oracle(self):
        """Exact bias requires the spectral oracle"""
        with pytest.raises(EstimatorError):
            design_cost(0.1, 0.2, self.current, 1, 40, BiasMode.EXACT)

    def test_next_pair_in_domain(self):
        """The chosen pair is ordered and inside the domain"""
        for mode in BiasMode:
            pair = design_next_pair(self.current, 10, 40, mode, self.domain, self.oracle)
            assert self.domain.lower <= pair.tau_a < pair.tau_b <= self.domain.upper_for(mode)

    def test_refinement_never_worse_than_grid(self):
        """Refined cost is no worse than the best log-grid point"""
        pair = design_next_pair(self.current, 10, 40, BiasMode.A1, self.domain)
        best = float(design_cost(pair.tau_a, pair.tau_b, self.current, 10, 40, BiasMode.A1))
        taus = np.geomspace(self.domain.lower, self.domain.upper, self.domain.grid)
        a, b = np.meshgrid(taus, taus, indexing="ij")
        grid = np.where(a < b, design_cost(a, b, self.current, 10, 40, BiasMode.A1), INFEASIBLE_COST)
        assert best <= float(grid.min()) * (1 + 1e-9)

    def test_next_pair_on_lattice(self):
        """Designed steps are lattice points, so repeated designs pool"""
        lattice, _ = design_lattice(self.domain, BiasMode.A1)
        first = design_next_pair(self.current, 10, 40, BiasMode.A1, self.domain)
        again = design_next_pair(self.current, 10, 40, BiasMode.A1, self.domain)
        assert first.key() == again.key()
        assert first.tau_a in lattice and first.tau_b in lattice
        assert lattice[0] == self.domain.lower and lattice[-1] == self.domain.upper

    def test_steps_shrink_with_block_index(self):
        """Later blocks weight the bias more and pick shorter time steps"""
        pairs = [design_next_pair(self.current, i, 40, BiasMode.A1, self.domain) for i in (10, 100, 1000)]
        for earlier, later in zip(pairs, pairs[1:]):
            assert later.tau_a <= earlier.tau_a
            assert later.tau_b <= earlier.tau_b
        late = design_next_pair(self.current, 100_000, 40, BiasMode.A1, self.domain)
        assert late.tau_b < pairs[0].tau_b
        assert late.tau_a < pairs[0].tau_a

    def test_optimal_split_cost_not_above_even(self):
        """The optimal split never predicts a larger variance than the even one"""
        taus = np.geomspace(0.05, 0.5, 12)
        a, b = np.meshgrid(taus, taus, indexing="ij")
        mask = a < b
        even = design_cost(a[mask], b[mask], self.current, 0, 40, BiasMode.A1)
        optimal = design_cost(a[mask], b[mask], self.current, 0, 40, BiasMode.A1,
                              split=ShotSplit.OPTIMAL)
        assert np.all(optimal <= even * (1 + 1e-12))

    def test_split_shots(self):
        """Even split by default, optimal split favours the shorter step and keeps a floor"""
        pair = TimeStepPair(0.1, 0.4)
        assert split_shots(pair, 40, self.current) == (20, 20)
        assert split_shots(pair, 41, None, ShotSplit.OPTIMAL) == (20, 21)
        m_a, m_b = split_shots(pair, 40, self.current, ShotSplit.OPTIMAL)
        assert m_a + m_b == 40
        assert m_a > m_b
        assert m_b >= 40 // 8

    def test_initial_pair(self):
        """Seed pair starts below initial_max and is not degenerate"""
        pair = initial_pair(RngStream(4), self.domain, BiasMode.A1, 0.1)
        assert pair.tau_a <= 0.1
        assert pair.tau_a != pair.tau_b
        assert self.domain.lower <= pair.tau_b <= self.domain.upper


class TestCubicRun:
    """Block-wise adaptive cubic estimator"""

    def setup_method(self):
        bench = deuteron()
        self.obs = bench.observable
        self.state = bench.ground_state
        self.exact = expectation(self.obs, self.state)
        self.domain = SearchDomain.for_observable(self.obs, tau_max=0.5)

    def test_trace_shape(self):
        """One trace row per block, cumulative shots in block multiples"""
        run = cubic_run(self.obs, self.state, 1e-6, 40, BiasMode.A1, None, RngStream(5),
                        search_domain=self.domain, shot_cap=4_000)
        assert not run.reached
        assert len(run.trace) == 100
        assert [row.cumulative_shots for row in run.trace] == list(range(40, 4_001, 40))
        assert all(row.b_e is not None for row in run.trace)

    def test_deterministic(self):
        """Same seed, same trace"""
        kwargs = dict(search_domain=self.domain, shot_cap=2_000)
        a = cubic_run(self.obs, self.state, 1e-6, 40, BiasMode.A1, None, RngStream(9), **kwargs)
        b = cubic_run(self.obs, self.state, 1e-6, 40, BiasMode.A1, None, RngStream(9), **kwargs)
        assert [r.as_row() for r in a.trace] == [r.as_row() for r in b.trace]

    def test_loose_target_reached(self):
        """A 10% target is reached and the estimate is close"""
        eps = 0.1 * abs(self.exact)
        run = cubic_run(self.obs, self.state, eps, 40, BiasMode.EXACT, None, RngStream(6),
                        search_domain=self.domain, shot_cap=200_000)
        assert run.reached
        assert abs(run.report.value - self.exact) < 5 * eps

    def test_block_size_validated(self):
        """Blocks need at least one shot per time step"""
        with pytest.raises(EstimatorError):
            cubic_run(self.obs, self.state, 0.1, 1, BiasMode.A1, None, RngStream(1))

    def test_combiner_pools_identical_pairs(self):
        """Repeated pairs are pooled before fitting"""
        pair = TimeStepPair(0.1, 0.25)
        combiner = PairCombiner()
        first = (ShotBatch(12, 20, 0.6), ShotBatch(14, 20, 0.7))
        second = (ShotBatch(11, 20, 0.6), ShotBatch(15, 20, 0.7))
        combiner.add(pair, *first)
        combiner.add(pair, *second)
        assert combiner.pair_count == 1
        pooled = mle_pair(first[0].merge(second[0]), first[1].merge(second[1]), pair)
        mu, eta, var_mu, _ = combiner.combined()
        assert mu == pytest.approx(pooled.mu)
        assert var_mu == pytest.approx(pooled.var_mu)

    def test_combiner_inverse_variance_weights(self):
        """Distinct pairs combine with weights 1 / Var[mu]"""
        combiner = PairCombiner()
        p1, p2 = TimeStepPair(0.1, 0.25), TimeStepPair(0.12, 0.3)
        b1 = (ShotBatch(12, 20, 0.6), ShotBatch(14, 20, 0.7))
        b2 = (ShotBatch(30, 40, 0.7), ShotBatch(33, 40, 0.8))
        combiner.add(p1, *b1)
        combiner.add(p2, *b2)
        e1, e2 = mle_pair(*b1, p1), mle_pair(*b2, p2)
        w1, w2 = 1 / e1.var_mu, 1 / e2.var_mu
        mu, _, var_mu, _ = combiner.combined()
        assert mu == pytest.approx((w1 * e1.mu + w2 * e2.mu) / (w1 + w2))
        assert var_mu == pytest.approx(1 / (w1 + w2))
        b_a1, b_a2, b_e = combiner.biases(mu, 1.0)
        assert b_a2 <= b_a1
        assert b_e is None

    def test_eigenstate_input(self):
        """Excited eigenstates work as well"""
        state = eigenstate(self.obs, 1)
        run = cubic_run(self.obs, state, 1e-6, 40, BiasMode.A2, None, RngStream(2),
                        shot_cap=400)
        assert len(run.trace) == 10

    def test_z_eigenstate_moments(self):
        """On |0> of Z both <O> and <O^3> are 1 and the fit recovers them"""
        obs = ObservableExpansion.from_paulis(0.0, {"Z": 1.0})
        state = PureState.basis(1, 0)
        run = cubic_run(obs, state, 1e-9, 40, BiasMode.A1, None, RngStream(12),
                        search_domain=SearchDomain.for_observable(obs, tau_max=0.5),
                        shot_cap=100_000, track_exact=False)
        est = run.estimate
        assert run.report.total_shots == 100_000
        assert abs(est.mu - 1.0) <= 3 * math.sqrt(est.var_mu) + est.bias_bound
        assert abs(est.eta - 1.0) <= 3 * math.sqrt(est.var_eta) + 0.05

    def test_optimal_split_shots_to_one_percent(self):
        """Median shots to 1% over six seeds lies in [1.7e4, 7e4] with the optimal split"""
        eps = 0.01 * abs(self.exact)
        shots = []
        for seed in range(301, 307):
            run = cubic_run(self.obs, self.state, eps, 40, BiasMode.A1, None, RngStream(seed),
                            search_domain=self.domain, shot_cap=1_000_000, track_exact=False,
                            shot_split=ShotSplit.OPTIMAL)
            assert run.reached
            shots.append(run.report.total_shots)
        assert 1.7e4 <= float(np.median(shots)) <= 7e4


if __name__ == "__main__":
    pytest.main([__file__, "-v", "--tb=short"])
