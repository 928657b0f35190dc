from __future__ import annotations

import numpy as np
import pytest

from fedcausal.analytics import TheoryPrediction, misinformation_threshold, predict
from fedcausal.beliefs import HypothesisSpace
from fedcausal.errors import FingerprintMismatchError, ReplicaError, UsageError
from fedcausal.harness import (
    CHUNK_SIZE,
    compare_to_theory,
    empirical_impact,
    find_crossing,
    fixed_belief_for_log_ratio,
    run_ensemble,
    sweep,
    tail_window,
)
from fedcausal.likelihoods import GaussianMeanModel, LikelihoodStreamSource
from fedcausal.oracle import asymmetric_intervened_steady_state
from fedcausal.protocol import AgentSpec, Mode, Scenario, run_trial
from fedcausal.reporting import timeseries_csv

from conftest import REF_H1_MEANS, REF_PARTICIPATION, REF_WEIGHTS, reference_informativeness, reference_scenario


def test_tail_window():
    assert tail_window(500) == 50 and tail_window(5) == 1 and tail_window(0) == 0


class TestEnsemble:
    def test_single_replica_is_the_trace(self):
        scen = reference_scenario(Mode.SYMMETRIC)
        res = run_ensemble(scen, 40, 1, 5)
        tr = run_trial(scen, 40, 5)
        assert np.array_equal(res.mean_lbr, tr.lbr)
        assert np.array_equal(res.mean_belief_true, np.exp(tr.fc_log[:, 0]))
        assert np.all(res.se_lbr == 0)

    def test_parallelism_does_not_change_results(self):
        scen = reference_scenario(Mode.ASYMMETRIC)
        replicas = 2 * CHUNK_SIZE + 5
        a = run_ensemble(scen, 60, replicas, 99, parallelism=1)
        b = run_ensemble(scen, 60, replicas, 99, parallelism=8)
        assert np.array_equal(a.mean_lbr, b.mean_lbr) and np.array_equal(a.se_lbr, b.se_lbr)
        assert np.array_equal(a.tail_lbr, b.tail_lbr)
        assert timeseries_csv(a) == timeseries_csv(b)

    def test_replica_prefix_stability(self):
        scen = reference_scenario(Mode.SYMMETRIC)
        a = run_ensemble(scen, 20, 70, 1)
        b = run_ensemble(scen, 20, 3, 1)
        assert np.array_equal(a.tail_lbr[:3], b.tail_lbr)

    def test_zero_horizon(self):
        res = run_ensemble(reference_scenario(), 0, 4, 0)
        assert res.mean_lbr.shape == (0, 2)
        assert timeseries_csv(res).strip().splitlines()[-1].startswith("step,")

    def test_standard_error_scaling(self):
        scen = reference_scenario(Mode.SYMMETRIC)
        small = run_ensemble(scen, 500, 250, 7).se_lbr[-1, 1]
        large = run_ensemble(scen, 500, 1000, 7).se_lbr[-1, 1]
        assert abs(small / large / 2.0 - 1.0) <= 0.2

    def test_failing_replica_is_named(self):
        src = LikelihoodStreamSource(np.zeros((25, 2)), "cam", segmented=True)
        scen = Scenario(
            Mode.SYMMETRIC,
            HypothesisSpace.binary(),
            [AgentSpec(src, 0.5, 0.5), AgentSpec(GaussianMeanModel([0, 1]), 0.5, 0.5)],
        )
        with pytest.raises(ReplicaError) as exc:
            run_ensemble(scen, 10, 4, 0)
        assert exc.value.replica == 2

    def test_asymmetric_simulation_tracks_exact_recursion(self):
        scen = reference_scenario(Mode.ASYMMETRIC)
        res = run_ensemble(scen, 500, 400, 3)
        d = reference_informativeness().d[:, 1]
        exact = asymmetric_intervened_steady_state(REF_WEIGHTS, REF_PARTICIPATION, d, 0, 0.0)
        assert abs(res.terminal_lbr[1] - exact) <= 3 * res.terminal_lbr_se[1]


class TestCompare:
    def test_equal_values_pass(self):
        scen = reference_scenario(Mode.SYNCHRONOUS)
        res = run_ensemble(scen, 50, 8, 0)
        pred = TheoryPrediction(scen.fingerprint(), scen.mode, 0, res.terminal_lbr.copy(), 0)
        report = compare_to_theory(res, pred)
        assert report.passed and report.rows[0].abs_deviation == 0.0

    def test_wrong_theory_fails(self):
        scen = reference_scenario(Mode.SYNCHRONOUS)
        res = run_ensemble(scen, 500, 50, 0)
        good = predict(scen)
        bad = TheoryPrediction(good.scenario_fingerprint, good.mode, 0, good.lambda_inf * 10, 0)
        assert compare_to_theory(res, good).passed
        assert not compare_to_theory(res, bad).passed

    def test_fingerprint_mismatch(self):
        res = run_ensemble(reference_scenario(Mode.SYNCHRONOUS), 5, 2, 0)
        with pytest.raises(FingerprintMismatchError):
            compare_to_theory(res, predict(reference_scenario(Mode.SYMMETRIC)))


class TestEmpiricalImpact:
    def test_silent_agent(self):
        base = reference_scenario(Mode.SYMMETRIC, intervene=False).with_participation(0, 0.0)
        est = empirical_impact(base, base.with_intervention(0), 300, 64, 1)
        assert est.estimate < 1e-6 and est.raw_estimate < 1e-6

    def test_single_agent_three_hypotheses(self):
        base = Scenario(Mode.SYNCHRONOUS, HypothesisSpace(("a", "b", "c")), [AgentSpec(GaussianMeanModel([0, 1, 2]), 1.0)])
        est = empirical_impact(base, base.with_intervention(0), 100, 8, 1)
        assert est.estimate == pytest.approx(2 / 3, abs=1e-12)
        assert est.raw_estimate == pytest.approx(2 / 3, abs=1e-12)

    def test_requires_matching_scenarios(self):
        base = reference_scenario(Mode.SYMMETRIC, intervene=False)
        with pytest.raises(ValueError):
            empirical_impact(base, base.with_mode(Mode.ASYMMETRIC).with_intervention(0), 10, 2, 0)

    def test_symmetric_increases_with_participation(self):
        rows = sweep("p_m", [0.2, 0.4, 0.6, 0.8, 1.0], reference_scenario(Mode.SYMMETRIC), 500, 200, 4)
        est = [r.impact_empirical for r in rows]
        assert all(b > a for a, b in zip(est, est[1:]))


class TestSweep:
    def test_empty(self):
        assert sweep("p_m", [], reference_scenario()) == []

    def test_unknown_parameter(self):
        with pytest.raises(UsageError):
            sweep("pi", [0.1], reference_scenario())

    def test_needs_intervention(self):
        with pytest.raises(UsageError):
            sweep("c", [0.1], reference_scenario(intervene=False))

    def test_asymmetric_flat(self):
        rows = sweep("p_m", np.linspace(0.1, 1, 10), reference_scenario(Mode.ASYMMETRIC), empirical=False)
        assert len({r.impact_analytic for r in rows}) == 1

    def test_replicas_and_horizon(self):
        rows = sweep("horizon", [0, 20], reference_scenario(), replicas=4)
        assert rows[0].lambda_empirical is None and rows[1].lambda_empirical is not None
        rows = sweep("replicas", [2, 3], reference_scenario(), horizon=20)
        assert rows[0].impact_empirical != rows[1].impact_empirical

    def test_c_sweep_crossing(self):
        grid = np.arange(-14.0, 2.01, 0.5)
        asym = sweep("c", grid, reference_scenario(Mode.ASYMMETRIC), empirical=False)
        sym = sweep("c", grid, reference_scenario(Mode.SYMMETRIC), empirical=False)
        x = find_crossing(grid, [r.lambda_analytic[1] for r in asym], [r.lambda_analytic[1] for r in sym])
        t = misinformation_threshold(REF_WEIGHTS, REF_PARTICIPATION, reference_informativeness(), 0, 1)
        assert abs(-x - t) <= 0.5

    def test_log_ratio_belief(self):
        space = HypothesisSpace(("a", "b", "c"), 1)
        b = fixed_belief_for_log_ratio(space, 1.5)
        lm = b.log_mass
        assert lm[1] - lm[0] == pytest.approx(1.5) and lm[1] - lm[2] == pytest.approx(1.5)


def test_find_crossing():
    assert find_crossing([0, 1, 2], [0, 1, 2], [2, 1, 0]) == 1.0
    assert find_crossing([0, 1], [0, 1], [0.5, 0.5]) == 0.5
    assert find_crossing([0, 1], [0, 1], [5, 5]) is None


def test_reference_means_consistent():
    assert np.allclose(reference_informativeness().d[:, 1], REF_H1_MEANS**2 / 2)
