from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.optimize import brentq

from fedcausal.analytics import (
    causal_impact,
    impact_report,
    lambda_inf_asymmetric,
    lambda_inf_symmetric,
    lambda_inf_synchronous,
    misinformation_threshold,
    predict,
    scenario_impact_report,
)
from fedcausal.beliefs import Belief
from fedcausal.errors import InformativenessUnavailableError, UndefinedThresholdError
from fedcausal.likelihoods import InformativenessMatrix, LikelihoodStreamSource
from fedcausal.protocol import AgentSpec, Mode, Scenario

from conftest import REF_PARTICIPATION, REF_WEIGHTS, reference_scenario

# frozen from exact rational arithmetic on the reference configuration
SYNC_REF = 2.375  # 19/8
ASYM_REF = 1.285  # 257/200
SYM_REF = 5418709625 / 1757248896  # 3.08363239683037
THRESHOLD_REF = 79016119841 / 8786244480  # 8.99316198415185
DISPERSION_ASYM = 0.00364509361603829597
DISPERSION_SYM = 0.0164269217473199075


def _binary(d):
    d = np.asarray(d, dtype=float)
    return InformativenessMatrix(np.column_stack([np.zeros(d.size), d]), 0)


def _random(rng, K=None):
    K = K or int(rng.integers(2, 9))
    pi = rng.dirichlet(np.ones(K))
    return pi, 1.0 - 0.95 * rng.random(K), _binary(2.0 * rng.random(K)), int(rng.integers(K))


class TestSynchronous:
    def test_reference_value(self, ref_d):
        assert lambda_inf_synchronous(REF_WEIGHTS, ref_d, 0)[1] == pytest.approx(SYNC_REF, abs=1e-12)

    def test_uninformative_partner(self):
        lam = lambda_inf_synchronous([0.5, 0.5], _binary([0.3, 0.0]), 0)
        assert lam[1] == 0.0 and causal_impact(lam, 0) == 0.5

    def test_log_ratio_is_additive(self, ref_d):
        mu = Belief.from_probs([0.9, 0.1])
        shift = lambda_inf_synchronous(REF_WEIGHTS, ref_d, 0, mu) - lambda_inf_synchronous(REF_WEIGHTS, ref_d, 0)
        assert shift[1] == pytest.approx(math.log(9), abs=1e-12)


class TestAsymmetric:
    def test_reference_value(self, ref_d):
        assert lambda_inf_asymmetric(REF_WEIGHTS, REF_PARTICIPATION, ref_d, 0)[1] == pytest.approx(ASYM_REF, abs=1e-12)

    def test_uniform_independent_of_p_m(self, ref_d):
        vals = {
            float(lambda_inf_asymmetric(REF_WEIGHTS, np.r_[pm, REF_PARTICIPATION[1:]], ref_d, 0)[1])
            for pm in np.linspace(0.05, 1.0, 20)
        }
        assert len(vals) == 1


class TestSymmetric:
    def test_reference_value(self, ref_d):
        assert lambda_inf_symmetric(REF_WEIGHTS, REF_PARTICIPATION, ref_d, 0)[1] == pytest.approx(SYM_REF, abs=1e-12)

    def test_silent_agent_has_no_impact(self, ref_d):
        p = REF_PARTICIPATION.copy()
        p[0] = 0.0
        lam = lambda_inf_symmetric(REF_WEIGHTS, p, ref_d, 0)
        assert lam[1] == np.inf and causal_impact(lam, 0) == 0.0

    def test_vanishing_participation(self, ref_d):
        impacts = []
        for pm in (1e-1, 1e-2, 1e-3):
            p = REF_PARTICIPATION.copy()
            p[0] = pm
            impacts.append(causal_impact(lambda_inf_symmetric(REF_WEIGHTS, p, ref_d, 0), 0))
        assert impacts[0] > impacts[1] > impacts[2] and impacts[2] < 1e-300

    def test_strictly_decreasing_in_p_m(self, ref_d):
        grid = np.linspace(0.05, 1.0, 40)
        lam = [lambda_inf_symmetric(REF_WEIGHTS, np.r_[pm, REF_PARTICIPATION[1:]], ref_d, 0)[1] for pm in grid]
        assert np.all(np.diff(lam) < 0)


@pytest.mark.parametrize("seed", range(100))
def test_reductions_at_full_participation(seed):
    rng = np.random.default_rng(seed)
    pi, _, d, m = _random(rng)
    c = float(rng.normal())
    ones = np.ones(pi.size)
    ref = lambda_inf_synchronous(pi, d, m, c=c)
    assert np.array_equal(lambda_inf_asymmetric(pi, ones, d, m, c=c), ref)
    assert np.array_equal(lambda_inf_symmetric(pi, ones, d, m, c=c), ref)


class TestCausalImpact:
    def test_limits(self):
        assert causal_impact([0.0, np.inf, np.inf], 0) == 0.0
        assert causal_impact([0.0, 0.0], 0) == 0.5

    def test_reference_value(self):
        assert causal_impact([0.0, SYNC_REF], 0) == pytest.approx(0.0850990450070202364571, abs=1e-14)

    def test_monotone(self):
        lam = np.linspace(-3, 5, 50)
        c = [causal_impact([0.0, x, 1.0], 0) for x in lam]
        assert np.all(np.diff(c) < 0)


class TestThreshold:
    def test_reference_value(self, ref_d):
        t = misinformation_threshold(REF_WEIGHTS, REF_PARTICIPATION, ref_d, 0, 1)
        assert t == pytest.approx(THRESHOLD_REF, abs=1e-12)

    def test_uninformative_others(self):
        d = _binary([0.7, 0.0, 0.0])
        assert misinformation_threshold([0.2, 0.3, 0.5], [0.5, 0.5, 0.5], d, 0, 1) == 0.0

    def test_linear_in_d(self, ref_d):
        t1 = misinformation_threshold(REF_WEIGHTS, REF_PARTICIPATION, ref_d, 0, 1)
        t2 = misinformation_threshold(REF_WEIGHTS, REF_PARTICIPATION, InformativenessMatrix(2 * ref_d.d, 0), 0, 1)
        assert t2 == pytest.approx(2 * t1, rel=1e-14)

    @pytest.mark.parametrize("pm", [0.0, 1.0])
    def test_undefined_at_boundaries(self, ref_d, pm):
        p = REF_PARTICIPATION.copy()
        p[0] = pm
        with pytest.raises(UndefinedThresholdError):
            misinformation_threshold(REF_WEIGHTS, p, ref_d, 0, 1)

    @pytest.mark.parametrize("seed", range(20))
    def test_is_curve_crossing(self, seed):
        pi, p, d, m = _random(np.random.default_rng(seed))
        p[m] = min(p[m], 0.95)

        def gap(strength):
            c = -strength
            return (
                lambda_inf_asymmetric(pi, p, d, m, c=c)[1] - lambda_inf_symmetric(pi, p, d, m, c=c)[1]
            )

        t = misinformation_threshold(pi, p, d, m, 1)
        root = brentq(gap, t - 10 * (1 + abs(t)), t + 10 * (1 + abs(t)), xtol=1e-14, rtol=1e-15)
        assert root == pytest.approx(t, rel=1e-9, abs=1e-9)


class TestImpactReport:
    def test_equal_agents_equal_scores(self):
        K = 5
        rep = impact_report(Mode.SYMMETRIC, np.full(K, 1 / K), np.full(K, 0.4), _binary(np.full(K, 0.3)))
        assert np.allclose(rep.normalized, 1 / K, atol=1e-15)

    def test_reference_dispersion(self, ref_d):
        asym = impact_report(Mode.ASYMMETRIC, REF_WEIGHTS, REF_PARTICIPATION, ref_d)
        sym = impact_report(Mode.SYMMETRIC, REF_WEIGHTS, REF_PARTICIPATION, ref_d)
        assert asym.dispersion == pytest.approx(DISPERSION_ASYM, rel=1e-10)
        assert sym.dispersion == pytest.approx(DISPERSION_SYM, rel=1e-10)
        for rep in (asym, sym):
            assert abs(rep.normalized.sum() - 1.0) <= 1e-9

    def test_full_participation_modes_agree(self):
        d = _binary([0.4, 0.9])
        reps = [impact_report(m, [0.3, 0.7], [1.0, 1.0], d) for m in Mode]
        for r in reps[1:]:
            assert np.array_equal(r.impacts, reps[0].impacts)

    def test_single_agent(self):
        from fedcausal.beliefs import HypothesisSpace
        from fedcausal.likelihoods import GaussianMeanModel

        scen = Scenario(Mode.SYNCHRONOUS, HypothesisSpace(("a", "b", "c")), [AgentSpec(GaussianMeanModel([0, 1, 2]), 1.0)])
        rep = scenario_impact_report(scen)
        assert rep.impacts[0] == pytest.approx(1 - 1 / 3, abs=1e-15)

    def test_streams_refused(self):
        from fedcausal.beliefs import HypothesisSpace

        scen = Scenario(Mode.SYNCHRONOUS, HypothesisSpace.binary(), [AgentSpec(LikelihoodStreamSource(np.zeros((2, 2))), 1.0)])
        with pytest.raises(InformativenessUnavailableError):
            scenario_impact_report(scen)

    def test_unidentifiable_refused(self):
        with pytest.raises(ValueError):
            impact_report(Mode.SYNCHRONOUS, [0.5, 0.5], [1, 1], _binary([0.0, 0.0]))


def test_predict_carries_fingerprint():
    scen = reference_scenario(Mode.SYMMETRIC)
    pred = predict(scen)
    assert pred.scenario_fingerprint == scen.fingerprint()
    assert pred.lambda_inf[1] == pytest.approx(SYM_REF, abs=1e-12)
    with pytest.raises(ValueError):
        predict(scen.without_intervention())
