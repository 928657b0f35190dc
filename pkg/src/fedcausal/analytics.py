"""Closed-form steady-state log-belief ratios and causal impact scores.

Under do(psi_m := mu_m) the FC's expected log-belief ratio settles at a finite
value lambda_inf(theta); the causal impact of agent m is the mass the FC then
fails to place on the true hypothesis,

    C_m = 1 - 1 / (1 + sum_{theta != true} exp(-lambda_inf(theta))).

All functions return full H-vectors with a zero at the true index.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .beliefs import Belief
from .errors import UndefinedThresholdError
from .likelihoods import InformativenessMatrix, validate_global_identifiability
from .protocol import Mode, Scenario


def intervention_log_ratio(mu_m: Belief | None, true_index: int, num_hypotheses: int) -> np.ndarray:
    """c(theta) = log mu_m(true)/mu_m(theta); a uniform belief gives zeros."""
    if mu_m is None:
        return np.zeros(num_hypotheses)
    c = mu_m.log_mass[true_index] - mu_m.log_mass
    c[true_index] = 0.0
    return c


def _resolve_c(d: InformativenessMatrix, mu_m, c) -> np.ndarray:
    if c is not None:
        out = np.broadcast_to(np.asarray(c, dtype=float), (d.num_hypotheses,)).copy()
        out[d.true_index] = 0.0
        return out
    return intervention_log_ratio(mu_m, d.true_index, d.num_hypotheses)


def _others(weights, m):
    mask = np.ones(len(weights), dtype=bool)
    mask[m] = False
    return mask


def lambda_inf_synchronous(weights, d: InformativenessMatrix, m: int, mu_m: Belief | None = None, *, c=None):
    """(1/pi_m) sum_{k!=m} pi_k d_k(theta) + c(theta)."""
    pi = np.asarray(weights, dtype=float)
    others = _others(pi, m)
    drive = np.sum((pi[others])[:, None] * d.d[others], axis=0)
    lam = drive / pi[m] + _resolve_c(d, mu_m, c)
    lam[d.true_index] = 0.0
    return lam


def lambda_inf_asymmetric(
    weights, participation, d: InformativenessMatrix, m: int, mu_m: Belief | None = None, *, c=None
):
    """(1/pi_m) sum_{k!=m} pi_k p_k d_k(theta) + p_m c(theta)."""
    pi = np.asarray(weights, dtype=float)
    p = np.asarray(participation, dtype=float)
    others = _others(pi, m)
    drive = np.sum((pi[others] * p[others])[:, None] * d.d[others], axis=0)
    lam = drive / pi[m] + p[m] * _resolve_c(d, mu_m, c)
    lam[d.true_index] = 0.0
    return lam


def lambda_inf_symmetric(
    weights, participation, d: InformativenessMatrix, m: int, mu_m: Belief | None = None, *, c=None
):
    """(1/(pi_m p_m)) sum_{k!=m} pi_k d_k(theta) / (1 - pi_k (1 - p_k)) + c(theta).

    An agent that never reports (p_m = 0) has no influence: every wrong entry
    is +inf.
    """
    pi = np.asarray(weights, dtype=float)
    p = np.asarray(participation, dtype=float)
    if p[m] == 0.0:
        lam = np.full(d.num_hypotheses, np.inf)
        lam[d.true_index] = 0.0
        return lam
    others = _others(pi, m)
    gain = pi[others] / (1.0 - pi[others] * (1.0 - p[others]))
    drive = np.sum(gain[:, None] * d.d[others], axis=0)
    lam = drive / (pi[m] * p[m]) + _resolve_c(d, mu_m, c)
    lam[d.true_index] = 0.0
    return lam


def lambda_inf(mode, weights, participation, d, m, mu_m=None, *, c=None) -> np.ndarray:
    mode = Mode(mode)
    if mode is Mode.SYNCHRONOUS:
        return lambda_inf_synchronous(weights, d, m, mu_m, c=c)
    if mode is Mode.ASYMMETRIC:
        return lambda_inf_asymmetric(weights, participation, d, m, mu_m, c=c)
    return lambda_inf_symmetric(weights, participation, d, m, mu_m, c=c)


def causal_impact(lam, true_index: int) -> float:
    """C_m from the steady-state log-belief ratios; +inf entries contribute 0."""
    lam = np.asarray(lam, dtype=float)
    wrong = np.delete(lam, true_index)
    s = float(np.sum(np.exp(-wrong)))
    return s / (1.0 + s)


def misinformation_threshold(weights, participation, d: InformativenessMatrix, m: int, theta: int) -> float:
    """Misinformation level log(mu_m(theta)/mu_m(true)) above which agent m
    has at least as much impact under the symmetric protocol as under the
    asymmetric one.

    This is the abscissa where the two steady-state curves, affine in the
    intervention with slopes p_m (asymmetric) and 1 (symmetric), cross.
    """
    pi = np.asarray(weights, dtype=float)
    p = np.asarray(participation, dtype=float)
    pm = p[m]
    if pm <= 0.0 or pm >= 1.0:
        raise UndefinedThresholdError(
            f"threshold needs 0 < p_m < 1 (got p_m={pm}); at p_m=1 both protocols "
            "coincide and at p_m=0 the symmetric impact vanishes"
        )
    if theta == d.true_index:
        raise ValueError("theta must be a wrong hypothesis")
    others = _others(pi, m)
    pk, wk = p[others], pi[others]
    terms = wk * d.d[others, theta] / (pi[m] * (1.0 - pm)) * (1.0 / (pm * (1.0 - wk * (1.0 - pk))) - pk)
    return float(np.sum(terms))


@dataclass(frozen=True, eq=False)
class ImpactReport:
    """Per-agent steady states, impacts and normalized scores for one mode."""

    mode: Mode
    true_index: int
    lambda_inf: np.ndarray  # (K, H)
    impacts: np.ndarray  # (K,)
    normalized: np.ndarray  # (K,)

    @property
    def dispersion(self) -> float:
        """Sample variance of the normalized scores."""
        return float(np.var(self.normalized, ddof=1)) if self.normalized.size > 1 else 0.0


def impact_report(mode, weights, participation, d: InformativenessMatrix, fixed_beliefs=None) -> ImpactReport:
    """Impact of every agent under ``mode``.

    ``fixed_beliefs`` maps agent index to the intervened belief; agents not in
    the map get the uniform belief.
    """
    mode = Mode(mode)
    pi = np.asarray(weights, dtype=float)
    p = np.ones_like(pi) if mode is Mode.SYNCHRONOUS else np.asarray(participation, dtype=float)
    missing = validate_global_identifiability(d)
    if missing:
        raise ValueError(f"hypotheses {missing} are not identifiable by any agent")
    fixed_beliefs = fixed_beliefs or {}
    lam = np.stack(
        [lambda_inf(mode, pi, p, d, m, fixed_beliefs.get(m)) for m in range(len(pi))]
    )
    impacts = np.array([causal_impact(row, d.true_index) for row in lam])
    total = impacts.sum()
    if total <= 0.0:
        raise ValueError("every agent has zero impact; normalized scores are undefined")
    return ImpactReport(mode, d.true_index, lam, impacts, impacts / total)


def scenario_informativeness(scenario: Scenario) -> InformativenessMatrix:
    """d_k for the scenario's roster; stream agents raise InformativenessUnavailableError."""
    return InformativenessMatrix.from_models([a.model for a in scenario.agents], scenario.space.true_index)


def scenario_impact_report(scenario: Scenario, fixed_beliefs=None) -> ImpactReport:
    d = scenario_informativeness(scenario)
    return impact_report(
        scenario.mode,
        scenario.weights,
        [a.participation_prob for a in scenario.agents],
        d,
        fixed_beliefs,
    )


@dataclass(frozen=True, eq=False)
class TheoryPrediction:
    """Closed-form lambda_inf for a specific intervened scenario."""

    scenario_fingerprint: str
    mode: Mode
    target: int
    lambda_inf: np.ndarray
    true_index: int

    @property
    def impact(self) -> float:
        return causal_impact(self.lambda_inf, self.true_index)


def predict(scenario: Scenario) -> TheoryPrediction:
    if scenario.intervention is None:
        raise ValueError("closed forms describe an intervened scenario; none is set")
    d = scenario_informativeness(scenario)
    iv = scenario.intervention
    lam = lambda_inf(
        scenario.mode, scenario.weights, scenario.participation, d, iv.target, iv.fixed_belief
    )
    return TheoryPrediction(scenario.fingerprint(), scenario.mode, iv.target, lam, d.true_index)
