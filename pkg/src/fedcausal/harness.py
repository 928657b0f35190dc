"""Monte Carlo ensembles, theory comparison, empirical impact and sweeps."""
from __future__ import annotations

import hashlib
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .analytics import TheoryPrediction, causal_impact, lambda_inf, lambda_inf_symmetric, scenario_informativeness
from .beliefs import HypothesisSpace, normalize_log
from .errors import (
    FingerprintMismatchError,
    InformativenessUnavailableError,
    ReplicaError,
    UsageError,
)
from .likelihoods import InformativenessMatrix
from .oracle import symmetric_steady_state
from .protocol import Mode, Scenario, TrialStreams, simulate_batch

TAIL_FRACTION = 0.1
CHUNK_SIZE = 64
SWEEP_PARAMETERS = ("p_m", "c", "replicas", "horizon")


def tail_window(horizon: int) -> int:
    """Number of final steps averaged as the steady-state estimate."""
    if horizon <= 0:
        return 0
    return max(1, math.ceil(TAIL_FRACTION * horizon))


def _tree_sum(x: np.ndarray) -> np.ndarray:
    """Pairwise sum over axis 0 in index order (fixed reduction tree)."""
    n = x.shape[0]
    if n == 1:
        return x[0].copy()
    half = n // 2
    return _tree_sum(x[:half]) + _tree_sum(x[half:])


def _mean_and_se(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = x.shape[0]
    mean = _tree_sum(x) / n
    if n < 2:
        return mean, np.zeros_like(mean)
    var = _tree_sum((x - mean) ** 2) / (n - 1)
    return mean, np.sqrt(var / n)


@dataclass(frozen=True, eq=False)
class EnsembleResult:
    scenario_fingerprint: str
    fingerprint: str
    mode: Mode
    space: HypothesisSpace
    horizon: int
    replicas: int
    master_seed: int
    mean_lbr: np.ndarray  # (T, H)
    se_lbr: np.ndarray  # (T, H)
    mean_belief_true: np.ndarray  # (T,)
    se_belief_true: np.ndarray  # (T,)
    tail_lbr: np.ndarray = field(repr=False)  # (R, H) per-replica tail means
    tail_belief_true: np.ndarray = field(repr=False)  # (R,)

    @property
    def tail_window(self) -> int:
        return tail_window(self.horizon)

    @property
    def terminal_lbr(self) -> np.ndarray:
        return _mean_and_se(self.tail_lbr)[0]

    @property
    def terminal_lbr_se(self) -> np.ndarray:
        return _mean_and_se(self.tail_lbr)[1]


def _run_chunk(args) -> np.ndarray:
    scenario, horizon, master_seed, replicas = args
    streams = [TrialStreams(master_seed, r) for r in replicas]
    try:
        return simulate_batch(scenario, horizon, streams)["fc_log"]
    except Exception:
        # locate the first replica that fails on its own
        for s in streams:
            try:
                simulate_batch(scenario, horizon, [s])
            except Exception as exc:
                raise ReplicaError(s.replica, exc) from exc
        raise


def run_ensemble(
    scenario: Scenario,
    horizon: int,
    replicas: int,
    master_seed: int,
    parallelism: int = 1,
) -> EnsembleResult:
    """Average ``replicas`` independent trials.

    Replica r draws from the substreams of (master_seed, r). Replicas run in
    fixed-size chunks, possibly in worker processes, and are reduced in index
    order afterwards, so the result does not depend on ``parallelism``.
    """
    if replicas < 1:
        raise ValueError("replicas must be at least 1")
    if horizon < 0:
        raise ValueError("horizon must be non-negative")
    jobs = [
        (scenario, horizon, master_seed, range(lo, min(lo + CHUNK_SIZE, replicas)))
        for lo in range(0, replicas, CHUNK_SIZE)
    ]
    if parallelism > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            parts = list(pool.map(_run_chunk, jobs))
    else:
        parts = [_run_chunk(job) for job in jobs]
    fc_log = np.concatenate(parts, axis=0)  # (R, T, H)

    ti = scenario.space.true_index
    lbr = fc_log[:, :, [ti]] - fc_log
    belief_true = np.exp(fc_log[:, :, ti])
    mean_lbr, se_lbr = _mean_and_se(lbr)
    mean_bt, se_bt = _mean_and_se(belief_true)
    w = tail_window(horizon)
    if w:
        tail_lbr = lbr[:, -w:, :].mean(axis=1)
        tail_bt = belief_true[:, -w:].mean(axis=1)
    else:
        tail_lbr = np.full((replicas, scenario.space.size), np.nan)
        tail_bt = np.full(replicas, np.nan)

    sfp = scenario.fingerprint()
    run_fp = hashlib.sha256(f"{sfp}|{master_seed}|{horizon}|{replicas}".encode()).hexdigest()[:16]
    return EnsembleResult(
        scenario_fingerprint=sfp,
        fingerprint=run_fp,
        mode=scenario.mode,
        space=scenario.space,
        horizon=horizon,
        replicas=replicas,
        master_seed=master_seed,
        mean_lbr=mean_lbr,
        se_lbr=se_lbr,
        mean_belief_true=mean_bt,
        se_belief_true=se_bt,
        tail_lbr=tail_lbr,
        tail_belief_true=tail_bt,
    )


@dataclass(frozen=True)
class ComparisonRow:
    theta_index: int
    theta_label: str
    simulated: float
    simulated_se: float
    theoretical: float
    abs_deviation: float
    rel_deviation: float
    tolerance: float
    passed: bool


@dataclass(frozen=True)
class ComparisonReport:
    mode: Mode
    scenario_fingerprint: str
    rows: tuple

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)


def compare_to_theory(result: EnsembleResult, prediction: TheoryPrediction, tolerance: float = 0.05) -> ComparisonReport:
    """Check the simulated steady-state LBR against a closed-form value.

    The simulated statistic is the mean LBR over the last 10% of the horizon.
    A row passes when its relative deviation is within ``tolerance`` (absolute
    deviation when the theoretical value is 0).
    """
    if result.scenario_fingerprint != prediction.scenario_fingerprint:
        raise FingerprintMismatchError(
            f"ensemble {result.scenario_fingerprint} and prediction "
            f"{prediction.scenario_fingerprint} describe different scenarios"
        )
    if result.horizon == 0:
        raise ValueError("cannot compare an empty ensemble to theory")
    sim, se = result.terminal_lbr, result.terminal_lbr_se
    rows = []
    for h in result.space.wrong_indices:
        theory = float(prediction.lambda_inf[h])
        dev = abs(float(sim[h]) - theory)
        rel = dev / abs(theory) if theory != 0 else dev
        rows.append(
            ComparisonRow(
                theta_index=h,
                theta_label=str(result.space.labels[h]),
                simulated=float(sim[h]),
                simulated_se=float(se[h]),
                theoretical=theory,
                abs_deviation=dev,
                rel_deviation=rel,
                tolerance=tolerance,
                passed=bool(rel <= tolerance),
            )
        )
    return ComparisonReport(result.mode, result.scenario_fingerprint, tuple(rows))


@dataclass(frozen=True, eq=False)
class EmpiricalImpact:
    target: int
    estimate: float
    se: float
    tail_lbr: np.ndarray
    raw_estimate: float  # 1 - tail mean of the FC belief on the truth
    baseline_belief_true: float


def impact_from_tail(tail_lbr: np.ndarray, true_index: int) -> tuple[float, float]:
    """C_m from per-replica tail LBRs, with a delta-method standard error."""
    lam, _ = _mean_and_se(tail_lbr)
    estimate = causal_impact(lam, true_index)
    R = tail_lbr.shape[0]
    if R < 2 or not np.all(np.isfinite(lam)):
        return estimate, 0.0
    wrong = [h for h in range(lam.size) if h != true_index]
    s = np.sum(np.exp(-lam[wrong]))
    grad = -np.exp(-lam[wrong]) / (1.0 + s) ** 2
    cov = np.atleast_2d(np.cov(tail_lbr[:, wrong], rowvar=False)) / R
    return estimate, float(np.sqrt(max(grad @ cov @ grad, 0.0)))


def empirical_impact(
    base: Scenario,
    intervened: Scenario,
    horizon: int,
    replicas: int,
    seed: int,
    parallelism: int = 1,
) -> EmpiricalImpact:
    """Estimate C_m by simulation.

    The steady-state LBR is estimated from the tail of the intervened ensemble
    and mapped to C_m the same way as the closed forms. The pre-intervention
    ensemble runs on the same seed and is reported as a baseline.
    """
    if intervened.intervention is None:
        raise ValueError("the intervened scenario has no intervention")
    if base.describe(include_intervention=False) != intervened.describe(include_intervention=False):
        raise ValueError("scenarios must differ only in the intervention")
    res = run_ensemble(intervened, horizon, replicas, seed, parallelism)
    ref = run_ensemble(base.without_intervention(), horizon, replicas, seed, parallelism)
    estimate, se = impact_from_tail(res.tail_lbr, intervened.space.true_index)
    return EmpiricalImpact(
        target=intervened.intervention.target,
        estimate=estimate,
        se=se,
        tail_lbr=res.terminal_lbr,
        raw_estimate=float(1.0 - _mean_and_se(res.tail_belief_true)[0]),
        baseline_belief_true=float(_mean_and_se(ref.tail_belief_true)[0]),
    )


def fixed_belief_for_log_ratio(space: HypothesisSpace, c: float):
    """Belief with log mu(true)/mu(theta) = c for every wrong theta."""
    weights = np.full(space.size, -float(c))
    weights[space.true_index] = 0.0
    return normalize_log(weights)


@dataclass(frozen=True, eq=False)
class SweepRow:
    parameter: str
    value: float
    mode: Mode
    lambda_analytic: np.ndarray | None
    impact_analytic: float | None
    lambda_empirical: np.ndarray | None
    impact_empirical: float | None
    impact_empirical_se: float | None


def sweep(
    parameter: str,
    values: Sequence[float],
    base: Scenario,
    horizon: int = 500,
    replicas: int = 200,
    master_seed: int = 0,
    empirical: bool = True,
    parallelism: int = 1,
) -> list[SweepRow]:
    """One row per value of ``parameter``, with analytic and empirical columns.

    ``base`` must carry the intervention whose target is swept. ``p_m`` changes
    the target's participation probability, ``c`` its intervened log-ratio
    log mu_m(true)/mu_m(theta); ``replicas`` and ``horizon`` change the run.
    Every value reuses ``master_seed`` (common random numbers).
    """
    if parameter not in SWEEP_PARAMETERS:
        raise UsageError(f"unknown sweep parameter {parameter!r}; choose from {', '.join(SWEEP_PARAMETERS)}")
    if base.intervention is None:
        raise UsageError("sweeps need a scenario with an intervention")
    target = base.intervention.target
    try:
        d = scenario_informativeness(base)
    except InformativenessUnavailableError:
        d = None

    rows = []
    for value in values:
        scenario, h, r = base, horizon, replicas
        if parameter == "p_m":
            scenario = base.with_participation(target, float(value))
        elif parameter == "c":
            scenario = base.with_intervention(target, fixed_belief_for_log_ratio(base.space, value))
        elif parameter == "replicas":
            r = int(value)
        else:
            h = int(value)

        lam_a = imp_a = None
        if d is not None:
            iv = scenario.intervention
            lam_a = lambda_inf(scenario.mode, scenario.weights, scenario.participation, d, target, iv.fixed_belief)
            imp_a = causal_impact(lam_a, d.true_index)

        lam_e = imp_e = se_e = None
        if empirical and h > 0:
            res = run_ensemble(scenario, h, r, master_seed, parallelism)
            lam_e = res.terminal_lbr
            imp_e, se_e = impact_from_tail(res.tail_lbr, scenario.space.true_index)
        rows.append(SweepRow(parameter, float(value), scenario.mode, lam_a, imp_a, lam_e, imp_e, se_e))
    return rows


def find_crossing(x: Sequence[float], y1: Sequence[float], y2: Sequence[float]) -> float | None:
    """Linearly interpolated abscissa of the first sign change of y1 - y2."""
    x = np.asarray(x, dtype=float)
    diff = np.asarray(y1, dtype=float) - np.asarray(y2, dtype=float)
    for i in range(len(x) - 1):
        if diff[i] == 0:
            return float(x[i])
        if diff[i] * diff[i + 1] < 0:
            t = diff[i] / (diff[i] - diff[i + 1])
            return float(x[i] + t * (x[i + 1] - x[i]))
    if len(x) and diff[-1] == 0:
        return float(x[-1])
    return None


@dataclass(frozen=True)
class OracleCheck:
    num_agents: int
    target: int
    closed_form: float
    matrix: float

    @property
    def abs_deviation(self) -> float:
        return abs(self.closed_form - self.matrix)


def random_oracle_checks(n_configs: int = 100, seed: int = 0) -> list[OracleCheck]:
    """Symmetric closed form vs the matrix steady state on random binary rosters.

    K is drawn from 2..8, pi uniformly from the simplex, p from (0.05, 1],
    d from [0, 2] and the intervened log-ratio c from [-2, 2].
    """
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n_configs):
        K = int(rng.integers(2, 9))
        pi = rng.dirichlet(np.ones(K))
        p = 1.0 - 0.95 * rng.random(K)
        d = 2.0 * rng.random(K)
        m = int(rng.integers(K))
        c = float(rng.uniform(-2.0, 2.0))
        dm = InformativenessMatrix(np.column_stack([np.zeros(K), d]), 0)
        closed = float(lambda_inf_symmetric(pi, p, dm, m, c=c)[1])
        out.append(OracleCheck(K, m, closed, symmetric_steady_state(pi, p, d, m, c)))
    return out
