"""One trial of federated inference: adapt, participate, combine, broadcast.

Three protocols are supported:

* ``synchronous`` -- every agent adapts on the fusion-center (FC) belief and
  every agent reports at every step.
* ``asymmetric`` -- each agent reports with probability p_k; the FC fills the
  slot of a silent agent with its own previous belief. All agents still
  receive the broadcast.
* ``symmetric`` -- as asymmetric, but a silent agent also receives nothing and
  adapts on its own previous intermediate belief next time.

An optional intervention pins one agent's intermediate belief to a fixed pmf.
"""
from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .beliefs import Belief, HypothesisSpace, LogBeliefRatioVector, log_normalize
from .likelihoods import LikelihoodModel, LikelihoodStreamSource

WEIGHT_SUM_TOL = 1e-9


class Mode(str, enum.Enum):
    SYNCHRONOUS = "synchronous"
    ASYMMETRIC = "asymmetric"
    SYMMETRIC = "symmetric"


@dataclass(frozen=True, eq=False)
class AgentSpec:
    model: LikelihoodModel
    confidence_weight: float
    participation_prob: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.confidence_weight <= 1.0:
            raise ValueError(f"confidence weight must lie in (0, 1], got {self.confidence_weight}")
        if not 0.0 <= self.participation_prob <= 1.0:
            raise ValueError(f"participation probability must lie in [0, 1], got {self.participation_prob}")


@dataclass(frozen=True, eq=False)
class InterventionSpec:
    """do(psi_m := fixed_belief) on agent ``target`` (0-based)."""

    target: int
    fixed_belief: Belief

    def log_ratio(self, true_index: int) -> np.ndarray:
        """c(theta) = log mu_m(true) / mu_m(theta)."""
        lm = self.fixed_belief.log_mass
        c = lm[true_index] - lm
        c[true_index] = 0.0
        return c


@dataclass(frozen=True, eq=False)
class ParticipationMask:
    q: np.ndarray

    def __post_init__(self):
        q = np.array(self.q, dtype=bool)
        q.setflags(write=False)
        object.__setattr__(self, "q", q)

    def active_weights(self, weights) -> np.ndarray:
        """The vector a_i = pi * q_i."""
        return np.asarray(weights, dtype=float) * self.q


@dataclass(frozen=True, eq=False)
class Scenario:
    mode: Mode
    space: HypothesisSpace
    agents: tuple
    intervention: InterventionSpec | None = None
    initial_prior: Belief | None = None

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        agents = tuple(self.agents)
        object.__setattr__(self, "agents", agents)
        if not agents:
            raise ValueError("a scenario needs at least one agent")
        total = sum(a.confidence_weight for a in agents)
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError(f"confidence weights must sum to 1, got {total!r}")
        for k, a in enumerate(agents):
            if a.model.num_hypotheses != self.space.size:
                raise ValueError(
                    f"agent {k} models {a.model.num_hypotheses} hypotheses, space has {self.space.size}"
                )
        if self.initial_prior is None:
            object.__setattr__(self, "initial_prior", Belief.uniform(self.space.size))
        elif self.initial_prior.size != self.space.size:
            raise ValueError("initial prior does not match the hypothesis space")
        if self.intervention is not None:
            if not 0 <= self.intervention.target < len(agents):
                raise IndexError(f"intervention target {self.intervention.target} out of range")
            if self.intervention.fixed_belief.size != self.space.size:
                raise ValueError("intervened belief does not match the hypothesis space")

    @property
    def num_agents(self) -> int:
        return len(self.agents)

    @property
    def weights(self) -> np.ndarray:
        return np.array([a.confidence_weight for a in self.agents])

    @property
    def participation(self) -> np.ndarray:
        if self.mode is Mode.SYNCHRONOUS:
            return np.ones(self.num_agents)
        return np.array([a.participation_prob for a in self.agents])

    def with_intervention(self, target: int, fixed_belief: Belief | None = None) -> "Scenario":
        belief = fixed_belief if fixed_belief is not None else Belief.uniform(self.space.size)
        return replace(self, intervention=InterventionSpec(target, belief))

    def without_intervention(self) -> "Scenario":
        return replace(self, intervention=None)

    def with_mode(self, mode) -> "Scenario":
        return replace(self, mode=Mode(mode))

    def with_participation(self, agent: int, prob: float) -> "Scenario":
        agents = list(self.agents)
        agents[agent] = replace(agents[agent], participation_prob=prob)
        return replace(self, agents=tuple(agents))

    def describe(self, include_intervention: bool = True) -> dict:
        out = {
            "mode": self.mode.value,
            "hypotheses": [str(label) for label in self.space.labels],
            "true_index": self.space.true_index,
            "initial_prior": self.initial_prior.log_mass.tolist(),
            "agents": [
                {
                    "pi": a.confidence_weight,
                    "p": a.participation_prob,
                    **a.model.describe(),
                }
                for a in self.agents
            ],
        }
        if include_intervention:
            iv = self.intervention
            out["intervention"] = (
                None
                if iv is None
                else {"target": iv.target, "fixed_belief": iv.fixed_belief.log_mass.tolist()}
            )
        return out

    def fingerprint(self) -> str:
        blob = json.dumps(self.describe(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class TrialStreams:
    """Named RNG substreams of one replica, derived from a master seed.

    Agent k's observations come from spawn key (replica, 0, k) and the
    participation draws from (replica, 1), so no stream depends on the order in
    which agents are visited.
    """

    master_seed: int
    replica: int = 0

    def observation_rng(self, agent: int) -> np.random.Generator:
        seq = np.random.SeedSequence(self.master_seed, spawn_key=(self.replica, 0, agent))
        return np.random.default_rng(seq)

    def participation_rng(self) -> np.random.Generator:
        seq = np.random.SeedSequence(self.master_seed, spawn_key=(self.replica, 1))
        return np.random.default_rng(seq)


@dataclass(frozen=True, eq=False)
class Trace:
    """Per-step record of one trial; every series has length ``horizon``."""

    space: HypothesisSpace
    mode: Mode
    fc_log: np.ndarray  # (T, H)
    agent_log: np.ndarray  # (T, K, H)
    masks: np.ndarray  # (T, K) bool
    llr: np.ndarray | None = field(default=None)  # (T, K, H), x_{k,i}(theta)

    @property
    def horizon(self) -> int:
        return self.fc_log.shape[0]

    @property
    def lbr(self) -> np.ndarray:
        return self.fc_log[:, [self.space.true_index]] - self.fc_log

    @property
    def fc_beliefs(self) -> list[Belief]:
        return [Belief(row) for row in self.fc_log]

    @property
    def agent_beliefs(self) -> list[list[Belief]]:
        return [[Belief(row) for row in step] for step in self.agent_log]

    @property
    def participation_masks(self) -> list[ParticipationMask]:
        return [ParticipationMask(q) for q in self.masks]

    def lbr_vector(self, step: int) -> LogBeliefRatioVector:
        return LogBeliefRatioVector(self.lbr[step], self.space.true_index)


# -- single-step operations -------------------------------------------------


def _pool(log_rows: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """sum_k w_k * log_rows[..., k, :], accumulated in agent order."""
    acc = weights[0] * log_rows[..., 0, :]
    for k in range(1, len(weights)):
        acc = acc + weights[k] * log_rows[..., k, :]
    return acc


def adapt(prior: Belief, log_lik_row) -> Belief:
    """Bayes update of ``prior`` with one row of log-likelihoods."""
    return Belief(log_normalize(prior.log_mass + np.asarray(log_lik_row, dtype=float)))


def combine_synchronous(intermediates: Sequence[Belief], weights) -> Belief:
    """Weighted geometric average of the agents' intermediate beliefs."""
    rows = np.stack([b.log_mass for b in intermediates])
    return Belief(log_normalize(_pool(rows, np.asarray(weights, dtype=float))))


def combine_asymmetric(
    intermediates: Sequence[Belief], mask: ParticipationMask, fc_prior: Belief, weights
) -> Belief:
    """Geometric pooling where silent agents are replaced by the FC prior."""
    rows = np.stack([b.log_mass for b in intermediates])
    rows = np.where(mask.q[:, None], rows, fc_prior.log_mass[None, :])
    return Belief(log_normalize(_pool(rows, np.asarray(weights, dtype=float))))


def sample_participation(agents, rng: np.random.Generator) -> ParticipationMask:
    """Independent Bernoulli(p_k) draw per agent.

    ``agents`` may be a sequence of :class:`AgentSpec` or of probabilities.
    """
    probs = np.array(
        [a.participation_prob if isinstance(a, AgentSpec) else float(a) for a in agents]
    )
    return ParticipationMask(rng.random(probs.size) < probs)


def step_symmetric_agent(agent_state: Belief, prev_q: bool, fc_belief_prev: Belief, log_lik_row) -> Belief:
    """Adapt on the FC belief if the agent reported last step, else on its own."""
    return adapt(fc_belief_prev if prev_q else agent_state, log_lik_row)


def apply_intervention(intermediates: Sequence[Belief], intervention: InterventionSpec | None) -> list[Belief]:
    out = list(intermediates)
    if intervention is not None:
        out[intervention.target] = intervention.fixed_belief
    return out


# -- trial execution --------------------------------------------------------


def _draw_inputs(scenario: Scenario, horizon: int, streams: TrialStreams):
    """Pre-draw log-likelihood rows (T, K, H) and participation masks (T, K)."""
    K, H = scenario.num_agents, scenario.space.size
    target = scenario.intervention.target if scenario.intervention is not None else None
    loglik = np.zeros((horizon, K, H))
    for k, agent in enumerate(scenario.agents):
        if k == target:
            # the intervened agent neither observes nor consumes data
            continue
        model = agent.model
        if isinstance(model, LikelihoodStreamSource):
            loglik[:, k, :] = model.rows_for(horizon, streams.replica)
        else:
            obs = model.sample(scenario.space.true_index, streams.observation_rng(k), size=horizon)
            loglik[:, k, :] = model.log_likelihood_rows(obs)
    if scenario.mode is Mode.SYNCHRONOUS:
        masks = np.ones((horizon, K), dtype=bool)
    else:
        u = streams.participation_rng().random((horizon, K))
        masks = u < scenario.participation
    return loglik, masks


def simulate_batch(
    scenario: Scenario,
    horizon: int,
    streams: Sequence[TrialStreams],
    record_agents: bool = False,
) -> dict:
    """Run several independent replicas side by side.

    Each replica draws its inputs from its own :class:`TrialStreams`, and every
    array operation below is row-wise, so a replica's result is bitwise the same
    whichever batch it runs in.

    Returns a dict with ``fc_log`` (B, T, H), ``masks`` (B, T, K), ``loglik``
    (B, T, K, H) and, when ``record_agents`` is set, ``agent_log`` (B, T, K, H).
    """
    if horizon < 0:
        raise ValueError("horizon must be non-negative")
    B, K, H = len(streams), scenario.num_agents, scenario.space.size
    drawn = [_draw_inputs(scenario, horizon, s) for s in streams]
    loglik = np.stack([d[0] for d in drawn]) if drawn else np.zeros((0, horizon, K, H))
    masks = np.stack([d[1] for d in drawn]) if drawn else np.zeros((0, horizon, K), dtype=bool)

    weights = scenario.weights
    symmetric = scenario.mode is Mode.SYMMETRIC
    iv = scenario.intervention

    fc = np.broadcast_to(scenario.initial_prior.log_mass, (B, H)).copy()
    own = np.broadcast_to(fc[:, None, :], (B, K, H)).copy()
    # q_{k,0} = 1: the first adaptation uses the shared prior
    prev_q = np.ones((B, K), dtype=bool)

    fc_hist = np.empty((B, horizon, H))
    agent_hist = np.empty((B, horizon, K, H)) if record_agents else None
    for t in range(horizon):
        if symmetric:
            prior = np.where(prev_q[:, :, None], fc[:, None, :], own)
        else:
            prior = fc[:, None, :]
        psi = log_normalize(prior + loglik[:, t])
        if iv is not None:
            psi[:, iv.target, :] = iv.fixed_belief.log_mass
        q = masks[:, t]
        contrib = np.where(q[:, :, None], psi, fc[:, None, :])
        fc = log_normalize(_pool(contrib, weights))
        fc_hist[:, t] = fc
        if symmetric:
            own, prev_q = psi, q
        if record_agents:
            if symmetric:
                agent_hist[:, t] = np.where(q[:, :, None], fc[:, None, :], psi)
            else:
                agent_hist[:, t] = fc[:, None, :]
    out = {"fc_log": fc_hist, "masks": masks, "loglik": loglik}
    if record_agents:
        out["agent_log"] = agent_hist
    return out


def run_trial(scenario: Scenario, horizon: int, rng_stream, record_llr: bool = False) -> Trace:
    """Execute one trial of the scenario's protocol.

    Parameters
    ----------
    scenario : Scenario
        Protocol mode, roster, true hypothesis and optional intervention.
    horizon : int
        Number of time steps; may be 0.
    rng_stream : TrialStreams or int
        Substreams for this trial; an int is taken as the master seed of
        replica 0.
    record_llr : bool
        Also keep the per-step log-likelihood ratios x_{k,i}(theta).
    """
    streams = rng_stream if isinstance(rng_stream, TrialStreams) else TrialStreams(int(rng_stream))
    res = simulate_batch(scenario, horizon, [streams], record_agents=True)
    llr = None
    if record_llr:
        ll = res["loglik"][0]
        llr = ll[:, :, [scenario.space.true_index]] - ll
    return Trace(
        space=scenario.space,
        mode=scenario.mode,
        fc_log=res["fc_log"][0],
        agent_log=res["agent_log"][0],
        masks=res["masks"][0],
        llr=llr,
    )
