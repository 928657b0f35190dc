"""Agent observation models, informativeness (KL divergences) and likelihood streams."""
from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .beliefs import SIMPLEX_TOL, HypothesisSpace
from .errors import (
    DomainError,
    ExhaustedStreamError,
    InformativenessUnavailableError,
    StreamFormatError,
    SupportError,
    UnsupportedOperationError,
)

_LOG_2PI = math.log(2.0 * math.pi)
# Gibbs' inequality makes KL >= 0; allow this much rounding below zero
_KL_NEG_TOL = 1e-12


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class GaussianMeanModel:
    """Observations are N(means[h], std_dev^2) under hypothesis h."""

    means: np.ndarray
    std_dev: float = 1.0

    def __post_init__(self):
        means = _frozen(self.means)
        if means.ndim != 1 or not np.all(np.isfinite(means)):
            raise ValueError("means must be a finite vector with one entry per hypothesis")
        if not (self.std_dev > 0 and math.isfinite(self.std_dev)):
            raise ValueError(f"std_dev must be positive, got {self.std_dev}")
        object.__setattr__(self, "means", means)

    @property
    def num_hypotheses(self) -> int:
        return self.means.size

    def log_likelihood_rows(self, observations) -> np.ndarray:
        """(T,) observations -> (T, H) log-densities."""
        obs = np.asarray(observations, dtype=float)[..., None]
        var = self.std_dev**2
        return -0.5 * (_LOG_2PI + math.log(var)) - (obs - self.means) ** 2 / (2.0 * var)

    def sample(self, true_index: int, rng: np.random.Generator, size=None):
        return rng.normal(self.means[true_index], self.std_dev, size=size)

    def informativeness(self, true_index: int) -> np.ndarray:
        return (self.means[true_index] - self.means) ** 2 / (2.0 * self.std_dev**2)

    def describe(self) -> dict:
        return {"model": "gaussian", "means": self.means.tolist(), "std_dev": self.std_dev}


@dataclass(frozen=True, eq=False)
class CategoricalModel:
    """Observations are symbols 0..V-1 drawn from row h of ``table``."""

    table: np.ndarray

    def __post_init__(self):
        table = _frozen(self.table)
        if table.ndim != 2:
            raise ValueError("categorical table must be H x V")
        if np.any(table <= 0) or not np.all(np.isfinite(table)):
            raise SupportError("categorical likelihoods need strictly positive entries (shared support)")
        sums = table.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > SIMPLEX_TOL):
            raise ValueError(f"categorical rows must sum to 1, got {sums}")
        object.__setattr__(self, "table", table)

    @property
    def num_hypotheses(self) -> int:
        return self.table.shape[0]

    @property
    def alphabet_size(self) -> int:
        return self.table.shape[1]

    def log_likelihood_rows(self, observations) -> np.ndarray:
        obs = np.asarray(observations)
        symbols = obs.astype(int)
        if np.any(symbols != obs) or np.any(symbols < 0) or np.any(symbols >= self.alphabet_size):
            raise DomainError(f"symbols must be integers in [0, {self.alphabet_size})")
        return np.log(self.table[:, symbols]).T

    def sample(self, true_index: int, rng: np.random.Generator, size=None):
        return rng.choice(self.alphabet_size, size=size, p=self.table[true_index])

    def informativeness(self, true_index: int) -> np.ndarray:
        ref = self.table[true_index]
        return np.sum(ref * (np.log(ref) - np.log(self.table)), axis=1)

    def describe(self) -> dict:
        return {"model": "categorical", "table": self.table.tolist()}


@dataclass(frozen=True, eq=False)
class LikelihoodStreamSource:
    """Precomputed log-likelihood rows, one per time step.

    With ``segmented`` set, replica ``r`` of an ensemble replays rows
    ``[r*T, (r+1)*T)`` instead of every replica replaying the same prefix.
    """

    rows: np.ndarray
    agent_id: str = "stream"
    segmented: bool = False
    source: str = field(default="", compare=False)

    def __post_init__(self):
        rows = np.array(self.rows, dtype=float)
        if rows.ndim == 1 and rows.size == 0:
            rows = rows.reshape(0, 0)
        if rows.ndim != 2:
            raise ValueError("stream rows must form a T x H array")
        if not np.all(np.isfinite(rows)):
            raise ValueError("stream rows must be finite")
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)

    @property
    def horizon(self) -> int:
        return self.rows.shape[0]

    @property
    def num_hypotheses(self) -> int:
        return self.rows.shape[1]

    def rows_for(self, horizon: int, replica: int = 0) -> np.ndarray:
        start = replica * horizon if self.segmented else 0
        if start + horizon > self.horizon:
            raise ExhaustedStreamError(self.agent_id, self.horizon, start + horizon)
        return self.rows[start : start + horizon]

    def log_likelihood_rows(self, observations) -> np.ndarray:
        raise UnsupportedOperationError("a likelihood stream has no observation model")

    def sample(self, true_index, rng, size=None):
        raise UnsupportedOperationError(
            f"agent {self.agent_id!r} replays a likelihood stream and cannot sample observations"
        )

    def informativeness(self, true_index: int) -> np.ndarray:
        raise InformativenessUnavailableError(
            f"agent {self.agent_id!r} replays a likelihood stream; d_k is undefined without a generative model"
        )

    def describe(self) -> dict:
        digest = hashlib.sha256(self.rows.tobytes()).hexdigest()
        return {
            "model": "stream",
            "agent_id": self.agent_id,
            "rows": self.horizon,
            "segmented": self.segmented,
            "sha256": digest,
        }


LikelihoodModel = Union[GaussianMeanModel, CategoricalModel, LikelihoodStreamSource]


def log_likelihood(model: LikelihoodModel, observation, hypothesis_index: int) -> float:
    if not 0 <= hypothesis_index < model.num_hypotheses:
        raise IndexError(f"hypothesis index {hypothesis_index} out of range")
    return float(model.log_likelihood_rows(np.asarray([observation]))[0, hypothesis_index])


def sample_observation(model: LikelihoodModel, true_hypothesis: int, rng: np.random.Generator):
    return model.sample(true_hypothesis, rng)


def informativeness(model: LikelihoodModel, true_hypothesis: int) -> np.ndarray:
    """d(theta) = KL(L(.|true) || L(.|theta)) for every theta, zero at the truth."""
    d = np.asarray(model.informativeness(true_hypothesis), dtype=float)
    if np.any(d < -_KL_NEG_TOL):
        raise ArithmeticError(f"negative KL divergence {d.min()!r}")
    d = np.maximum(d, 0.0)
    d[true_hypothesis] = 0.0
    return d


@dataclass(frozen=True, eq=False)
class InformativenessMatrix:
    """K x H matrix of KL divergences d[k, theta]."""

    d: np.ndarray
    true_index: int

    def __post_init__(self):
        d = _frozen(self.d)
        if d.ndim != 2:
            raise ValueError("informativeness matrix must be K x H")
        if not np.all(np.isfinite(d)) or np.any(d < 0):
            raise ValueError("informativeness entries must be finite and non-negative")
        if np.any(d[:, self.true_index] != 0):
            raise ValueError("informativeness must vanish at the true hypothesis")
        object.__setattr__(self, "d", d)

    @classmethod
    def from_models(cls, models: Sequence[LikelihoodModel], true_index: int) -> "InformativenessMatrix":
        return cls(np.stack([informativeness(m, true_index) for m in models]), true_index)

    @property
    def num_agents(self) -> int:
        return self.d.shape[0]

    @property
    def num_hypotheses(self) -> int:
        return self.d.shape[1]


def validate_global_identifiability(
    matrix: InformativenessMatrix, effective_weights: Sequence[float] | None = None
) -> list[int]:
    """Return the wrong hypotheses no agent can tell apart from the truth.

    An empty list means the roster is globally identifiable. When
    ``effective_weights`` (pi_k * p_k) are given, an agent only counts if its
    effective weight is positive as well.
    """
    informative = matrix.d > 0
    if effective_weights is not None:
        w = np.asarray(effective_weights, dtype=float)
        informative &= (w > 0)[:, None]
    return [
        h
        for h in range(matrix.num_hypotheses)
        if h != matrix.true_index and not informative[:, h].any()
    ]


def read_likelihood_stream(
    path, space: HypothesisSpace, agent_id: str | None = None, segmented: bool = False
) -> LikelihoodStreamSource:
    """Read a CSV of per-step log-likelihoods (H columns, '#' lines ignored)."""
    path = Path(path)
    rows = []
    with path.open(newline="", encoding="utf-8") as fh:
        for lineno, record in enumerate(csv.reader(fh), start=1):
            if not record or (len(record) == 1 and not record[0].strip()):
                continue
            if record[0].lstrip().startswith("#"):
                continue
            if len(record) != space.size:
                raise StreamFormatError(path, lineno, f"expected {space.size} values, found {len(record)}")
            try:
                values = [float(v) for v in record]
            except ValueError as exc:
                raise StreamFormatError(path, lineno, str(exc)) from None
            if not all(math.isfinite(v) for v in values):
                raise StreamFormatError(path, lineno, "non-finite log-likelihood")
            rows.append(values)
    arr = np.array(rows, dtype=float).reshape(len(rows), space.size)
    return LikelihoodStreamSource(arr, agent_id or path.stem, segmented, str(path))


def write_likelihood_stream(path, rows: np.ndarray, labels: Sequence[str] | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        if labels is not None:
            fh.write("# " + ",".join(str(label) for label in labels) + "\n")
        for row in np.asarray(rows, dtype=float):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    return path
