"""Hypothesis spaces, beliefs and log-belief ratios.

Beliefs are stored as log-masses. Everything downstream (adaptation, geometric
pooling, steady-state formulas) works with sums of logs, so keeping the log
representation avoids underflow over long horizons.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import MalformedWeightsError, SupportError

# smallest linear-domain mass accepted when building a belief from probabilities
MIN_LOG_MASS = -700.0
SIMPLEX_TOL = 1e-9


def log_normalize(log_weights: np.ndarray) -> np.ndarray:
    """Normalize log-weights along the last axis so that exp sums to one.

    Works on batches; each row along the last axis is handled independently,
    so the result for a row never depends on the other rows in the batch.
    """
    shift = np.max(log_weights, axis=-1, keepdims=True)
    total = np.log(np.sum(np.exp(log_weights - shift), axis=-1, keepdims=True))
    return log_weights - (shift + total)


@dataclass(frozen=True)
class HypothesisSpace:
    labels: tuple
    true_index: int = 0

    def __post_init__(self):
        labels = tuple(self.labels)
        object.__setattr__(self, "labels", labels)
        if len(labels) < 2:
            raise ValueError("a hypothesis space needs at least two hypotheses")
        if len(set(labels)) != len(labels):
            raise ValueError(f"hypothesis labels must be distinct, got {labels!r}")
        if not 0 <= self.true_index < len(labels):
            raise ValueError(f"true_index {self.true_index} outside 0..{len(labels) - 1}")

    @classmethod
    def binary(cls, true_index: int = 0) -> "HypothesisSpace":
        return cls(("H0", "H1"), true_index)

    @property
    def size(self) -> int:
        return len(self.labels)

    @property
    def wrong_indices(self) -> list[int]:
        return [h for h in range(self.size) if h != self.true_index]


@dataclass(frozen=True, eq=False)
class Belief:
    """A pmf over a finite hypothesis set, held as log-masses."""

    log_mass: np.ndarray

    def __post_init__(self):
        log_mass = np.array(self.log_mass, dtype=float)
        if log_mass.ndim != 1 or log_mass.size < 2:
            raise ValueError("a belief is a vector over at least two hypotheses")
        if not np.all(np.isfinite(log_mass)):
            raise SupportError("belief has a zero or non-finite mass; full support is required")
        total = np.sum(np.exp(log_mass))
        if abs(total - 1.0) > SIMPLEX_TOL:
            raise ValueError(f"belief masses sum to {total!r}, not 1")
        log_mass.setflags(write=False)
        object.__setattr__(self, "log_mass", log_mass)

    @classmethod
    def from_probs(cls, probs: Sequence[float]) -> "Belief":
        probs = np.asarray(probs, dtype=float)
        if np.any(~np.isfinite(probs)) or np.any(probs < 0):
            raise ValueError(f"probabilities must be finite and non-negative: {probs}")
        with np.errstate(divide="ignore"):
            log_mass = np.log(probs)
        if np.any(log_mass < MIN_LOG_MASS):
            raise SupportError(
                f"mass below exp({MIN_LOG_MASS:g}) violates the full-support requirement: {probs}"
            )
        if abs(probs.sum() - 1.0) > SIMPLEX_TOL:
            raise ValueError(f"probabilities sum to {probs.sum()!r}, not 1")
        return cls(log_normalize(log_mass))

    @classmethod
    def uniform(cls, size: int) -> "Belief":
        return cls(np.full(size, -np.log(size)))

    @property
    def probs(self) -> np.ndarray:
        return np.exp(self.log_mass)

    @property
    def size(self) -> int:
        return self.log_mass.size

    def allclose(self, other: "Belief", atol: float = 1e-12) -> bool:
        return bool(np.allclose(self.probs, other.probs, rtol=0.0, atol=atol))

    def __repr__(self):
        return f"Belief({np.array2string(self.probs, precision=6)})"


@dataclass(frozen=True, eq=False)
class LogBeliefRatioVector:
    """log(mu(true) / mu(theta)) for every theta; zero at the true index."""

    values: np.ndarray
    true_index: int

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if not 0 <= self.true_index < values.size:
            raise ValueError("true_index outside the ratio vector")
        if values[self.true_index] != 0.0:
            raise ValueError("log-belief ratio must be exactly 0 at the true hypothesis")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def wrong(self) -> np.ndarray:
        return np.delete(self.values, self.true_index)


def normalize_log(weights: Sequence[float]) -> Belief:
    """Turn unnormalized log-weights into a belief (log-sum-exp normalization)."""
    weights = np.asarray(weights, dtype=float)
    if weights.ndim != 1 or not np.all(np.isfinite(weights)):
        raise MalformedWeightsError(f"log-weights must be a finite vector, got {weights}")
    return Belief(log_normalize(weights))


def to_lbr(belief: Belief, space: HypothesisSpace) -> LogBeliefRatioVector:
    if belief.size != space.size:
        raise ValueError(f"belief has {belief.size} entries, space has {space.size}")
    values = belief.log_mass[space.true_index] - belief.log_mass
    values[space.true_index] = 0.0
    return LogBeliefRatioVector(values, space.true_index)


def from_lbr(lbr: LogBeliefRatioVector) -> Belief:
    """Invert :func:`to_lbr`: mass on the truth is 1 / (1 + sum exp(-lambda))."""
    values = lbr.values
    if not np.all(np.isfinite(values)):
        raise ValueError("log-belief ratios must be finite to define a belief")
    return Belief(log_normalize(-values))


def map_estimate(belief: Belief) -> int:
    """Index of the most probable hypothesis; ties go to the lowest index."""
    # argmax returns the first maximum
    return int(np.argmax(belief.log_mass))
