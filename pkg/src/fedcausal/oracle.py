"""Expected log-belief-ratio recursions, solved numerically.

The closed forms in :mod:`fedcausal.analytics` are simplifications of linear
recursions for the expected LBRs. This module builds those recursions as
explicit matrices and solves them directly, giving an independent route for
checking both the closed forms and the simulator.

Symmetric protocol, extended state [lambda_1 .. lambda_K | lambda_FC]::

    Lbar_i = R Lbar_{i-1} + U d

    R = [[Pbar A + Pbar + p a^T,  s    ],     U = [[Pbar A + Pbar + p a^T],
         [a^T,                    sigma]]          [a^T                  ]]

with a = pi * p, s_k = p_k sum_{l != k} pi_l (1 - p_l), sigma = sum_k pi_k (1 - p_k) = 1 - sum_k a_k.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DegenerateConfigurationError

ROW_SUM_TOL = 1e-9
MAX_CONDITION = 1e12
REFINE_STEPS = 5


@dataclass(frozen=True, eq=False)
class RecursionMatrices:
    R: np.ndarray  # (K+1, K+1)
    U: np.ndarray  # (K+1, K)
    weights: np.ndarray
    participation: np.ndarray
    R_ext: np.ndarray | None = None  # the same matrices in extended precision
    U_ext: np.ndarray | None = None

    @property
    def num_agents(self) -> int:
        return self.U.shape[1]


@dataclass(frozen=True, eq=False)
class ReducedMatrices:
    R: np.ndarray  # (K, K), intervened agent's row and column removed
    U: np.ndarray  # (K, K), intervened agent's row removed
    d: np.ndarray  # (K,), informativeness with the intervened entry set to c
    target: int
    R_ext: np.ndarray | None = None
    U_ext: np.ndarray | None = None


def build_recursion(weights, participation) -> RecursionMatrices:
    pi = np.asarray(weights, dtype=float)
    p = np.asarray(participation, dtype=float)
    if pi.ndim != 1 or pi.shape != p.shape:
        raise ValueError("weights and participation must be vectors of equal length")
    if np.any(p < 0) or np.any(p > 1):
        raise ValueError("participation probabilities must lie in [0, 1]")
    R_ext, U_ext = _assemble(pi.astype(np.longdouble), p.astype(np.longdouble))
    R, U = R_ext.astype(float), U_ext.astype(float)
    dev = np.max(np.abs(R.sum(axis=1) - 1.0))
    if dev > ROW_SUM_TOL:
        raise AssertionError(f"recursion matrix is not row-stochastic (deviation {dev:.3g})")
    return RecursionMatrices(R, U, pi, p, R_ext, U_ext)


def _assemble(pi: np.ndarray, p: np.ndarray):
    K = pi.size
    pbar = 1 - p
    a = pi * p
    # equals sum(pi * pbar) when the weights sum to one; this form keeps R
    # exactly row-stochastic even when the float weights are off by an ulp
    sigma = 1 - np.sum(a)
    s = p * (sigma - pi * pbar)
    upper = np.diag(pbar * a + pbar) + np.outer(p, a)
    R = np.empty((K + 1, K + 1), dtype=pi.dtype)
    R[:K, :K] = upper
    R[:K, K] = s
    R[K, :K] = a
    R[K, K] = sigma
    U = np.vstack([upper, a[None, :]])
    return R, U


def expected_lbr_trajectory(matrices: RecursionMatrices, d, horizon: int) -> np.ndarray:
    """Iterate Lbar_i = R Lbar_{i-1} + U d from Lbar_0 = 0.

    Returns an array of shape (horizon, K+1); row i-1 holds Lbar_i and the last
    column is the FC.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    d = np.asarray(d, dtype=float)
    drive = matrices.U @ d
    out = np.empty((horizon, matrices.R.shape[0]))
    state = np.zeros(matrices.R.shape[0])
    for i in range(horizon):
        state = matrices.R @ state + drive
        out[i] = state
    return out


def perron_growth_rate(matrices: RecursionMatrices, d) -> float:
    """Asymptotic slope of every entry of Lbar_i: pi_R^T U d.

    pi_R is the left Perron vector of R (the stationary vector of the
    row-stochastic matrix), found from the null space of (R^T - I).
    """
    n = matrices.R.shape[0]
    system = np.vstack([matrices.R.T - np.eye(n), np.ones((1, n))])
    rhs = np.zeros(n + 1)
    rhs[-1] = 1.0
    stationary = np.linalg.lstsq(system, rhs, rcond=None)[0]
    return float(stationary @ matrices.U @ np.asarray(d, dtype=float))


def asymmetric_growth_rate(weights, participation, d) -> float:
    """Without intervention the asymmetric FC LBR grows by a^T d per step."""
    return float(np.dot(np.asarray(weights) * np.asarray(participation), np.asarray(d, dtype=float)))


def asymmetric_expected_lbr(weights, participation, d, horizon: int, target: int | None = None, c: float = 0.0):
    """Expected FC LBR of the asymmetric protocol, stepped forward exactly.

    When agent ``target`` is pinned, it contributes c when it reports and the
    FC's own previous LBR when it is silent, so

        lambda_i = (1 - pi_m p_m) lambda_{i-1} + sum_{k != m} pi_k p_k d_k + pi_m p_m c.
    """
    pi = np.asarray(weights, dtype=float)
    p = np.asarray(participation, dtype=float)
    a = pi * p
    d = np.asarray(d, dtype=float).copy()
    retain = 1.0
    if target is not None:
        d[target] = c
        retain = 1.0 - a[target]
    drive = float(np.dot(a, d))
    out = np.empty(horizon)
    lam = 0.0
    for i in range(horizon):
        lam = retain * lam + drive
        out[i] = lam
    return out


def asymmetric_intervened_steady_state(weights, participation, d, target: int, c: float = 0.0) -> float:
    """Fixed point of :func:`asymmetric_expected_lbr` with an intervention."""
    pi = np.asarray(weights, dtype=float)
    p = np.asarray(participation, dtype=float)
    a = pi * p
    if a[target] <= 0:
        return float("inf")
    d = np.asarray(d, dtype=float).copy()
    d[target] = c
    return float(np.dot(a, d) / a[target])


def reduce_for_intervention(matrices: RecursionMatrices, d, target: int, c: float) -> ReducedMatrices:
    """Drop the intervened agent's state; its forcing entry becomes c."""
    K = matrices.num_agents
    if not 0 <= target < K:
        raise IndexError(f"target {target} out of range")
    keep = [i for i in range(K + 1) if i != target]
    d_tilde = np.asarray(d, dtype=float).copy()
    d_tilde[target] = c
    ext = matrices.R_ext is not None
    return ReducedMatrices(
        R=matrices.R[np.ix_(keep, keep)],
        U=matrices.U[keep, :],
        d=d_tilde,
        target=target,
        R_ext=matrices.R_ext[np.ix_(keep, keep)] if ext else None,
        U_ext=matrices.U_ext[keep, :] if ext else None,
    )


def spectral_radius(M: np.ndarray, tol: float = 1e-10, max_iter: int = 100_000) -> float:
    """Perron root of a non-negative matrix by power iteration.

    Uses the Collatz-Wielandt bracket min_i (Mx)_i/x_i <= rho <= max_i (Mx)_i/x_i
    as the stopping rule.
    """
    M = np.asarray(M, dtype=float)
    if np.any(M < 0):
        raise ValueError("power iteration bracket requires a non-negative matrix")
    # iterate on M + I: same Perron vector, but aperiodic even when M is not
    x = np.ones(M.shape[0])
    lo, hi = 0.0, np.inf
    for _ in range(max_iter):
        y = M @ x + x
        positive = x > 0
        ratios = y[positive] / x[positive] - 1.0
        lo, hi = float(ratios.min()), float(ratios.max())
        if hi - lo < tol:
            break
        norm = np.max(y)
        if norm == 0:
            return 0.0
        x = y / norm
    return 0.5 * (lo + hi) if np.isfinite(hi) else hi


def intervened_steady_state(reduced: ReducedMatrices) -> float:
    """Solve (I - R~) x = U~ d~ and return the FC entry (the last one)."""
    n = reduced.R.shape[0]
    rho = spectral_radius(reduced.R)
    if not rho < 1.0:
        raise DegenerateConfigurationError(f"spectral radius {rho:.12g} of the reduced recursion is not below 1")
    M = np.eye(n) - reduced.R
    cond = np.linalg.cond(M)
    if not cond < MAX_CONDITION:
        raise DegenerateConfigurationError(f"steady-state system is ill-conditioned (cond={cond:.3g})")
    lu = scipy.linalg.lu_factor(M)
    b = reduced.U @ reduced.d
    x = scipy.linalg.lu_solve(lu, b)
    if reduced.R_ext is None:
        return float(x[-1])
    # iterative refinement against the extended-precision system; the
    # double-precision matrix alone loses digits when pi_m * p_m is tiny
    M_ext = np.eye(n, dtype=np.longdouble) - reduced.R_ext
    b_ext = reduced.U_ext @ reduced.d.astype(np.longdouble)
    for _ in range(REFINE_STEPS):
        r = b_ext - M_ext @ x.astype(np.longdouble)
        step = scipy.linalg.lu_solve(lu, r.astype(float))
        x = x + step
        if np.max(np.abs(step)) <= np.finfo(float).eps * np.max(np.abs(x)):
            break
    return float(x[-1])


def symmetric_steady_state(weights, participation, d, target: int, c: float = 0.0) -> float:
    """Matrix-route counterpart of the symmetric closed form for one theta."""
    mats = build_recursion(weights, participation)
    return intervened_steady_state(reduce_for_intervention(mats, d, target, c))
