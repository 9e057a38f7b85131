"""Step statistics and their p-values.

At a given active set the statistic is the largest absolute correlation
between the partial residual of the response and the partial residuals of the
inactive covariates.  Three ways to calibrate it are provided: the
independent-covariate limit law, the equicorrelated approximation and a
permutation test.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import nulldist
from .linalg import ActiveBasis, DesignData, basis_for


class StatisticsError(ValueError):
    pass


class AllDegenerateError(StatisticsError):
    """Every inactive partial residual has zero norm."""


class YDegenerateError(StatisticsError):
    """The response partial residual has zero norm."""


class TestMode(str, enum.Enum):
    AUTO = "auto"
    IID = "iid"
    EQUICORR = "equicorr"
    PERMUTATION = "perm"

    __test__ = False


RHO_THRESHOLD = 0.01
DEFAULT_PERMUTATIONS = 500
# relative norm below which a partial residual counts as zero
ZERO_NORM_RTOL = 1e-10


@dataclass(frozen=True)
class StepStatistics:
    r_max: float
    u_max: float
    v_max: float
    t_stat: float
    argmax_index: int
    inactive_count: int


@dataclass(frozen=True)
class TestOutcome:
    statistics: StepStatistics
    p_value: float
    mode: TestMode
    rho_hat: float | None = None
    permutations_used: int | None = None

    __test__ = False


def correlations(residuals: np.ndarray, y_residual: np.ndarray, reference_norms=None) -> np.ndarray:
    """Correlation of each residual column with ``y_residual``; zero-norm columns give 0."""
    residuals = np.asarray(residuals, dtype=float)
    if residuals.ndim == 1:
        residuals = residuals[:, None]
    y_residual = np.asarray(y_residual, dtype=float)
    norms = np.linalg.norm(residuals, axis=0)
    ref = norms if reference_norms is None else np.asarray(reference_norms, dtype=float)
    live = norms > ZERO_NORM_RTOL * np.maximum(ref, np.finfo(float).tiny)
    live &= norms > 0.0
    ynorm = np.linalg.norm(y_residual)
    out = np.zeros(residuals.shape[1])
    if ynorm == 0.0:
        return out
    out[live] = (residuals[:, live].T @ y_residual) / (norms[live] * ynorm)
    np.clip(out, -1.0, 1.0, out=out)
    out[~live] = 0.0
    return out


def step_statistics(
    residuals: np.ndarray,
    y_residual: np.ndarray,
    n: int,
    s: int,
    indices: Sequence[int] | None = None,
    reference_norms=None,
) -> StepStatistics:
    """Maximal partial correlations over the inactive columns.

    Parameters
    ----------
    residuals : ndarray, shape (n, m)
        Partial residuals of the inactive covariates, one per column.
    y_residual : ndarray, shape (n,)
        Partial residual of the response.
    n, s : int
        Sample size and active-set size (sets the degrees of freedom of ``T``).
    indices : sequence of int, optional
        Covariate index of each column, ascending; defaults to ``range(m)``.
    reference_norms : array_like, optional
        Norms of the columns before residualization.  A residual whose norm is
        below ``1e-10`` times its reference counts as zero, so covariates that
        are collinear with the active set never win the maximum.
    """
    residuals = np.asarray(residuals, dtype=float)
    if residuals.ndim == 1:
        residuals = residuals[:, None]
    m = residuals.shape[1]
    if indices is None:
        indices = np.arange(m)
    indices = np.asarray(indices)
    ynorm = np.linalg.norm(y_residual)
    if ynorm == 0.0:
        raise YDegenerateError("response residual has zero norm")
    norms = np.linalg.norm(residuals, axis=0)
    ref = norms if reference_norms is None else np.asarray(reference_norms, dtype=float)
    live = (norms > 0.0) & (norms > ZERO_NORM_RTOL * ref)
    if not np.any(live):
        raise AllDegenerateError("every inactive residual has zero norm")
    corr = correlations(residuals, y_residual, reference_norms)
    u = float(corr.max())
    v = float(-corr.min())
    pos = int(np.argmax(np.abs(corr)))  # first occurrence: lowest index on ties
    r = max(u, v)
    nu = n - s - 2
    if r >= 1.0:
        t = math.inf
    else:
        t = math.sqrt(max(nu, 0) * r * r / (1.0 - r * r))
    return StepStatistics(r, u, v, t, int(indices[pos]), int(np.count_nonzero(live)))


def estimate_rho(data: DesignData) -> float:
    """Average pairwise sample correlation among the non-degenerate columns.

    Uses ``sum_{j<k} <z_j, z_k> = (||sum_j z_j||^2 - p) / 2`` for unit-norm
    centered columns ``z_j``, so the cost is O(n p).
    """
    keep = [j for j in range(data.p) if j not in data.degenerate_columns]
    p = len(keep)
    if p < 2:
        raise nulldist.DomainError("need at least two non-degenerate columns")
    z = data.x[:, keep] - data.column_means[keep]
    z /= np.linalg.norm(z, axis=0)
    total = z.sum(axis=1)
    return float((total @ total - p) / (p * (p - 1)))


def resolve_mode(rho_hat: float | None, policy: TestMode | str = TestMode.AUTO) -> TestMode:
    """Pick the calibration for a step; explicit policies are returned unchanged."""
    policy = TestMode(policy)
    if policy is not TestMode.AUTO:
        return policy
    if rho_hat is None or abs(rho_hat) < RHO_THRESHOLD:
        return TestMode.IID
    if rho_hat > 0:
        return TestMode.EQUICORR
    return TestMode.PERMUTATION


def pvalue_auto(
    stats: StepStatistics,
    p: int,
    n: int,
    s: int,
    rho_hat: float | None,
    policy: TestMode | str = TestMode.AUTO,
    *,
    c_switch: float = 0.01,
    nodes: int = 512,
    permute: Callable[[], TestOutcome] | None = None,
) -> TestOutcome:
    """p-value of ``stats`` under the calibration chosen by ``policy``.

    ``p`` is the number of candidate covariates including the ``s`` active
    ones.  ``permute`` runs the permutation test when that mode is selected.
    """
    mode = resolve_mode(rho_hat, policy)
    if mode is TestMode.IID:
        pv = float(nulldist.pvalue_iid(stats.r_max, p, n, s))
        return TestOutcome(stats, pv, mode, rho_hat)
    if mode is TestMode.EQUICORR:
        rho = 0.0 if rho_hat is None else rho_hat
        # a forced run may see rho_hat below the smallest valid equicorrelation
        rho = max(rho, -1.0 / (p - 1)) if p > 1 else rho
        ctx = nulldist.EquicorrContext(rho, p, n, s, nodes=nodes, c_switch=c_switch)
        pv = nulldist.pvalue_equicorr(stats.r_max, stats.u_max, ctx)
        return TestOutcome(stats, pv, mode, rho_hat)
    if permute is None:
        raise ValueError("permutation mode selected but no permutation callable given")
    return permute()


def _max_abs_corr(resid_unit: np.ndarray, y_block: np.ndarray) -> np.ndarray:
    """Max |corr| per column of ``y_block`` against unit-norm residual columns."""
    ynorm = np.linalg.norm(y_block, axis=0)
    c = resid_unit.T @ y_block
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.abs(c).max(axis=0) / ynorm
    return np.where(ynorm > 0, out, 0.0)


def permutation_pvalue_from_residuals(
    stats: StepStatistics,
    resid_unit: np.ndarray,
    basis: ActiveBasis,
    y: np.ndarray,
    q: int,
    seed,
    batch: int = 64,
) -> TestOutcome:
    """Permutation p-value given precomputed unit-norm inactive residuals.

    Each round permutes the raw response, projects it off ``basis`` and
    recomputes the maximal absolute correlation.  The returned p-value is
    ``(1 + #{R_q >= R}) / (Q + 1)``.
    """
    if q < 1:
        raise ValueError("need at least one permutation")
    rng = np.random.default_rng(seed)
    n = y.shape[0]
    r_obs = stats.r_max
    tol = 1e-12 * max(1.0, r_obs)
    exceed = 0
    done = 0
    while done < q:
        size = min(batch, q - done)
        idx = rng.permuted(np.tile(np.arange(n), (size, 1)), axis=1)
        yb = basis.residualize(y[idx].T)
        exceed += int(np.count_nonzero(_max_abs_corr(resid_unit, yb) >= r_obs - tol))
        done += size
    return TestOutcome(stats, (1.0 + exceed) / (q + 1.0), TestMode.PERMUTATION, None, q)


def permutation_pvalue(
    data: DesignData,
    active: Sequence[int],
    q: int = DEFAULT_PERMUTATIONS,
    seed=0,
) -> TestOutcome:
    """Permutation test of the maximal partial correlation at ``active``."""
    basis = basis_for(data.x, active)
    inactive = [j for j in range(data.p) if j not in set(active)]
    xs = data.x[:, inactive]
    ref = np.linalg.norm(xs - xs.mean(axis=0), axis=0)
    resid = basis.residualize(xs)
    y_res = basis.residualize(data.y)
    s = basis.size - 1
    stats = step_statistics(resid, y_res, data.n, s, inactive, ref)
    resid_unit = unit_columns(resid, ref)
    return permutation_pvalue_from_residuals(stats, resid_unit, basis, data.y, q, seed)


def unit_columns(resid: np.ndarray, reference_norms) -> np.ndarray:
    """Scale residual columns to unit norm; zero-norm columns become zero."""
    norms = np.linalg.norm(resid, axis=0)
    live = (norms > 0.0) & (norms > ZERO_NORM_RTOL * np.asarray(reference_norms))
    out = np.zeros_like(resid)
    out[:, live] = resid[:, live] / norms[live]
    return out
