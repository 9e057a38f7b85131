"""Dense kernels and the incremental projector used to form partial residuals.

The projector onto ``span{1, x_j : j in A}`` is held as an orthonormal basis
that grows one column at a time.  Each extension costs O(n * k) for a basis of
``k`` columns, so a selection run that admits one covariate per step never
refactors the active design.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

INTERCEPT = -1
"""Source index recorded for the all-ones column of an :class:`ActiveBasis`."""


class RankDeficientError(ValueError):
    """Raised when a vector lies in the span of a basis within tolerance."""


class ZeroNormError(ValueError):
    """Raised when a correlation is requested for a zero-norm vector."""


class DesignError(ValueError):
    """Raised when a design/response pair cannot be used for selection."""


def center(v: np.ndarray) -> np.ndarray:
    """Return ``v - mean(v)``; 2-D input is centered column-wise."""
    v = np.asarray(v, dtype=float)
    return v - v.mean(axis=0)


@dataclass(frozen=True)
class DesignData:
    """Observation matrix and response with per-column metadata.

    Use :meth:`from_arrays` rather than the constructor; it validates the
    inputs and fills in the column statistics.
    """

    x: np.ndarray
    y: np.ndarray
    column_means: np.ndarray
    column_sds: np.ndarray
    degenerate_columns: frozenset
    names: tuple = ()

    @classmethod
    def from_arrays(cls, x, y, names: Sequence[str] | None = None) -> "DesignData":
        x = np.array(x, dtype=float, copy=True)
        y = np.array(y, dtype=float, copy=True).ravel()
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2:
            raise DesignError(f"design must be 2-D, got shape {x.shape}")
        n, p = x.shape
        if y.shape[0] != n:
            raise DesignError(f"response has {y.shape[0]} rows, design has {n}")
        if n < 3:
            raise DesignError(f"need at least 3 observations, got {n}")
        if p < 1:
            raise DesignError("design has no columns")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise DesignError("design and response must be finite")
        means = x.mean(axis=0)
        sds = x.std(axis=0, ddof=1)
        # exact-zero test on the centered values; sd is noisy at ~1e-17
        spread = np.ptp(x, axis=0)
        degenerate = frozenset(int(j) for j in np.flatnonzero(spread == 0.0))
        sds[list(degenerate)] = 0.0
        if np.ptp(y) == 0.0:
            raise DesignError("response has zero variance")
        if names is None:
            names = tuple(f"x{j + 1}" for j in range(p))
        else:
            names = tuple(str(s) for s in names)
            if len(names) != p:
                raise DesignError(f"{len(names)} names for {p} columns")
        x.setflags(write=False)
        y.setflags(write=False)
        return cls(x, y, means, sds, degenerate, names)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    def subset(self, rows: np.ndarray) -> "DesignData":
        return DesignData.from_arrays(self.x[rows], self.y[rows], self.names)


@dataclass(frozen=True)
class ActiveBasis:
    """Orthonormal basis of ``span{1, x_j : j in A}``.

    ``q`` holds the basis as columns of an ``n x k`` array.  Instances are
    immutable; :meth:`extend` returns a new basis.
    """

    q: np.ndarray
    source_indices: tuple = ()
    rank_tolerance: float = 1e-8

    @classmethod
    def intercept(cls, n: int, rank_tolerance: float = 1e-8) -> "ActiveBasis":
        q = np.full((n, 1), 1.0 / np.sqrt(n))
        q.setflags(write=False)
        return cls(q, (INTERCEPT,), rank_tolerance)

    @property
    def n(self) -> int:
        return self.q.shape[0]

    @property
    def size(self) -> int:
        return self.q.shape[1]

    @property
    def covariates(self) -> tuple:
        return tuple(j for j in self.source_indices if j != INTERCEPT)

    def residualize(self, v: np.ndarray) -> np.ndarray:
        """Return ``(I - Q Q^T) v``; ``v`` may be a vector or an ``n x m`` array."""
        v = np.asarray(v, dtype=float)
        return v - self.q @ (self.q.T @ v)

    def extend(self, v: np.ndarray, index: int) -> "ActiveBasis":
        """Append the direction of ``v`` not already spanned.

        Gram-Schmidt against the current columns, repeated once to recover the
        orthogonality lost to cancellation.

        Raises
        ------
        RankDeficientError
            If the orthogonal remainder of ``v`` has norm at most
            ``rank_tolerance * ||v||``.
        """
        v = np.asarray(v, dtype=float).ravel()
        if v.shape[0] != self.n:
            raise ValueError(f"vector has length {v.shape[0]}, basis has {self.n} rows")
        scale = np.linalg.norm(v)
        w = self.residualize(v)
        w = self.residualize(w)
        norm = np.linalg.norm(w)
        if scale == 0.0 or norm <= self.rank_tolerance * scale:
            raise RankDeficientError(f"column {index} lies in the span of the active set")
        q = np.column_stack([self.q, w / norm])
        q.setflags(write=False)
        return ActiveBasis(q, self.source_indices + (int(index),), self.rank_tolerance)


def extend_basis(basis: ActiveBasis, v: np.ndarray, index: int) -> ActiveBasis:
    return basis.extend(v, index)


def residualize(basis: ActiveBasis, v: np.ndarray) -> np.ndarray:
    return basis.residualize(v)


def basis_for(x: np.ndarray, active: Sequence[int], rank_tolerance: float = 1e-8) -> ActiveBasis:
    """Build the intercept-plus-``active`` basis, skipping collinear columns."""
    basis = ActiveBasis.intercept(x.shape[0], rank_tolerance)
    for j in active:
        try:
            basis = basis.extend(x[:, j], j)
        except RankDeficientError:
            continue
    return basis


def pearson(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine of the angle between two already-centered vectors.

    Raises
    ------
    ZeroNormError
        If either vector has zero norm.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ZeroNormError("correlation undefined for a zero-norm vector")
    r = float(u @ v / (nu * nv))
    return min(1.0, max(-1.0, r))


def ols_fit(columns: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Minimum-norm least-squares coefficients of ``y`` on ``columns``.

    ``columns`` is the full ``n x k`` design; include a column of ones for an
    intercept.
    """
    columns = np.asarray(columns, dtype=float)
    if columns.ndim == 1:
        columns = columns[:, None]
    coef, *_ = np.linalg.lstsq(columns, np.asarray(y, dtype=float), rcond=None)
    return coef


def refit(x: np.ndarray, y: np.ndarray, support: Sequence[int]) -> tuple[float, np.ndarray]:
    """OLS refit of ``y`` on the intercept and ``x[:, support]``.

    Returns the intercept and a length-``p`` coefficient vector that is zero
    off the support.
    """
    support = list(support)
    n, p = x.shape
    design = np.column_stack([np.ones(n), x[:, support]]) if support else np.ones((n, 1))
    coef = ols_fit(design, y)
    beta = np.zeros(p)
    beta[support] = coef[1:]
    return float(coef[0]), beta
