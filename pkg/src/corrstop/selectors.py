"""Sequential path engines: forward stepwise, LARS and the LASSO path.

Each engine is driven one event at a time through :func:`next_event`, which
returns a new :class:`PathState` rather than mutating its argument.  All
correlation and equiangular arithmetic is done on internally standardized
columns (centered, unit norm); :attr:`PathState.coefficients` maps back to the
original scale.

LARS and LASSO states sit on knots of the piecewise-linear path.  An
``ENTER(j)`` event moves along the current equiangular direction to the point
where ``j`` ties the active correlation and adds ``j`` with a zero
coefficient.  In LASSO mode a coefficient reaching zero first produces
``DROP(j)`` instead.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .linalg import ActiveBasis, DesignData, RankDeficientError


class Method(str, enum.Enum):
    FSR = "fsr"
    LARS = "lars"
    LASSO = "lasso"


class EventKind(str, enum.Enum):
    ENTER = "enter"
    DROP = "drop"
    EXHAUSTED = "exhausted"


@dataclass(frozen=True, eq=False)
class _Standardized:
    xs: np.ndarray
    yc: np.ndarray
    means: np.ndarray
    norms: np.ndarray
    y_mean: float
    usable: np.ndarray

    @classmethod
    def from_data(cls, data: DesignData) -> "_Standardized":
        xc = data.x - data.column_means
        norms = np.linalg.norm(xc, axis=0)
        usable = norms > 0.0
        usable[list(data.degenerate_columns)] = False
        xs = np.zeros_like(xc)
        xs[:, usable] = xc[:, usable] / norms[usable]
        y_mean = float(data.y.mean())
        xs.setflags(write=False)
        return cls(xs, data.y - y_mean, data.column_means, norms, y_mean, usable)


@dataclass(frozen=True, eq=False)
class PathState:
    """Position on a selection path.

    ``beta`` is on the standardized scale.  ``lam`` is the common absolute
    inner product ``|x_j^T residual|`` of the active (standardized) columns at
    this knot; for FSR it is the largest absolute inner product.
    """

    method: Method
    active: tuple
    signs: tuple
    beta: np.ndarray
    residual: np.ndarray
    step_count: int
    lam: float
    ineligible: frozenset = frozenset()
    basis: ActiveBasis | None = field(default=None, repr=False)
    std: _Standardized | None = field(default=None, repr=False)

    @property
    def coefficients(self) -> np.ndarray:
        out = np.zeros_like(self.beta)
        u = self.std.usable
        out[u] = self.beta[u] / self.std.norms[u]
        return out

    @property
    def intercept(self) -> float:
        return float(self.std.y_mean - self.std.means @ self.coefficients)

    @property
    def current_residual(self) -> np.ndarray:
        return self.residual

    @property
    def cap(self) -> int:
        return min(int(self.std.usable.sum()), self.std.xs.shape[0] - 2)


@dataclass(frozen=True, eq=False)
class StepEvent:
    kind: EventKind
    index: int | None
    post_state: PathState
    skipped: tuple = ()


def init_path(data: DesignData, method: Method | str) -> PathState:
    method = Method(method)
    std = _Standardized.from_data(data)
    p = data.p
    c = std.xs.T @ std.yc
    return PathState(
        method=method,
        active=(),
        signs=(),
        beta=np.zeros(p),
        residual=std.yc.copy(),
        step_count=0,
        lam=float(np.abs(c).max()),
        basis=ActiveBasis.intercept(data.n),
        std=std,
    )


def _exhausted(state: PathState, skipped=()) -> StepEvent:
    return StepEvent(EventKind.EXHAUSTED, None, state, tuple(skipped))


def _candidates(state: PathState) -> np.ndarray:
    mask = state.std.usable.copy()
    mask[list(state.active)] = False
    mask[list(state.ineligible)] = False
    return mask


def _negligible(c: np.ndarray, state: PathState) -> bool:
    scale = np.linalg.norm(state.std.yc)
    return c.size == 0 or float(np.abs(c).max()) <= 1e-12 * max(scale, 1e-300)


def next_event(state: PathState) -> StepEvent:
    """Advance ``state`` to its next path event.

    Covariates that turn out to be collinear with the active set are marked
    ineligible, listed in :attr:`StepEvent.skipped`, and the next candidate
    is taken.
    """
    if len(state.active) >= state.cap:
        return _exhausted(state)
    if state.method is Method.FSR:
        return _fsr_step(state)
    return _lars_step(state)


def _fsr_step(state: PathState) -> StepEvent:
    std = state.std
    cand = _candidates(state)
    c = std.xs.T @ state.residual
    idx = np.flatnonzero(cand)
    if _negligible(c[idx], state):
        return _exhausted(state)
    order = idx[np.argsort(-np.abs(c[idx]), kind="stable")]
    skipped = []
    for j in order:
        if abs(c[j]) <= 1e-12 * np.linalg.norm(std.yc):
            break
        try:
            basis = state.basis.extend(std.xs[:, j], j)
        except RankDeficientError:
            skipped.append(int(j))
            continue
        active = state.active + (int(j),)
        beta = np.zeros_like(state.beta)
        coef, *_ = np.linalg.lstsq(std.xs[:, list(active)], std.yc, rcond=None)
        beta[list(active)] = coef
        residual = basis.residualize(std.yc)
        signs = tuple(int(np.sign(b)) or 1 for b in coef)
        new = replace(
            state,
            active=active,
            signs=signs,
            beta=beta,
            residual=residual,
            step_count=state.step_count + 1,
            lam=float(np.abs(std.xs.T @ residual).max()),
            ineligible=state.ineligible | frozenset(skipped),
            basis=basis,
        )
        return StepEvent(EventKind.ENTER, int(j), new, tuple(skipped))
    return _exhausted(replace(state, ineligible=state.ineligible | frozenset(skipped)), skipped)


def _equiangular(state: PathState):
    """Direction of equal-angle descent for the current active set.

    Returns the coefficient direction ``delta`` (active entries only), the
    normalizing constant ``A_A`` and the fitted direction ``u = X_A delta``.
    """
    xs = state.std.xs
    act = list(state.active)
    xa = xs[:, act]
    signs = np.asarray(state.signs, dtype=float)
    gram = xa.T @ xa
    d0 = np.linalg.solve(gram, signs)
    aa = 1.0 / np.sqrt(signs @ d0)
    delta = aa * d0
    return delta, aa, xa @ delta


def _entry_steps(c, a, big_c, aa, mask):
    """Step length at which each masked column ties the active correlation."""
    with np.errstate(divide="ignore", invalid="ignore"):
        g1 = (big_c - c) / (aa - a)
        g2 = (big_c + c) / (aa + a)
    eps = 1e-12 * big_c / aa
    g1 = np.where(np.isfinite(g1) & (g1 > eps), g1, np.inf)
    g2 = np.where(np.isfinite(g2) & (g2 > eps), g2, np.inf)
    out = np.minimum(g1, g2)
    out[~mask] = np.inf
    return out


def _lars_step(state: PathState) -> StepEvent:
    std = state.std
    xs = std.xs
    c = xs.T @ state.residual
    cand = _candidates(state)
    if not state.active:
        idx = np.flatnonzero(cand)
        if _negligible(c[idx], state):
            return _exhausted(state)
        j = int(idx[np.argmax(np.abs(c[idx]))])
        new = replace(
            state,
            active=(j,),
            signs=(int(np.sign(c[j])),),
            step_count=state.step_count + 1,
            lam=float(abs(c[j])),
            basis=state.basis.extend(xs[:, j], j),
        )
        return StepEvent(EventKind.ENTER, j, new)

    act = list(state.active)
    delta, aa, u = _equiangular(state)
    a = xs.T @ u
    big_c = float(np.mean(np.abs(c[act])))
    if big_c <= 1e-12 * np.linalg.norm(std.yc):
        return _exhausted(state)
    steps = _entry_steps(c, a, big_c, aa, cand)

    drop_gamma, drop_pos = np.inf, None
    if state.method is Method.LASSO:
        beta_a = state.beta[act]
        with np.errstate(divide="ignore", invalid="ignore"):
            g = -beta_a / delta
        eps = 1e-12 * big_c / aa
        g = np.where(np.isfinite(g) & (g > eps) & (beta_a != 0.0), g, np.inf)
        if g.size and np.isfinite(g.min()):
            drop_pos = int(np.argmin(g))
            drop_gamma = float(g[drop_pos])

    skipped = []
    ineligible = set(state.ineligible)
    while True:
        gamma = float(steps.min()) if steps.size else np.inf
        if drop_gamma < gamma:
            return _lasso_drop(state, delta, u, drop_gamma, drop_pos, big_c, aa, skipped)
        if not np.isfinite(gamma):
            return _exhausted(replace(state, ineligible=frozenset(ineligible)), skipped)
        j = int(np.argmin(steps))
        try:
            basis = state.basis.extend(xs[:, j], j)
        except RankDeficientError:
            skipped.append(j)
            ineligible.add(j)
            steps[j] = np.inf
            continue
        break

    beta = state.beta.copy()
    beta[act] += gamma * delta
    residual = state.residual - gamma * u
    c_new = c[j] - gamma * a[j]
    new = replace(
        state,
        active=state.active + (j,),
        signs=state.signs + (int(np.sign(c_new)) or 1,),
        beta=beta,
        residual=residual,
        step_count=state.step_count + 1,
        lam=big_c - gamma * aa,
        ineligible=frozenset(ineligible),
        basis=basis,
    )
    return StepEvent(EventKind.ENTER, j, new, tuple(skipped))


def _lasso_drop(state, delta, u, gamma, pos, big_c, aa, skipped) -> StepEvent:
    act = list(state.active)
    j = act[pos]
    beta = state.beta.copy()
    beta[act] += gamma * delta
    beta[j] = 0.0
    keep = [k for k in range(len(act)) if k != pos]
    active = tuple(act[k] for k in keep)
    signs = tuple(state.signs[k] for k in keep)
    basis = ActiveBasis.intercept(state.std.xs.shape[0])
    for k in active:
        basis = basis.extend(state.std.xs[:, k], k)
    residual = state.std.yc - state.std.xs[:, list(active)] @ beta[list(active)] if active else state.std.yc.copy()
    new = replace(
        state,
        active=active,
        signs=signs,
        beta=beta,
        residual=residual,
        step_count=state.step_count + 1,
        lam=big_c - gamma * aa,
        # collinearity with the old active set says nothing about the new one
        ineligible=frozenset(),
        basis=basis,
    )
    return StepEvent(EventKind.DROP, int(j), new, tuple(skipped))


def kkt_check(state: PathState, lam: float, tol: float = 1e-6) -> bool:
    """Check the LASSO optimality conditions of ``state.beta`` at penalty ``lam``.

    On the standardized scale: every inactive column has
    ``|x_j^T r| <= lam + tol`` and every active column has ``|x_j^T r| = lam``
    within ``tol``, with matching sign where its coefficient is nonzero.  The
    residual is recomputed from ``beta``.
    """
    std = state.std
    r = std.yc - std.xs @ state.beta
    c = std.xs.T @ r
    active = np.zeros(c.shape[0], dtype=bool)
    active[list(state.active)] = True
    inactive = std.usable & ~active
    if np.any(np.abs(c[inactive]) > lam + tol):
        return False
    for j in state.active:
        if abs(abs(c[j]) - lam) > tol:
            return False
        if state.beta[j] != 0.0 and np.sign(c[j]) != np.sign(state.beta[j]):
            return False
    # a nonzero coefficient off the active set also violates stationarity
    return not np.any(state.beta[inactive] != 0.0)


def run_path(data: DesignData, method: Method | str, max_steps: int | None = None) -> list[PathState]:
    """States at every event of the untested path, starting from the empty model."""
    state = init_path(data, method)
    states = [state]
    limit = np.inf if max_steps is None else max_steps
    while len(states) - 1 < limit:
        event = next_event(state)
        if event.kind is EventKind.EXHAUSTED:
            break
        state = event.post_state
        states.append(state)
    return states


def entry_order(data: DesignData, method: Method | str, max_steps: int | None = None) -> list[tuple]:
    """``(kind, index)`` pairs of the untested path."""
    state = init_path(data, method)
    out = []
    while max_steps is None or len(out) < max_steps:
        event = next_event(state)
        if event.kind is EventKind.EXHAUSTED:
            break
        out.append((event.kind, event.index))
        state = event.post_state
    return out


def coefficients_at(states: Sequence[PathState], lam: float) -> np.ndarray:
    """Standardized LARS/LASSO coefficients at penalty ``lam`` by interpolating knots.

    Knot penalties decrease along the path; for ``lam`` above the first knot
    the solution is zero.
    """
    lams = np.array([s.lam for s in states])
    if lam >= lams[0]:
        return np.zeros_like(states[0].beta)
    for k in range(len(states) - 1):
        hi, lo = lams[k], lams[k + 1]
        if lo <= lam <= hi:
            if hi == lo:
                return states[k + 1].beta.copy()
            w = (hi - lam) / (hi - lo)
            return (1.0 - w) * states[k].beta + w * states[k + 1].beta
    raise ValueError(f"lam={lam} below the last knot {lams[-1]}")
