"""Test-based stopping for a sequential selector.

Before each entry the procedure tests whether any inactive covariate is
still associated with the response given the current active set, and stops at
the first step whose p-value exceeds ``gamma``.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass

import numpy as np

from . import testing
from .linalg import DesignData, RankDeficientError, basis_for
from .selectors import EventKind, Method, init_path, next_event
from .testing import StepStatistics, TestMode, TestOutcome


@dataclass(frozen=True)
class SelectionConfig:
    method: Method = Method.LARS
    gamma: float = 0.05
    test_mode: TestMode = TestMode.AUTO
    permutation_q: int = testing.DEFAULT_PERMUTATIONS
    c_switch: float = 0.01
    seed: int = 0
    quadrature_nodes: int = 512

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        object.__setattr__(self, "test_mode", TestMode(self.test_mode))
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        if self.permutation_q < 1:
            raise ValueError("permutation_q must be at least 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["method"] = self.method.value
        d["test_mode"] = self.test_mode.value
        return d


@dataclass(frozen=True)
class StepRecord:
    """One row of a selection trace.

    ``step`` is the test index ``k`` (the active set under test has
    ``k - 1`` members when no variable was dropped).  Drop events are applied
    without a test and carry ``p_value=None``.  The last tested record of a
    trace that stopped on the p-value has ``accepted=False``.
    """

    step: int
    event: str
    variable: int | None
    name: str | None
    active_after: tuple
    p_value: float | None
    mode: str | None
    statistics: StepStatistics | None
    accepted: bool
    skipped: tuple = ()

    def to_dict(self) -> dict:
        stats = None
        if self.statistics is not None:
            stats = asdict(self.statistics)
            if not math.isfinite(stats["t_stat"]):
                stats["t_stat"] = None
        return {
            "step": self.step,
            "event": {"kind": self.event, "variable": self.variable, "name": self.name},
            "active_after": list(self.active_after),
            "p_value": self.p_value,
            "mode": self.mode,
            "statistics": stats,
            "accepted": self.accepted,
            "skipped": list(self.skipped),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StepRecord":
        stats = d["statistics"]
        if stats is not None:
            stats = dict(stats)
            if stats["t_stat"] is None:
                stats["t_stat"] = math.inf
            stats = StepStatistics(**stats)
        ev = d["event"]
        return cls(
            step=d["step"],
            event=ev["kind"],
            variable=ev["variable"],
            name=ev["name"],
            active_after=tuple(d["active_after"]),
            p_value=d["p_value"],
            mode=d["mode"],
            statistics=stats,
            accepted=d["accepted"],
            skipped=tuple(d.get("skipped", ())),
        )


@dataclass(frozen=True)
class SelectionTrace:
    steps: tuple
    final_active: tuple
    final_coefficients: dict
    intercept: float
    rho_hat: float | None
    wall_time: float
    config: SelectionConfig
    stop_reason: str
    names: tuple = ()

    @property
    def tested(self) -> list[StepRecord]:
        return [r for r in self.steps if r.p_value is not None]

    @property
    def p_values(self) -> list[float]:
        return [r.p_value for r in self.tested]

    @property
    def selected_names(self) -> list[str]:
        return [self.names[j] for j in self.final_active] if self.names else []

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "rho_hat": self.rho_hat,
            "steps": [r.to_dict() for r in self.steps],
            "final_active": list(self.final_active),
            "final_names": self.selected_names,
            "final_coefficients": [[int(j), float(v)] for j, v in sorted(self.final_coefficients.items())],
            "intercept": self.intercept,
            "stop_reason": self.stop_reason,
            "names": list(self.names),
            "wall_time": self.wall_time,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "SelectionTrace":
        return cls(
            steps=tuple(StepRecord.from_dict(r) for r in d["steps"]),
            final_active=tuple(d["final_active"]),
            final_coefficients={int(j): v for j, v in d["final_coefficients"]},
            intercept=d["intercept"],
            rho_hat=d["rho_hat"],
            wall_time=d["wall_time"],
            config=SelectionConfig(**d["config"]),
            stop_reason=d["stop_reason"],
            names=tuple(d.get("names", ())),
        )

    @classmethod
    def from_json(cls, text: str) -> "SelectionTrace":
        return cls.from_dict(json.loads(text))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "event_kind", "variable", "p_value", "mode", "R", "U", "V", "T", "accepted"])
        for r in self.steps:
            st = r.statistics
            var = r.name if r.name is not None else ("" if r.variable is None else r.variable)
            w.writerow(
                [
                    r.step,
                    r.event,
                    var,
                    "" if r.p_value is None else repr(r.p_value),
                    r.mode or "",
                    "" if st is None else repr(st.r_max),
                    "" if st is None else repr(st.u_max),
                    "" if st is None else repr(st.v_max),
                    "" if st is None else repr(st.t_stat),
                    int(r.accepted),
                ]
            )
        return buf.getvalue()


class _Residuals:
    """Partial residuals of every column and of ``y`` against the active set."""

    def __init__(self, data: DesignData, active=()):
        self.data = data
        xc = data.x - data.column_means
        self.ref = np.linalg.norm(xc, axis=0)
        self.y_ref = float(np.linalg.norm(data.y - data.y.mean()))
        self.rebuild(active)

    def rebuild(self, active):
        self.basis = basis_for(self.data.x, active)
        self.x = self.basis.residualize(self.data.x)
        self.y = self.basis.residualize(self.data.y)

    def add(self, j: int) -> bool:
        try:
            self.basis = self.basis.extend(self.data.x[:, j], j)
        except RankDeficientError:
            return False
        q = self.basis.q[:, -1]
        self.x -= np.outer(q, q @ self.x)
        self.y -= q * (q @ self.y)
        return True


def _test_step(data, res: _Residuals, active, k, rho_hat, config: SelectionConfig) -> TestOutcome:
    inactive = [j for j in range(data.p) if j not in set(active) and j not in data.degenerate_columns]
    s = len(active)
    if np.linalg.norm(res.y) <= 1e-10 * res.y_ref:
        raise testing.YDegenerateError("response lies in the span of the active set")
    xr = res.x[:, inactive]
    ref = res.ref[inactive]
    stats = testing.step_statistics(xr, res.y, data.n, s, inactive, ref)
    p_eff = s + stats.inactive_count

    def permute():
        unit = testing.unit_columns(xr, ref)
        return testing.permutation_pvalue_from_residuals(
            stats, unit, res.basis, data.y, config.permutation_q, (config.seed, k)
        )

    if stats.inactive_count == 1 and testing.resolve_mode(rho_hat, config.test_mode) is not TestMode.PERMUTATION:
        # a single candidate: its squared correlation is exactly Beta(1/2, nu/2)
        mode = TestMode.IID
    else:
        mode = config.test_mode
    out = testing.pvalue_auto(
        stats,
        p_eff,
        data.n,
        s,
        rho_hat,
        mode,
        c_switch=config.c_switch,
        nodes=config.quadrature_nodes,
        permute=permute,
    )
    return out


def run_selection(data: DesignData, config: SelectionConfig) -> SelectionTrace:
    """Run the selector of ``config.method`` with test-based stopping.

    At step ``k`` the inactive covariates and the response are projected off
    the current active set (plus intercept), the maximal absolute partial
    correlation is tested, and the selector's next entry is accepted only if
    the p-value is at most ``gamma`` and ``k <= n - 2``.  LASSO drop events
    between entries are applied without a test.
    """
    if data.n < 4:
        raise ValueError("need at least 4 observations")
    started = time.perf_counter()
    rho_hat = None
    if config.test_mode in (TestMode.AUTO, TestMode.EQUICORR):
        usable = data.p - len(data.degenerate_columns)
        rho_hat = testing.estimate_rho(data) if usable >= 2 else 0.0

    state = init_path(data, config.method)
    res = _Residuals(data)
    records: list[StepRecord] = []
    names = data.names
    k = 1
    stop_reason = "exhausted"
    accepted_state = state
    while True:
        event = next_event(state)
        if event.kind is EventKind.EXHAUSTED:
            stop_reason = "exhausted"
            break
        if event.kind is EventKind.DROP:
            state = event.post_state
            res.rebuild(state.active)
            records.append(
                StepRecord(k, "drop", event.index, names[event.index], state.active, None, None, None, True, event.skipped)
            )
            accepted_state = state
            continue
        if k > data.n - 2:
            stop_reason = "step_cap"
            break
        try:
            outcome = _test_step(data, res, state.active, k, rho_hat, config)
        except testing.StatisticsError as err:
            stop_reason = f"degenerate: {err}"
            break
        accept = outcome.p_value <= config.gamma
        nxt = event.post_state
        records.append(
            StepRecord(
                k,
                "enter",
                event.index,
                names[event.index],
                nxt.active if accept else state.active,
                float(outcome.p_value),
                outcome.mode.value,
                outcome.statistics,
                accept,
                event.skipped,
            )
        )
        if not accept:
            stop_reason = "p_value"
            break
        state = nxt
        accepted_state = state
        if not res.add(event.index):
            res.rebuild(state.active)
        k += 1

    final = accepted_state
    coef = final.coefficients
    active = tuple(final.active)
    coefs = {j: float(coef[j]) for j in active}
    return SelectionTrace(
        steps=tuple(records),
        final_active=active,
        final_coefficients=coefs,
        intercept=float(final.intercept),
        rho_hat=rho_hat,
        wall_time=time.perf_counter() - started,
        config=config,
        stop_reason=stop_reason,
        names=names,
    )


def replay_trace(data: DesignData, trace: SelectionTrace, config: SelectionConfig | None = None) -> bool:
    """Re-run the selection and compare every recorded p-value.

    Analytic p-values must agree within 1e-10; permutation p-values exactly.
    ``config`` overrides the configuration stored in the trace.
    """
    fresh = run_selection(data, config or trace.config)
    if len(fresh.steps) != len(trace.steps):
        return False
    for a, b in zip(fresh.steps, trace.steps):
        if (a.event, a.variable, a.active_after) != (b.event, b.variable, tuple(b.active_after)):
            return False
        if (a.p_value is None) != (b.p_value is None):
            return False
        if a.p_value is None:
            continue
        if a.mode == TestMode.PERMUTATION.value:
            if a.p_value != b.p_value:
                return False
        elif abs(a.p_value - b.p_value) > 1e-10:
            return False
    return tuple(fresh.final_active) == tuple(trace.final_active)
