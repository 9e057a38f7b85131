"""Simulation models, metrics, the CV baseline and the experiment runner.

An experiment is described by a plain-text ``key = value`` file (see
:func:`parse_spec`).  Every replication draws a fresh training and test set
from per-replication seeds spawned off the master seed, so serial and
threaded runs give the same report apart from wall times.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .linalg import DesignData, refit
from .nulldist import DomainError, h_rho
from .procedure import SelectionConfig, run_selection
from .selectors import Method, run_path
from .testing import TestMode


class DesignKind(str, enum.Enum):
    EQUICORR = "equicorr"
    AR1 = "ar1"
    T5 = "t5"


class NoiseKind(str, enum.Enum):
    GAUSSIAN = "gaussian"
    T5 = "t5"
    T5_UNIT = "t5_unit"  # t5 scaled to unit variance


@dataclass(frozen=True, eq=False)
class GenerativeModel:
    """Sparse linear model ``y = X beta + sigma * eps``.

    ``rho`` is the pairwise correlation for ``EQUICORR`` and the lag-one
    correlation for ``AR1``; it is ignored for ``T5``.  t5 designs are used
    raw; ``NoiseKind.T5`` is raw t5 noise and ``NoiseKind.T5_UNIT`` rescales it
    to unit variance so that ``sigma`` is the noise standard deviation.
    """

    beta: np.ndarray
    sigma: float
    design: DesignKind = DesignKind.EQUICORR
    rho: float = 0.0
    noise: NoiseKind = NoiseKind.GAUSSIAN

    def __post_init__(self):
        object.__setattr__(self, "beta", np.asarray(self.beta, dtype=float))
        object.__setattr__(self, "design", DesignKind(self.design))
        object.__setattr__(self, "noise", NoiseKind(self.noise))
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")

    @property
    def p(self) -> int:
        return self.beta.shape[0]

    @property
    def support(self) -> frozenset:
        return frozenset(int(j) for j in np.flatnonzero(self.beta))


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def gen_design(n: int, p: int, design: DesignKind | str, rho: float = 0.0, seed=None) -> np.ndarray:
    """Draw an ``n x p`` design.

    ``EQUICORR`` mixes iid normals with their scaled row sum,
    ``x_j = sqrt(1 - rho) z_j + h_rho * sum_i z_i / sqrt(p)``, which gives
    pairwise correlation ``rho`` at O(np) cost.  ``AR1`` runs the recursion
    ``x_j = rho x_{j-1} + sqrt(1 - rho^2) z_j``.  ``T5`` draws iid t5 entries.
    """
    design = DesignKind(design)
    if n < 1 or p < 1:
        raise DomainError("n and p must be positive")
    rng = _rng(seed)
    if design is DesignKind.T5:
        return rng.standard_t(5, size=(n, p))
    z = rng.standard_normal((n, p))
    if design is DesignKind.EQUICORR:
        h = h_rho(rho, p)
        return math.sqrt(1.0 - rho) * z + h * (z.sum(axis=1, keepdims=True) / math.sqrt(p))
    if not -1.0 < rho < 1.0:
        raise DomainError(f"AR1 needs |rho| < 1, got {rho}")
    x = np.empty_like(z)
    x[:, 0] = z[:, 0]
    scale = math.sqrt(1.0 - rho * rho)
    for j in range(1, p):
        x[:, j] = rho * x[:, j - 1] + scale * z[:, j]
    return x


def gen_response(x: np.ndarray, model: GenerativeModel, seed=None) -> np.ndarray:
    if x.shape[1] != model.p:
        raise ValueError(f"design has {x.shape[1]} columns, model has {model.p}")
    rng = _rng(seed)
    n = x.shape[0]
    if model.noise is NoiseKind.T5:
        eps = rng.standard_t(5, size=n)
    elif model.noise is NoiseKind.T5_UNIT:
        eps = rng.standard_t(5, size=n) * math.sqrt(3.0 / 5.0)
    else:
        eps = rng.standard_normal(n)
    return x @ model.beta + model.sigma * eps


def example_model(example: int, p: int = 2000, sigma: float | None = None, rho: float | None = None) -> GenerativeModel:
    """Registered simulation models.

    1. ``3 x1 - 1.5 x2 + 2 x3``, equicorrelated Gaussian design
       (defaults ``rho = 0``, ``sigma = 2``).
    2. ``2 (x1 + ... + x10)``, AR(1) Gaussian design
       (defaults ``rho = 0.5``, ``sigma = 3``).
    3. Example 1's coefficients with a raw iid t5 design and unit-variance t5
       noise (default ``sigma = 4``), so the noise floor of the test MSE is
       ``sigma**2``.
    """
    beta = np.zeros(p)
    if example in (1, 3):
        if p < 3:
            raise DomainError("examples 1 and 3 need p >= 3")
        beta[:3] = (3.0, -1.5, 2.0)
    elif example == 2:
        if p < 10:
            raise DomainError("example 2 needs p >= 10")
        beta[:10] = 2.0
    else:
        raise ValueError(f"unknown example {example}")
    if example == 1:
        return GenerativeModel(beta, 2.0 if sigma is None else sigma, DesignKind.EQUICORR, 0.0 if rho is None else rho)
    if example == 2:
        return GenerativeModel(beta, 3.0 if sigma is None else sigma, DesignKind.AR1, 0.5 if rho is None else rho)
    return GenerativeModel(beta, 4.0 if sigma is None else sigma, DesignKind.T5, 0.0, NoiseKind.T5_UNIT)


def draw(model: GenerativeModel, n: int, seed=None) -> tuple[np.ndarray, np.ndarray]:
    rng = _rng(seed)
    x = gen_design(n, model.p, model.design, model.rho, rng)
    return x, gen_response(x, model, rng)


@dataclass(frozen=True)
class Metrics:
    fn: int
    fp: int
    mse: float


def metrics(
    estimated_support: Sequence[int],
    true_support: Sequence[int],
    fitted: tuple[float, np.ndarray],
    test_x: np.ndarray,
    test_y: np.ndarray,
) -> Metrics:
    """Support errors and out-of-sample MSE.

    ``fitted`` is ``(intercept, beta)`` from :func:`linalg.refit` on the
    training data restricted to ``estimated_support``.
    """
    est = set(int(j) for j in estimated_support)
    true = set(int(j) for j in true_support)
    intercept, beta = fitted
    resid = np.asarray(test_y) - intercept - np.asarray(test_x) @ beta
    return Metrics(len(true - est), len(est - true), float(np.mean(resid**2)))


def _fold_ids(n: int, folds: int, seed) -> np.ndarray:
    rng = _rng(seed)
    ids = np.arange(n) % folds
    rng.shuffle(ids)
    return ids


def _path_supports(data: DesignData, method: Method, max_steps: int | None) -> list[tuple]:
    states = run_path(data, method, max_steps)
    return [tuple(s.active) for s in states]


def cv_baseline(
    data: DesignData,
    method: Method | str,
    folds: int = 10,
    seed=0,
    max_steps: int | None = None,
) -> tuple:
    """Active set chosen by K-fold cross-validation over path steps.

    Each fold runs the selector on its training part; the model after step
    ``k`` is refit by OLS and scored on the held-out part.  The step with the
    smallest mean held-out squared error is applied to the full-data path.
    """
    method = Method(method)
    if folds < 2:
        raise ValueError("need at least 2 folds")
    if folds > data.n:
        raise ValueError(f"{folds} folds for {data.n} observations")
    full = _path_supports(data, method, max_steps)
    ids = _fold_ids(data.n, folds, seed)
    n_steps = len(full)
    sse = np.zeros(n_steps)
    for f in range(folds):
        test = ids == f
        train = data.subset(np.flatnonzero(~test))
        supports = _path_supports(train, method, max_steps)
        xt, yt = data.x[test], data.y[test]
        for k in range(n_steps):
            support = supports[min(k, len(supports) - 1)]
            b0, beta = refit(train.x, train.y, support)
            sse[k] += float(np.sum((yt - b0 - xt @ beta) ** 2))
    best = int(np.argmin(sse))  # first minimum: smallest model on ties
    return full[best]


@dataclass(frozen=True)
class Procedure:
    """A selector paired with a stopping rule (a test mode or ``cv``)."""

    method: Method
    rule: str

    @classmethod
    def parse(cls, text: str) -> "Procedure":
        method, _, rule = text.strip().lower().partition("-")
        rule = rule or "auto"
        if rule != "cv":
            TestMode(rule)
        return cls(Method(method), rule)

    @property
    def label(self) -> str:
        return f"{self.method.value}-{self.rule}"

    @property
    def uses_gamma(self) -> bool:
        return self.rule != "cv"


@dataclass(frozen=True)
class ExperimentSpec:
    example: int = 1
    n: int = 200
    p: int = 2000
    rho: float | None = None
    sigma: float | None = None
    procedures: tuple = (Procedure(Method.LARS, "auto"),)
    gammas: tuple = (0.01, 0.05, 0.2, 0.5)
    reps: int = 100
    seed: int = 0
    folds: int = 10
    q: int = 500
    n_test: int = 500
    cv_max_steps: int | None = None

    def model(self) -> GenerativeModel:
        return example_model(self.example, self.p, self.sigma, self.rho)

    def grid(self) -> list[tuple[Procedure, float | None]]:
        rows = []
        for proc in self.procedures:
            if proc.uses_gamma:
                rows.extend((proc, g) for g in self.gammas)
            else:
                rows.append((proc, None))
        return rows


_INT_KEYS = {"example", "n", "p", "reps", "seed", "folds", "q", "n_test", "cv_max_steps"}
_FLOAT_KEYS = {"rho", "sigma"}


def parse_spec(text: str) -> ExperimentSpec:
    """Parse an experiment file.

    One ``key = value`` per line; ``#`` starts a comment.  Keys: ``example``
    (1, 2 or 3), ``n``, ``p``, ``rho``, ``sigma``, ``methods`` (comma list of
    ``fsr``/``lars``/``lasso``), ``modes`` (comma list of ``auto``, ``iid``,
    ``equicorr``, ``perm``, ``cv``; every method is paired with every mode),
    ``gammas`` (comma list), ``reps``, ``seed``, ``folds``, ``q``
    (permutations), ``n_test`` and ``cv_max_steps``.
    """
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"line {lineno}: expected key = value")
        key, value = key.strip().lower(), value.strip()
        try:
            if key in _INT_KEYS:
                values[key] = int(value)
            elif key in _FLOAT_KEYS:
                values[key] = float(value)
            elif key == "gammas":
                values[key] = tuple(float(v) for v in value.split(",") if v.strip())
            elif key in ("methods", "modes"):
                values[key] = tuple(v.strip().lower() for v in value.split(",") if v.strip())
            else:
                raise ValueError(f"unknown key {key!r}")
        except ValueError as err:
            raise ValueError(f"line {lineno}: {err}") from None
    methods = values.pop("methods", ("lars",))
    modes = values.pop("modes", ("auto",))
    try:
        procedures = tuple(Procedure.parse(f"{m}-{r}") for m in methods for r in modes)
    except ValueError as err:
        raise ValueError(f"bad methods/modes: {err}") from None
    spec = ExperimentSpec(procedures=procedures, **values)
    for g in spec.gammas:
        if not 0.0 <= g < 1.0:
            raise ValueError(f"gamma {g} outside [0, 1)")
    if spec.reps < 0 or spec.folds < 2 or spec.q < 1:
        raise ValueError("reps must be >= 0, folds >= 2 and q >= 1")
    spec.model()
    return spec


def bundled_specs() -> list[str]:
    return sorted(p.stem for p in (Path(__file__).parent / "specs").glob("*.cfg"))


def load_spec(path: str | Path) -> ExperimentSpec:
    """Read a spec file; a bare name such as ``example1_smoke`` selects a bundled spec."""
    path = Path(path)
    if not path.exists() and path.suffix == "" and str(path) in bundled_specs():
        path = Path(__file__).parent / "specs" / f"{path}.cfg"
    return parse_spec(path.read_text())


@dataclass(frozen=True)
class ReportRow:
    method: str
    gamma: float | None
    mse: float
    se_mse: float
    fn: float
    se_fn: float
    fp: float
    se_fp: float
    time: float
    se_time: float
    successes: int


@dataclass(frozen=True)
class ExperimentReport:
    rows: tuple
    reps: int
    seed: int
    failures: tuple = ()
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def success_fraction(self) -> float:
        total = self.reps * max(len(self.rows), 1)
        return 1.0 if total == 0 else 1.0 - len(self.failures) / total

    def row(self, method: str, gamma: float | None = None) -> ReportRow:
        for r in self.rows:
            if r.method == method and r.gamma == gamma:
                return r
        raise KeyError((method, gamma))

    def to_csv(self, include_time: bool = True) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        cols = ["method", "gamma", "mse", "se_mse", "fn", "se_fn", "fp", "se_fp"]
        if include_time:
            cols += ["time", "se_time"]
        w.writerow(cols + ["successes"])
        for r in self.rows:
            d = asdict(r)
            w.writerow(["" if d[c] is None else (repr(d[c]) if isinstance(d[c], float) else d[c]) for c in cols] + [r.successes])
        return buf.getvalue()

    def to_json(self) -> str:
        def clean(v):
            return None if isinstance(v, float) and not math.isfinite(v) else v

        doc = {
            "reps": self.reps,
            "seed": self.seed,
            "rows": [{k: clean(v) for k, v in asdict(r).items()} for r in self.rows],
            "failures": [list(f) for f in self.failures],
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _summary(values: list[float]) -> tuple[float, float]:
    if not values:
        return math.nan, math.nan
    a = np.asarray(values, dtype=float)
    se = float(a.std(ddof=1) / math.sqrt(a.size)) if a.size > 1 else math.nan
    return float(a.mean()), se


def _replicate(spec: ExperimentSpec, model: GenerativeModel, grid, rep: int, seq: np.random.SeedSequence):
    train_seq, test_seq, cv_seq = seq.spawn(3)
    x, y = draw(model, spec.n, np.random.default_rng(train_seq))
    tx, ty = draw(model, spec.n_test, np.random.default_rng(test_seq))
    data = DesignData.from_arrays(x, y)
    perm_seed = int(cv_seq.generate_state(1)[0])
    cv_seed = np.random.default_rng(cv_seq)
    results = {}
    failures = []
    for proc, gamma in grid:
        key = (proc.label, gamma)
        started = time.perf_counter()
        try:
            if proc.rule == "cv":
                support = cv_baseline(data, proc.method, spec.folds, cv_seed, spec.cv_max_steps)
            else:
                cfg = SelectionConfig(
                    method=proc.method, gamma=gamma, test_mode=proc.rule, permutation_q=spec.q, seed=perm_seed
                )
                support = run_selection(data, cfg).final_active
            elapsed = time.perf_counter() - started
            m = metrics(support, model.support, refit(x, y, support), tx, ty)
            results[key] = (m, elapsed)
        except Exception as err:  # recorded, the batch goes on
            failures.append((rep, proc.label, gamma, f"{type(err).__name__}: {err}"))
    return results, failures


def run_experiment(spec: ExperimentSpec, threads: int = 1) -> ExperimentReport:
    """Run every procedure of ``spec`` on ``spec.reps`` fresh datasets.

    Replication ``i`` uses the ``i``-th child of ``SeedSequence(spec.seed)``;
    it is split into training-data, test-data and CV/permutation streams.
    """
    model = spec.model()
    grid = spec.grid()
    seqs = np.random.SeedSequence(spec.seed).spawn(spec.reps)
    jobs = [(spec, model, grid, i, s) for i, s in enumerate(seqs)]
    if threads > 1 and spec.reps > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outputs = list(pool.map(lambda a: _replicate(*a), jobs))
    else:
        outputs = [_replicate(*a) for a in jobs]
    rows = []
    raw = {}
    failures = []
    for _, f in outputs:
        failures.extend(f)
    for proc, gamma in grid:
        key = (proc.label, gamma)
        got = [out[0][key] for out in outputs if key in out[0]]
        raw[key] = got
        mse = _summary([m.mse for m, _ in got])
        fn = _summary([m.fn for m, _ in got])
        fp = _summary([m.fp for m, _ in got])
        tm = _summary([t for _, t in got])
        rows.append(ReportRow(proc.label, gamma, *mse, *fn, *fp, *tm, len(got)))
    return ExperimentReport(tuple(rows), spec.reps, spec.seed, tuple(failures), raw)


def null_max_literal(n: int, p: int, rho: float, reps: int, seed=None) -> np.ndarray:
    """Signed maxima ``U`` under the global null from the equicorrelated generator.

    Each replication draws an ``n x p`` design with :func:`gen_design` and an
    independent Gaussian response, and returns ``max_j corr(x_j, y)``.
    """
    rng = _rng(seed)
    out = np.empty(reps)
    for i in range(reps):
        x = gen_design(n, p, DesignKind.EQUICORR, rho, rng)
        y = rng.standard_normal(n)
        xc = x - x.mean(axis=0)
        yc = y - y.mean()
        out[i] = np.max(xc.T @ yc / (np.linalg.norm(xc, axis=0) * np.linalg.norm(yc)))
    return out


def null_max_reduced(n: int, p: int, rho: float, reps: int, seed=None, chunk: int = 64) -> np.ndarray:
    """Same law as :func:`null_max_literal` at O(p) cost per replication.

    Rotate the centered sample space so the response is the first axis and
    the common factor lies in the span of the first two.  Column ``j`` is
    ``sqrt(1 - rho) z_j + sqrt(rho) w``; its first coordinate is
    ``sqrt(1 - rho) a_j + sqrt(rho) xi_1``, its second
    ``sqrt(1 - rho) b_j + sqrt(rho) xi_2`` with ``xi_2 ~ chi_{n-2}``, and the
    remaining ``n - 3`` coordinates contribute ``(1 - rho) chi^2_{n-3}`` to
    the squared norm.
    """
    if not 0.0 <= rho < 1.0:
        raise DomainError("reduced sampler needs 0 <= rho < 1")
    if n < 4:
        raise DomainError("reduced sampler needs n >= 4")
    rng = _rng(seed)
    out = np.empty(reps)
    sr, s1 = math.sqrt(rho), math.sqrt(1.0 - rho)
    done = 0
    while done < reps:
        k = min(chunk, reps - done)
        xi1 = rng.standard_normal((k, 1))
        xi2 = np.sqrt(rng.chisquare(n - 2, size=(k, 1)))
        f = s1 * rng.standard_normal((k, p)) + sr * xi1
        g = s1 * rng.standard_normal((k, p)) + sr * xi2
        rest = (1.0 - rho) * rng.chisquare(n - 3, size=(k, p))
        out[done : done + k] = np.max(f / np.sqrt(f * f + g * g + rest), axis=1)
        done += k
    return out


def null_max_abs_iid(n: int, p: int, reps: int, seed=None) -> np.ndarray:
    """``R = max_j |corr(x_j, y)|`` under the global null with an iid Gaussian design."""
    rng = _rng(seed)
    out = np.empty(reps)
    for i in range(reps):
        x = rng.standard_normal((n, p))
        y = rng.standard_normal(n)
        xc = x - x.mean(axis=0)
        yc = y - y.mean()
        out[i] = np.max(np.abs(xc.T @ yc) / (np.linalg.norm(xc, axis=0) * np.linalg.norm(yc)))
    return out
