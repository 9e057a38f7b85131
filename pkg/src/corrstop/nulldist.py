"""Null distributions of the maximal absolute partial correlation.

Notation used throughout: ``p`` covariates, ``n`` observations, ``s`` active
covariates, ``nu = n - s - 2`` residual degrees of freedom and ``m = p - s``
inactive candidates.  A single squared partial correlation under the null is
``Beta(1/2, nu/2)``.

Two families of null laws live here:

* the independent-covariate limit law, with standardizing constants ``a``,
  ``b``, ``c`` and limit CDF :func:`limit_cdf`;
* the equicorrelated approximation, where the signed maximum is modelled as
  ``sqrt(1 - rho) * M + h_rho * C`` with ``M`` the maximum of ``m`` independent
  signed correlations and ``C`` one more correlation, and the two terms are
  combined by convolution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import special


class DomainError(ValueError):
    """Arguments outside the domain of a null-distribution formula."""


class QuadratureFailure(ArithmeticError):
    """Adaptive quadrature did not reach its relative tolerance."""


def _dof(n: int, s: int) -> int:
    if n < s + 3:
        raise DomainError(f"need n >= s + 3, got n={n}, s={s}")
    return n - s - 2


# -- Beta(1/2, nu/2) ---------------------------------------------------------


def beta_half_pdf(x, n: int, s: int):
    """Density of ``Beta(1/2, (n - s - 2)/2)`` on ``(0, 1)``."""
    nu = _dof(n, s)
    x = np.asarray(x, dtype=float)
    if np.any((x <= 0.0) | (x >= 1.0)):
        raise DomainError("beta_half_pdf is defined on the open interval (0, 1)")
    logpdf = -0.5 * np.log(x) + (0.5 * nu - 1.0) * np.log1p(-x) - special.betaln(0.5, 0.5 * nu)
    out = np.exp(logpdf)
    return out if out.ndim else float(out)


def beta_half_cdf(x, n: int, s: int):
    """CDF of ``Beta(1/2, (n - s - 2)/2)``, clipped to ``[0, 1]`` outside the support."""
    nu = _dof(n, s)
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    out = special.betainc(0.5, 0.5 * nu, x)
    return out if out.ndim else float(out)


def beta_half_sf(x, n: int, s: int):
    nu = _dof(n, s)
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    out = special.betaincc(0.5, 0.5 * nu, x)
    return out if out.ndim else float(out)


# -- independent covariates --------------------------------------------------


@dataclass(frozen=True)
class NullParams:
    """Standardizing constants for ``(R**2 - a) / b``.

    ``qc`` caches ``(p - s)**(-2/nu) * c``, the quantity both ``a`` and ``b``
    are built from; ``1 - a == qc`` exactly.
    """

    a: float
    b: float
    c: float
    p: int
    n: int
    s: int
    qc: float

    @property
    def dof(self) -> int:
        return self.n - self.s - 2


@lru_cache(maxsize=4096)
def null_params(p: int, n: int, s: int) -> NullParams:
    """Constants of the limit law for ``p`` covariates, ``n`` rows, ``s`` active.

    Everything is assembled in log space; the Beta function overflows for
    moderate ``n`` otherwise.
    """
    p, n, s = int(p), int(n), int(s)
    nu = _dof(n, s)
    m = p - s
    if m < 2:
        raise DomainError(f"need p >= s + 2, got p={p}, s={s}")
    log_q = -2.0 / nu * math.log(m)
    one_minus_q = -math.expm1(log_q)
    log_c = (2.0 / nu) * (
        math.log(0.5 * nu) + special.betaln(0.5, 0.5 * nu) + 0.5 * math.log(one_minus_q)
    )
    qc = math.exp(log_q + log_c)
    return NullParams(
        a=1.0 - qc,
        b=2.0 / nu * qc,
        c=math.exp(log_c),
        p=p,
        n=n,
        s=s,
        qc=qc,
    )


def limit_cdf(x, n: int, s: int):
    """Limit CDF of the standardized squared maximum; equals 1 beyond ``nu / 2``."""
    nu = _dof(n, s)
    x = np.asarray(x, dtype=float)
    base = np.clip(1.0 - 2.0 * x / nu, 0.0, None)
    with np.errstate(over="ignore"):
        out = np.where(x > 0.5 * nu, 1.0, np.exp(-(base ** (0.5 * nu))))
    return out if out.ndim else float(out)


def limit_quantile(prob, n: int, s: int):
    """Inverse of :func:`limit_cdf` for ``prob`` in ``(0, 1]``."""
    nu = _dof(n, s)
    prob = np.asarray(prob, dtype=float)
    if np.any((prob <= 0.0) | (prob > 1.0)):
        raise DomainError("quantile probabilities must lie in (0, 1]")
    out = 0.5 * nu * (1.0 - (-np.log(prob)) ** (2.0 / nu))
    return out if out.ndim else float(out)


def pvalue_iid(r_obs, p: int, n: int, s: int):
    """Upper-tail p-value of an observed maximal absolute correlation.

    The observed value is squared before standardizing.  With ``a + qc = 1``
    the survival function simplifies to
    ``1 - exp(-((1 - r**2) / qc) ** (nu / 2))``, which is evaluated with
    ``expm1`` so that small p-values keep their relative precision.

    When a single candidate remains (``p - s == 1``) the limit law is
    degenerate and the exact ``Beta(1/2, nu/2)`` tail of that one squared
    correlation is returned instead.
    """
    r = np.asarray(r_obs, dtype=float)
    if np.any((r < 0.0) | (r > 1.0)) or np.any(np.isnan(r)):
        raise DomainError("r_obs must lie in [0, 1]")
    if p - s == 1:
        out = beta_half_sf(r * r, n, s)
        return out
    params = null_params(p, n, s)
    nu = params.dof
    with np.errstate(divide="ignore"):
        log_w = 0.5 * nu * (np.log1p(-r * r) - math.log(params.qc))
    out = -np.expm1(-np.exp(log_w))
    out = np.clip(out, 0.0, 1.0)
    return out if out.ndim else float(out)


def max_t(r, n: int, s: int):
    """Maximal t statistic ``sqrt(nu r^2 / (1 - r^2))``."""
    nu = _dof(n, s)
    r = np.asarray(r, dtype=float)
    if np.any(np.abs(r) >= 1.0):
        raise DomainError("max_t needs |r| < 1")
    out = np.sqrt(nu * r * r / (1.0 - r * r))
    return out if out.ndim else float(out)


def t_params(p: int, n: int, s: int) -> tuple[float, float]:
    """Centering and scale of the maximal t statistic."""
    params = null_params(p, n, s)
    a = params.a
    if not 0.0 < a < 1.0:
        raise DomainError(f"a(p, n, s) = {a} outside (0, 1)")
    nu = params.dof
    return math.sqrt(nu * a / (1.0 - a)), 1.0 / math.sqrt(nu * a * (1.0 - a))


def pvalue_t(t_obs, p: int, n: int, s: int):
    a_t, b_t = t_params(p, n, s)
    t_obs = np.asarray(t_obs, dtype=float)
    out = 1.0 - limit_cdf((t_obs - a_t) / b_t, n, s)
    return out if np.ndim(out) else float(out)


# -- equicorrelated covariates -----------------------------------------------


def h_rho(rho: float, p: int) -> float:
    """Loading of the common factor in the equicorrelated decomposition."""
    if p < 2:
        raise DomainError("h_rho needs p >= 2")
    lower = -1.0 / (p - 1)
    if not lower <= rho <= 1.0:
        raise DomainError(f"rho={rho} outside [{lower}, 1]")
    return (math.sqrt(max(0.0, 1.0 + (p - 1) * rho)) - math.sqrt(1.0 - rho)) / math.sqrt(p)


def _log_signed_cdf(x, nu: float):
    """log P(corr <= x) for one signed null correlation, ``x`` in [-1, 1]."""
    x = np.asarray(x, dtype=float)
    sf = special.betaincc(0.5, 0.5 * nu, np.clip(x * x, 0.0, 1.0))
    with np.errstate(divide="ignore"):
        return np.where(x >= 0.0, np.log1p(-0.5 * sf), np.log(0.5 * sf))


def _check_open_interval(x):
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(x) >= 1.0):
        raise DomainError("density defined on the open interval (-1, 1)")
    return x


def log_density_f2(x, n: int, s: int):
    nu = _dof(n, s)
    x = _check_open_interval(x)
    out = (0.5 * nu - 1.0) * np.log1p(-x * x) - special.betaln(0.5, 0.5 * nu)
    return out if out.ndim else float(out)


def density_f2(x, n: int, s: int):
    """Density of one signed null correlation, ``|x| f_B(x^2)``."""
    out = np.exp(log_density_f2(x, n, s))
    return out if np.ndim(out) else float(out)


def log_density_f1(x, p: int, n: int, s: int):
    """Log density of the maximum of ``p - s`` independent signed correlations.

    The maximum of ``m`` draws has density ``m g(x) G(x)**(m - 1)``, with
    ``g = f2`` and ``G`` the signed-correlation CDF.  The power underflows for
    realistic ``m``, hence the log domain.
    """
    m = p - s
    if m < 1:
        raise DomainError("need p > s")
    lg = log_density_f2(x, n, s)
    out = math.log(m) + lg + (m - 1) * _log_signed_cdf(x, n - s - 2)
    return out if np.ndim(out) else float(out)


@dataclass(frozen=True)
class EquicorrContext:
    """Parameters of the equicorrelated null approximation.

    ``nodes`` is the starting Gauss-Legendre node count; quadratures double it
    until successive estimates agree to ``rtol`` or ``max_nodes`` is passed.
    """

    rho: float
    p: int
    n: int
    s: int
    nodes: int = 512
    c_switch: float = 0.01
    rtol: float = 1e-4
    max_nodes: int = 1 << 15
    h: float = field(init=False)

    def __post_init__(self):
        _dof(self.n, self.s)
        if self.p - self.s < 1:
            raise DomainError("need p > s")
        if self.rho >= 1.0:
            raise DomainError("equicorrelated approximation needs rho < 1")
        if not 0.0 < self.c_switch < 1.0:
            raise DomainError("c_switch must lie in (0, 1)")
        object.__setattr__(self, "h", h_rho(self.rho, self.p))

    @property
    def dof(self) -> int:
        return self.n - self.s - 2

    @property
    def inactive(self) -> int:
        return self.p - self.s


@lru_cache(maxsize=32)
def _legendre(nodes: int):
    x, w = np.polynomial.legendre.leggauss(nodes)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def _factor_rule(ctx: EquicorrContext, nodes: int):
    """Nodes and weights for integrals against the scaled common-factor density.

    Substituting ``x = |h| sin(theta)`` turns ``f2(x / h) / h dx`` into
    ``cos(theta)**(nu - 1) / B(1/2, nu/2) dtheta``, which is bounded for every
    ``nu >= 1`` and removes the endpoint singularity at ``nu = 1``.
    """
    z, w = _legendre(nodes)
    theta = 0.5 * np.pi * z
    weights = 0.5 * np.pi * w * np.exp(
        (ctx.dof - 1.0) * np.log(np.cos(theta)) - special.betaln(0.5, 0.5 * ctx.dof)
    )
    return abs(ctx.h) * np.sin(theta), weights


def _max_term_sf(y, ctx: EquicorrContext):
    """Survival function of ``sqrt(1 - rho) * M``."""
    scale = math.sqrt(1.0 - ctx.rho)
    y = np.asarray(y, dtype=float) / scale
    inside = np.clip(y, -1.0, 1.0)
    sf = -np.expm1(ctx.inactive * _log_signed_cdf(inside, ctx.dof))
    return np.where(y >= 1.0, 0.0, np.where(y <= -1.0, 1.0, sf))


def _max_term_density(y, ctx: EquicorrContext):
    scale = math.sqrt(1.0 - ctx.rho)
    y = np.asarray(y, dtype=float) / scale
    inside = np.abs(y) < 1.0
    out = np.zeros_like(y)
    out[inside] = np.exp(log_density_f1(y[inside], ctx.p, ctx.n, ctx.s)) / scale
    return out


# values this small are underflow noise; relative agreement is meaningless there
_ABS_FLOOR = 1e-250


def _adaptive(evaluate, ctx: EquicorrContext, what: str):
    nodes = ctx.nodes
    prev = evaluate(nodes)
    while nodes < ctx.max_nodes:
        nodes *= 2
        cur = evaluate(nodes)
        if np.all(np.abs(cur - prev) <= ctx.rtol * np.abs(cur) + _ABS_FLOOR):
            return cur
        prev = cur
    raise QuadratureFailure(f"{what} did not converge to rtol={ctx.rtol} with {nodes} nodes")


def _untruncated_sf(t, ctx: EquicorrContext):
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if ctx.h == 0.0:
        return _max_term_sf(t, ctx)

    def evaluate(nodes):
        x, w = _factor_rule(ctx, nodes)
        return _max_term_sf(t[:, None] - x[None, :], ctx) @ w

    return _adaptive(evaluate, ctx, "equicorrelated tail")


def density_f3(z, ctx: EquicorrContext):
    """Convolution density of the approximate signed maximum, by quadrature.

    Not truncated to ``[-1, 1]``; :func:`tail_prob_equicorr` renormalizes.
    """
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if ctx.h == 0.0:
        out = _max_term_density(z, ctx)
    else:

        def evaluate(nodes):
            x, w = _factor_rule(ctx, nodes)
            return _max_term_density(z[:, None] - x[None, :], ctx) @ w

        out = _adaptive(evaluate, ctx, "convolution density")
    return out if out.size > 1 else float(out[0])


def tail_prob_equicorr(t, ctx: EquicorrContext):
    """Approximate ``P(U >= t)`` for the signed maximal correlation ``U``.

    The inner integral of the convolution is available in closed form (the
    maximum of ``m`` iid correlations has CDF ``G**m``), so only the
    common-factor integral is done numerically.  The approximate density puts
    a little mass outside ``[-1, 1]``; since ``U`` is a correlation the law is
    truncated to that interval and renormalized.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    ends = _untruncated_sf(np.array([-1.0, 1.0]), ctx)
    mass = ends[0] - ends[1]
    out = np.ones_like(t)
    out[t >= 1.0] = 0.0
    inside = (t > -1.0) & (t < 1.0)
    if np.any(inside):
        out[inside] = (_untruncated_sf(t[inside], ctx) - ends[1]) / mass
    out = np.clip(out, 0.0, 1.0)
    return out if out.size > 1 else float(out[0])


def pvalue_equicorr(r_obs: float, u_obs: float, ctx: EquicorrContext) -> float:
    """Two-sided p-value when it is small, one-sided fallback otherwise.

    ``2 * P(U >= r_obs)`` bounds ``P(R >= r_obs)`` from above and is tight in
    the far tail; once it exceeds ``ctx.c_switch`` the p-value of the positive
    maximum ``u_obs`` is reported instead.
    """
    if r_obs < u_obs - 1e-12:
        raise DomainError("r_obs must be at least u_obs")
    two_sided = 2.0 * tail_prob_equicorr(r_obs, ctx)
    if two_sided <= ctx.c_switch:
        return float(min(1.0, max(0.0, two_sided)))
    return float(min(1.0, max(0.0, tail_prob_equicorr(u_obs, ctx))))
