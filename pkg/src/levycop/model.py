"""Jump-size laws, positive Levy copulas and the bivariate compound Poisson model.

Everything here is vectorised over numpy arrays; scalar inputs give scalar
outputs.  A ``BcppModel`` is described by two marginal frequencies, two
marginal jump-size laws and a Levy copula.  The copula fixes how the
marginal jumps split into the two independent parts (jumps of one margin
only) and the dependent part (common shocks), see ``lambda_parallel`` and
the ``*_perp`` / ``*_parallel`` families of functions below.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import ClassVar, Union

import numpy as np

from .errors import ConsistencyError, DomainError, ModelError, UnsupportedOperationError

PROB_SLACK = 1e-12


def _scalar_or_array(a):
    a = np.asarray(a, dtype=float)
    return a[()] if a.ndim == 0 else a


def clamp_probability(p, what="probability"):
    """Clip roundoff overshoot into [0, 1]; larger overshoot is a bug."""
    p = np.asarray(p, dtype=float)
    with np.errstate(invalid="ignore"):
        bad = (p < -PROB_SLACK) | (p > 1.0 + PROB_SLACK)
    if np.any(bad):
        worst = p[bad] if p.ndim else p
        raise ConsistencyError(f"{what} outside [0, 1] beyond roundoff: {np.ravel(worst)[:5]}")
    return np.clip(p, 0.0, 1.0)


# ---------------------------------------------------------------------------
# Jump-size laws
# ---------------------------------------------------------------------------


def _positive(name, value):
    if not (np.isfinite(value) and value > 0):
        raise DomainError(f"{name} must be a finite positive number, got {value!r}")
    return float(value)


@dataclass(frozen=True)
class Exponential:
    """Exponential jump sizes, ``F(x) = 1 - exp(-theta x)``."""

    theta: float
    family: ClassVar[str] = "exponential"
    param_names: ClassVar[tuple] = ("theta",)

    def __post_init__(self):
        object.__setattr__(self, "theta", _positive("theta", self.theta))

    def params(self):
        return {"theta": self.theta}

    def cdf(self, x):
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        return _scalar_or_array(-np.expm1(-self.theta * x))

    def sf(self, x):
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        return _scalar_or_array(np.exp(-self.theta * x))

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(invalid="ignore"):
            out = np.where(x >= 0, math.log(self.theta) - self.theta * x, -np.inf)
        return _scalar_or_array(out)

    def pdf(self, x):
        return _scalar_or_array(np.exp(self.logpdf(x)))

    def quantile(self, p):
        p = np.asarray(p, dtype=float)
        return _scalar_or_array(-np.log1p(-p) / self.theta)

    def isf(self, q):
        q = np.asarray(q, dtype=float)
        return _scalar_or_array(-np.log(q) / self.theta)


@dataclass(frozen=True)
class Weibull:
    """Weibull jump sizes, ``F(x) = 1 - exp(-(x / alpha) ** beta)``."""

    alpha: float
    beta: float
    family: ClassVar[str] = "weibull"
    param_names: ClassVar[tuple] = ("alpha", "beta")

    def __post_init__(self):
        object.__setattr__(self, "alpha", _positive("alpha", self.alpha))
        object.__setattr__(self, "beta", _positive("beta", self.beta))

    def params(self):
        return {"alpha": self.alpha, "beta": self.beta}

    def _h(self, x):
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        return (x / self.alpha) ** self.beta

    def cdf(self, x):
        return _scalar_or_array(-np.expm1(-self._h(x)))

    def sf(self, x):
        return _scalar_or_array(np.exp(-self._h(x)))

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        a, b = self.alpha, self.beta
        with np.errstate(divide="ignore", invalid="ignore"):
            lx = np.log(np.maximum(x, 0.0) / a)
            out = math.log(b / a) + (b - 1.0) * lx - np.exp(b * lx)
            out = np.where(x > 0, out, -np.inf if b > 1 else (math.log(b / a) if b == 1 else np.inf))
            out = np.where((x < 0) | np.isinf(x), -np.inf, out)
        return _scalar_or_array(out)

    def pdf(self, x):
        return _scalar_or_array(np.exp(self.logpdf(x)))

    def quantile(self, p):
        p = np.asarray(p, dtype=float)
        return _scalar_or_array(self.alpha * (-np.log1p(-p)) ** (1.0 / self.beta))

    def isf(self, q):
        q = np.asarray(q, dtype=float)
        return _scalar_or_array(self.alpha * (-np.log(q)) ** (1.0 / self.beta))


JumpSizeDist = Union[Exponential, Weibull]
DIST_FAMILIES = {"exponential": Exponential, "weibull": Weibull}


def make_dist(family: str, **params) -> JumpSizeDist:
    try:
        cls = DIST_FAMILIES[family.lower()]
    except KeyError:
        raise DomainError(f"unknown jump-size family {family!r}") from None
    return cls(**params)


# ---------------------------------------------------------------------------
# Levy copulas
# ---------------------------------------------------------------------------


def _nonneg_args(u, v):
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if np.any(np.isnan(u)) or np.any(np.isnan(v)) or np.any(u < 0) or np.any(v < 0):
        raise DomainError("Levy copula arguments must be >= 0 (possibly infinite)")
    return u, v


def _interior_args(u, v):
    u, v = _nonneg_args(u, v)
    if np.any(u == 0) or np.any(v == 0) or np.any(np.isinf(u)) or np.any(np.isinf(v)):
        raise DomainError("copula derivatives are only defined for 0 < u, v < inf")
    return u, v


@dataclass(frozen=True)
class ClaytonLevyCopula:
    """Clayton Levy copula ``(u^-delta + v^-delta)^(-1/delta)``, delta > 0.

    The private ``_value``/``_du``/... methods skip argument checks and
    return the continuous limits on the boundary; model code relies on
    that when a survival function underflows to zero.
    """

    delta: float
    family: ClassVar[str] = "clayton"

    def __post_init__(self):
        object.__setattr__(self, "delta", _positive("delta", self.delta))

    # log of u^-d + v^-d, valid on [0, inf]^2 except (0, 0)
    def _lsum(self, u, v):
        d = self.delta
        with np.errstate(divide="ignore"):
            return np.logaddexp(-d * np.log(u), -d * np.log(v))

    # softplus(delta * log(u / v)) = log(1 + (u/v)^delta)
    def _lratio(self, u, v):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.logaddexp(0.0, self.delta * (np.log(u) - np.log(v)))

    def _value(self, u, v):
        with np.errstate(over="ignore"):
            out = np.exp(-self._lsum(u, v) / self.delta)
        # uniform margins hold exactly
        return np.where(np.isinf(v), u, np.where(np.isinf(u), v, out))

    def _du(self, u, v):
        return np.exp(-(1.0 / self.delta + 1.0) * self._lratio(u, v))

    def _dv(self, u, v):
        return self._du(v, u)

    def _dudv(self, u, v):
        d = self.delta
        with np.errstate(divide="ignore", invalid="ignore"):
            lg = (math.log1p(d) + (-1.0 / d - 2.0) * self._lsum(u, v)
                  - (d + 1.0) * (np.log(u) + np.log(v)))
        return np.exp(lg)

    def _u_minus_value(self, u, v):
        # u - C(u, v) without cancellation when u << v
        with np.errstate(invalid="ignore"):
            out = -u * np.expm1(-self._lratio(u, v) / self.delta)
        return np.where(np.isinf(u) & np.isfinite(v), np.inf, np.where(u == 0, 0.0, out))

    def _v_minus_value(self, u, v):
        return self._u_minus_value(v, u)

    def _one_minus_du(self, u, v):
        return -np.expm1(-(1.0 / self.delta + 1.0) * self._lratio(u, v))

    def _one_minus_dv(self, u, v):
        return self._one_minus_du(v, u)

    def _rect(self, a1, b1, a2, b2):
        """C-volume of [a1, b1] x [a2, b2]."""
        return self._value(b1, b2) - self._value(a1, b2) - self._value(b1, a2) + self._value(a1, a2)

    def value(self, u, v):
        u, v = _nonneg_args(u, v)
        return _scalar_or_array(self._value(u, v))

    def du(self, u, v):
        u, v = _interior_args(u, v)
        return _scalar_or_array(self._du(u, v))

    def dv(self, u, v):
        u, v = _interior_args(u, v)
        return _scalar_or_array(self._dv(u, v))

    def dudv(self, u, v):
        u, v = _interior_args(u, v)
        return _scalar_or_array(self._dudv(u, v))


@dataclass(frozen=True)
class PureCommonShockLevyCopula:
    """Pure common shock Levy copula: ``delta*u*v`` on finite arguments.

    Admissibility ``delta <= min(1/lambda1, 1/lambda2)`` depends on the
    margins and is checked by ``BcppModel``.
    """

    delta: float
    family: ClassVar[str] = "pure-common-shock"

    def __post_init__(self):
        d = float(self.delta)
        if not (np.isfinite(d) and d >= 0):
            raise DomainError(f"delta must be finite and >= 0, got {self.delta!r}")
        object.__setattr__(self, "delta", d)

    def _value(self, u, v):
        fin = np.isfinite(u) & np.isfinite(v)
        with np.errstate(invalid="ignore"):
            prod = self.delta * u * v
        return np.where(fin, prod, np.where(np.isinf(v), u, v))

    def _du(self, u, v):
        return np.broadcast_to(self.delta * np.asarray(v, dtype=float), np.broadcast(u, v).shape).copy()

    def _dv(self, u, v):
        return self._du(v, u)

    def _dudv(self, u, v):
        return np.full(np.broadcast(u, v).shape, self.delta)

    def _u_minus_value(self, u, v):
        return u * (1.0 - self.delta * v)

    def _v_minus_value(self, u, v):
        return v * (1.0 - self.delta * u)

    def _one_minus_du(self, u, v):
        return np.broadcast_to(1.0 - self.delta * np.asarray(v, dtype=float), np.broadcast(u, v).shape).copy()

    def _one_minus_dv(self, u, v):
        return self._one_minus_du(v, u)

    def _rect(self, a1, b1, a2, b2):
        return self.delta * (b1 - a1) * (b2 - a2)

    def value(self, u, v):
        u, v = _nonneg_args(u, v)
        return _scalar_or_array(self._value(u, v))

    def du(self, u, v):
        u, v = _interior_args(u, v)
        return _scalar_or_array(self._du(u, v))

    def dv(self, u, v):
        u, v = _interior_args(u, v)
        return _scalar_or_array(self._dv(u, v))

    def dudv(self, u, v):
        u, v = _interior_args(u, v)
        return _scalar_or_array(self._dudv(u, v))


LevyCopula = Union[ClaytonLevyCopula, PureCommonShockLevyCopula]
COPULA_FAMILIES = {
    "clayton": ClaytonLevyCopula,
    "pure-common-shock": PureCommonShockLevyCopula,
}


def make_copula(family: str, delta: float) -> LevyCopula:
    key = family.lower().replace("_", "-")
    if key in ("pcs", "purecommonshock"):
        key = "pure-common-shock"
    try:
        return COPULA_FAMILIES[key](delta)
    except KeyError:
        raise DomainError(f"unknown Levy copula family {family!r}") from None


def copula_value(c: LevyCopula, u, v):
    return c.value(u, v)


def copula_du(c: LevyCopula, u, v):
    return c.du(u, v)


def copula_dv(c: LevyCopula, u, v):
    return c.dv(u, v)


def copula_dudv(c: LevyCopula, u, v):
    return c.dudv(u, v)


# ---------------------------------------------------------------------------
# The bivariate model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BcppModel:
    """Bivariate compound Poisson process with positive jumps.

    Parameters
    ----------
    lambda1, lambda2 : float
        Marginal jump frequencies per unit time.
    dist1, dist2 : JumpSizeDist
        Marginal jump-size laws.
    copula : LevyCopula
        Positive Levy copula coupling the marginal tail integrals.
    eps : float
        Relative floor below which a component frequency counts as zero.

    Construction only checks admissibility.  Degenerate parameter points
    (no independent or no dependent part) are allowed here and rejected
    by the operations that need the missing component.
    """

    lambda1: float
    lambda2: float
    dist1: JumpSizeDist
    dist2: JumpSizeDist
    copula: LevyCopula
    eps: float = 1e-12

    def __post_init__(self):
        object.__setattr__(self, "lambda1", _positive("lambda1", self.lambda1))
        object.__setattr__(self, "lambda2", _positive("lambda2", self.lambda2))
        if isinstance(self.copula, PureCommonShockLevyCopula):
            dmax = min(1.0 / self.lambda1, 1.0 / self.lambda2)
            if self.copula.delta > dmax * (1.0 + 1e-12):
                raise ModelError(
                    f"pure common shock delta={self.copula.delta} exceeds min(1/lambda1, 1/lambda2)={dmax}")

    @cached_property
    def lambda_parallel(self) -> float:
        return float(self.copula._value(np.float64(self.lambda1), np.float64(self.lambda2)))

    @cached_property
    def lambda1_perp(self) -> float:
        return float(max(self.copula._u_minus_value(np.float64(self.lambda1), np.float64(self.lambda2)), 0.0))

    @cached_property
    def lambda2_perp(self) -> float:
        return float(max(self.copula._v_minus_value(np.float64(self.lambda1), np.float64(self.lambda2)), 0.0))

    def lam(self, j):
        return (self.lambda1, self.lambda2)[_margin(j) - 1]

    def dist(self, j) -> JumpSizeDist:
        return (self.dist1, self.dist2)[_margin(j) - 1]

    def lam_perp(self, j):
        return (self.lambda1_perp, self.lambda2_perp)[_margin(j) - 1]

    def require_perp(self, j):
        j = _margin(j)
        if self.lam_perp(j) <= self.eps * self.lam(j):
            raise ModelError(f"independent part of margin {j} has zero frequency")

    def require_parallel(self):
        if self.lambda_parallel <= self.eps * min(self.lambda1, self.lambda2):
            raise ModelError("dependent part has zero frequency")

    def require_nondegenerate(self):
        self.require_perp(1)
        self.require_perp(2)
        self.require_parallel()

    def with_copula(self, copula: LevyCopula) -> "BcppModel":
        return BcppModel(self.lambda1, self.lambda2, self.dist1, self.dist2, copula, self.eps)

    def params(self) -> dict:
        """Flat parameter map: lambda1, lambda2, <dist1 params>1, <dist2 params>2, delta."""
        out = {"lambda1": self.lambda1, "lambda2": self.lambda2}
        for j, d in ((1, self.dist1), (2, self.dist2)):
            out.update({f"{k}{j}": v for k, v in d.params().items()})
        out["delta"] = self.copula.delta
        return out


def _margin(j):
    if j not in (1, 2):
        raise DomainError(f"margin index must be 1 or 2, got {j!r}")
    return j


def marginal_tail(m: BcppModel, j, x):
    """Marginal tail integral ``lambda_j * Fbar_j(x)``."""
    return _scalar_or_array(m.lam(j) * np.asarray(m.dist(j).sf(x), dtype=float))


def lambda_parallel(m: BcppModel) -> float:
    return m.lambda_parallel


def lambda_perp(m: BcppModel, j) -> float:
    return m.lam_perp(j)


def _check_jump(x):
    x = np.asarray(x, dtype=float)
    if np.any(np.isnan(x)) or np.any(x < 0):
        raise DomainError("jump sizes must be >= 0")
    return x


def _survival_perp_raw(m, j, x):
    c = m.copula
    if j == 1:
        num = c._u_minus_value(m.lambda1 * m.dist1.sf(x), m.lambda2)
    else:
        num = c._v_minus_value(m.lambda1, m.lambda2 * m.dist2.sf(x))
    return num / m.lam_perp(j)


def survival_perp(m: BcppModel, j, x):
    """Survival function of the jumps of the independent part of margin ``j``."""
    j = _margin(j)
    m.require_perp(j)
    x = _check_jump(x)
    return _scalar_or_array(clamp_probability(_survival_perp_raw(m, j, x)))


def cdf_perp(m: BcppModel, j, x):
    return _scalar_or_array(1.0 - np.asarray(survival_perp(m, j, x)))


def _density_perp_raw(m, j, x):
    c = m.copula
    if j == 1:
        bracket = c._one_minus_du(m.lambda1 * m.dist1.sf(x), m.lambda2)
    else:
        bracket = c._one_minus_dv(m.lambda1, m.lambda2 * m.dist2.sf(x))
    return m.lam(j) * m.dist(j).pdf(x) / m.lam_perp(j) * bracket


def density_perp(m: BcppModel, j, x):
    """Density of the jumps of the independent part of margin ``j``."""
    j = _margin(j)
    m.require_perp(j)
    x = _check_jump(x)
    return _scalar_or_array(np.maximum(_density_perp_raw(m, j, x), 0.0))


def log_density_perp(m: BcppModel, j, x):
    j = _margin(j)
    m.require_perp(j)
    x = _check_jump(x)
    c = m.copula
    if j == 1:
        bracket = c._one_minus_du(m.lambda1 * m.dist1.sf(x), m.lambda2)
    else:
        bracket = c._one_minus_dv(m.lambda1, m.lambda2 * m.dist2.sf(x))
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (math.log(m.lam(j) / m.lam_perp(j)) + np.asarray(m.dist(j).logpdf(x))
               + np.log(np.maximum(bracket, 0.0)))
    return _scalar_or_array(out)


def survival_parallel(m: BcppModel, x, y):
    """Joint survival function of the common-shock jump pairs."""
    m.require_parallel()
    x, y = _check_jump(x), _check_jump(y)
    u = m.lambda1 * np.asarray(m.dist1.sf(x))
    v = m.lambda2 * np.asarray(m.dist2.sf(y))
    return _scalar_or_array(clamp_probability(m.copula._value(u, v) / m.lambda_parallel))


def cdf_parallel(m: BcppModel, x, y):
    """Joint distribution function of the common-shock jump pairs."""
    m.require_parallel()
    x, y = _check_jump(x), _check_jump(y)
    u = m.lambda1 * np.asarray(m.dist1.sf(x))
    v = m.lambda2 * np.asarray(m.dist2.sf(y))
    vol = m.copula._rect(u, m.lambda1, v, m.lambda2)
    return _scalar_or_array(clamp_probability(vol / m.lambda_parallel))


def survival_parallel_marginal(m: BcppModel, j, x):
    """Survival function of the margin-``j`` component of a common shock."""
    j = _margin(j)
    m.require_parallel()
    x = _check_jump(x)
    if j == 1:
        val = m.copula._value(m.lambda1 * np.asarray(m.dist1.sf(x)), m.lambda2)
    else:
        val = m.copula._value(m.lambda1, m.lambda2 * np.asarray(m.dist2.sf(x)))
    return _scalar_or_array(clamp_probability(val / m.lambda_parallel))


def cdf_parallel_marginal(m: BcppModel, j, x):
    return _scalar_or_array(1.0 - np.asarray(survival_parallel_marginal(m, j, x)))


def density_parallel_marginal(m: BcppModel, j, x, numeric=False):
    """Density of the margin-``j`` component of a common shock.

    ``numeric=True`` switches to a central difference of the distribution
    function with step ``1e-6 * max(x, 1)``.
    """
    j = _margin(j)
    m.require_parallel()
    x = _check_jump(x)
    if numeric:
        h = 1e-6 * np.maximum(x, 1.0)
        lo = np.maximum(x - h, 0.0)
        hi = x + h
        dF = (np.asarray(survival_parallel_marginal(m, j, lo)) - np.asarray(survival_parallel_marginal(m, j, hi)))
        return _scalar_or_array(dF / (hi - lo))
    if j == 1:
        d = m.copula._du(m.lambda1 * np.asarray(m.dist1.sf(x)), m.lambda2)
    else:
        d = m.copula._dv(m.lambda1, m.lambda2 * np.asarray(m.dist2.sf(x)))
    return _scalar_or_array(m.lam(j) * np.asarray(m.dist(j).pdf(x)) * d / m.lambda_parallel)


def parallel_partials(m: BcppModel, x, y):
    """Partial derivatives of the common-shock distribution function.

    Returns ``(dF/dx, dF/dy, d2F/dxdy)`` evaluated at ``(x, y)``.
    """
    m.require_parallel()
    x, y = _check_jump(x), _check_jump(y)
    c = m.copula
    l1, l2, lp = m.lambda1, m.lambda2, m.lambda_parallel
    u = l1 * np.asarray(m.dist1.sf(x))
    v = l2 * np.asarray(m.dist2.sf(y))
    f1 = np.asarray(m.dist1.pdf(x))
    f2 = np.asarray(m.dist2.pdf(y))
    with np.errstate(invalid="ignore"):
        p1 = l1 * f1 / lp * (c._du(u, l2) - c._du(u, v))
        p2 = l2 * f2 / lp * (c._dv(l1, v) - c._dv(u, v))
        dens = l1 * l2 * f1 * f2 / lp * c._dudv(u, v)
    # a vanishing marginal density (e.g. at infinity) kills the term even where the copula factor is not finite
    p1 = np.where(f1 == 0, 0.0, p1)
    p2 = np.where(f2 == 0, 0.0, p2)
    dens = np.where((f1 == 0) | (f2 == 0), 0.0, dens)
    return (_scalar_or_array(np.maximum(p1, 0.0)), _scalar_or_array(np.maximum(p2, 0.0)),
            _scalar_or_array(np.maximum(dens, 0.0)))


def tail_integral(m: BcppModel, x, y):
    """Expected number of jumps per unit time exceeding ``(x, y)`` componentwise."""
    x, y = _check_jump(x), _check_jump(y)
    return _scalar_or_array(m.copula._value(marginal_tail(m, 1, x), marginal_tail(m, 2, y)))


def nu1_perp_tail(m: BcppModel, x):
    x = _check_jump(x)
    return _scalar_or_array(m.copula._u_minus_value(np.asarray(marginal_tail(m, 1, x)), m.lambda2))


def nu2_perp_tail(m: BcppModel, y):
    y = _check_jump(y)
    return _scalar_or_array(m.copula._v_minus_value(m.lambda1, np.asarray(marginal_tail(m, 2, y))))


def nu_parallel_tail(m: BcppModel, x, y):
    return tail_integral(m, x, y)


def implied_distributional_copula(m: BcppModel, u, v):
    """Distribution copula of the common-shock jump pairs (Clayton only)."""
    if not isinstance(m.copula, ClaytonLevyCopula):
        raise UnsupportedOperationError("implied distributional copula is only available for Clayton")
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if np.any((u < 0) | (u > 1) | (v < 0) | (v > 1)):
        raise DomainError("copula arguments must lie in [0, 1]")
    d = m.copula.delta
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        a = -d * np.log1p(-u)
        b = -d * np.log1p(-v)
        s = np.expm1(a) + np.expm1(b)
        core = np.exp(-np.log1p(s) / d)
    out = core + u + v - 1.0
    out = np.where((u == 1) | (v == 1), np.minimum(u, v), out)
    lo = np.maximum(u + v - 1.0, 0.0)
    hi = np.minimum(u, v)
    return _scalar_or_array(np.clip(out, lo, hi))
