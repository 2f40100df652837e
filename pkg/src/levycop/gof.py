"""Goodness-of-fit transform for interval panels and its test battery.

For every interval in which both margins jumped, the maximum of margin 1
is mapped through its conditional distribution given the two counts, and
the maximum of margin 2 through its conditional distribution given the
counts and the margin-1 maximum.  Under a correctly specified model the
resulting pairs are iid uniform; after the normal quantile transform they
are tested for being iid standard normal.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import stats
from scipy.special import erfc

from .errors import ConsistencyError, DomainError, InputError
from .likelihood import poisson_triplet_logprob
from .model import (
    BcppModel,
    PROB_SLACK,
    cdf_parallel,
    density_perp,
    parallel_partials,
    survival_perp,
)
from .simulate import IntervalPanel

# ---------------------------------------------------------------------------
# inverse normal distribution function
# ---------------------------------------------------------------------------

_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
      1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
      6.680131188771972e+01, -1.328068155288572e+01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
      -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
      3.754408661907416e+00)
_P_LOW = 0.02425


def _poly(coef, x):
    out = np.zeros_like(x)
    for c in coef:
        out = out * x + c
    return out


def _norm_ppf_lower(p):
    # p in (0, 0.5]
    x = np.empty_like(p)
    tail = p < _P_LOW
    q = np.sqrt(-2.0 * np.log(p[tail]))
    x[tail] = _poly(_C, q) / (_poly(_D, q) * q + 1.0)
    mid = ~tail
    q = p[mid] - 0.5
    r = q * q
    x[mid] = _poly(_A, r) * q / (_poly(_B, r) * r + 1.0)
    # one Halley step against the exact distribution function
    e = 0.5 * erfc(-x / math.sqrt(2.0)) - p
    u = e * math.sqrt(2.0 * math.pi) * np.exp(0.5 * x * x)
    return x - u / (1.0 + 0.5 * x * u)


def norm_ppf(p):
    """Standard normal quantile function (rational approximation plus Halley polish)."""
    p = np.asarray(p, dtype=float)
    flat = p.ravel()
    out = np.full(flat.shape, np.nan)
    out[flat == 0] = -np.inf
    out[flat == 1] = np.inf
    lo = (flat > 0) & (flat <= 0.5)
    hi = (flat > 0.5) & (flat < 1)
    out[lo] = _norm_ppf_lower(flat[lo])
    out[hi] = -_norm_ppf_lower(1.0 - flat[hi])
    return out.reshape(p.shape)[()]


# ---------------------------------------------------------------------------
# conditional distributions of the interval maxima
# ---------------------------------------------------------------------------


def _xlog(e, lg):
    with np.errstate(invalid="ignore"):
        return np.where(e == 0, 0.0, e * lg)


def _logsumexp(t, axis):
    mx = np.max(t, axis=axis, keepdims=True)
    safe = np.where(np.isfinite(mx), mx, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(t - safe), axis=axis)) + np.squeeze(safe, axis=axis)
    return np.where(np.squeeze(mx, axis=axis) == -np.inf, -np.inf, out)


def _common_grid(m, dt, k, l):
    K = k[:, None]
    L = l[:, None]
    top = np.minimum(K, L)
    n = np.arange(int(top.max()) + 1 if top.size else 1)[None, :]
    valid = n <= top
    a = np.where(valid, K - n, 0)
    b = np.where(valid, L - n, 0)
    lp = np.where(valid, poisson_triplet_logprob(m, dt, a, b, n), -np.inf)
    return a, b, n, valid, lp


def _log(x):
    with np.errstate(divide="ignore"):
        return np.log(x)


def _prep(k, l, *arrays):
    k = np.asarray(k, dtype=np.int64)
    l = np.asarray(l, dtype=np.int64)
    if np.any(k < 0) or np.any(l < 0):
        raise DomainError("counts must be >= 0")
    out = np.broadcast_arrays(k, l, *[np.asarray(a, dtype=float) for a in arrays])
    shape = out[0].shape
    return shape, [o.ravel() for o in out]


def _log_F_kl(m, dt, k, l, x, y):
    m.require_nondegenerate()
    with np.errstate(divide="ignore"):
        lF1 = np.log1p(-np.asarray(survival_perp(m, 1, x)))
        lF2 = np.log1p(-np.asarray(survival_perp(m, 2, y)))
    lFp = _log(cdf_parallel(m, x, y))
    a, b, n, valid, lp = _common_grid(m, dt, k, l)
    t = lp + _xlog(a, lF1[:, None]) + _xlog(b, lF2[:, None]) + _xlog(n, lFp[:, None])
    return _logsumexp(np.where(valid, t, -np.inf), axis=1)


def F_kl(m: BcppModel, dt, k, l, x, y):
    """P(max1 <= x, max2 <= y, N1 = k, N2 = l) over an interval of length ``dt``."""
    shape, (k, l, x, y) = _prep(k, l, x, y)
    return np.exp(_log_F_kl(m, dt, k, l, x, y)).reshape(shape)[()]


def G_kl(m: BcppModel, dt, k, l, x, y):
    """Distribution of the two interval maxima conditional on the counts ``(k, l)``."""
    shape, (k, l, x, y) = _prep(k, l, x, y)
    inf = np.full_like(x, np.inf)
    den = _log_F_kl(m, dt, k, l, inf, inf)
    if np.any(den == -np.inf):
        raise DomainError("conditioning on a count pair of zero probability")
    g = np.exp(_log_F_kl(m, dt, k, l, x, y) - den)
    return _guard(g, "G_kl").reshape(shape)[()]


def _log_dF_dx(m, dt, k, l, x, y):
    m.require_nondegenerate()
    with np.errstate(divide="ignore"):
        lF1 = np.log1p(-np.asarray(survival_perp(m, 1, x)))
        lF2 = np.log1p(-np.asarray(survival_perp(m, 2, y)))
    lf1 = _log(density_perp(m, 1, x))
    lFp = _log(cdf_parallel(m, x, y))
    lF1p = _log(parallel_partials(m, x, y)[0])
    a, b, n, valid, lp = _common_grid(m, dt, k, l)
    # the n = 0 column of t_par may hold inf - inf; it is masked out below
    with np.errstate(divide="ignore", invalid="ignore"):
        t_perp = (np.log(np.maximum(a, 1)) + lf1[:, None] + _xlog(a - 1, lF1[:, None])
                  + _xlog(b, lF2[:, None]) + _xlog(n, lFp[:, None]))
        t_par = (np.log(np.maximum(n, 1)) + lF1p[:, None] + _xlog(a, lF1[:, None])
                 + _xlog(b, lF2[:, None]) + _xlog(n - 1, lFp[:, None]))
    t_perp = np.where(valid & (a > 0), lp + t_perp, -np.inf)
    t_par = np.where(valid & (n > 0), lp + t_par, -np.inf)
    return _logsumexp(np.concatenate([t_perp, t_par], axis=1), axis=1)


def dF_kl_dx(m: BcppModel, dt, k, l, x, y):
    """Derivative of ``F_kl`` in the margin-1 maximum."""
    shape, (k, l, x, y) = _prep(k, l, x, y)
    return np.exp(_log_dF_dx(m, dt, k, l, x, y)).reshape(shape)[()]


def H_xkl(m: BcppModel, dt, x, k, l, y):
    """Distribution of the margin-2 maximum given the margin-1 maximum ``x`` and counts."""
    shape, (k, l, x, y) = _prep(k, l, x, y)
    if np.any(k < 1) or np.any(~(x > 0)) or np.any(np.isinf(x)):
        raise DomainError("H_xkl needs k >= 1 and finite x > 0")
    den = _log_dF_dx(m, dt, k, l, x, np.full_like(y, np.inf))
    if np.any(den == -np.inf):
        raise DomainError("margin-1 maximum lies outside the model support")
    h = np.exp(_log_dF_dx(m, dt, k, l, x, y) - den)
    return _guard(h, "H_xkl").reshape(shape)[()]


def _guard(p, what):
    bad = (p < -PROB_SLACK) | (p > 1.0 + PROB_SLACK) | np.isnan(p)
    if np.any(bad):
        raise ConsistencyError(f"{what} outside [0, 1]: {p[bad][:5]}")
    return np.clip(p, 0.0, 1.0)


# ---------------------------------------------------------------------------
# transform and tests
# ---------------------------------------------------------------------------


@dataclass
class GofTransform:
    rows: np.ndarray
    v: np.ndarray
    w: np.ndarray


def gof_transform(m: BcppModel, panel: IntervalPanel) -> GofTransform:
    """Probability-integral transform of the intervals where both margins jumped."""
    rows = np.flatnonzero((panel.n[:, 0] > 0) & (panel.n[:, 1] > 0))
    k, l = panel.n[rows, 0], panel.n[rows, 1]
    x, y = panel.z[rows, 0], panel.z[rows, 1]
    if rows.size == 0:
        return GofTransform(rows, np.empty((0, 2)), np.empty((0, 2)))
    u1 = G_kl(m, panel.dt, k, l, x, np.full_like(x, np.inf))
    u2 = H_xkl(m, panel.dt, x, k, l, y)
    v = np.column_stack([u1, u2])
    # keep the normal scores finite
    v = np.clip(v, np.finfo(float).tiny, 1.0 - np.finfo(float).epsneg)
    return GofTransform(rows, v, norm_ppf(v))


STATISTICS = ("JB1", "JB2", "mu1", "mu2", "sigma1", "sigma2", "rho1", "rho2", "rho12")


@dataclass
class GofReport:
    n: int
    values: dict
    pvalues: dict
    jb_method: str = "monte-carlo"

    def rejects(self, stat, level):
        return self.pvalues[stat] < level


@lru_cache(maxsize=64)
def _jb_null(n, reps, seed):
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(n,))))
    out = np.empty(reps)
    chunk = max(1, 2_000_000 // n)
    for start in range(0, reps, chunk):
        stop = min(start + chunk, reps)
        out[start:stop] = _jarque_bera(rng.standard_normal((stop - start, n)), axis=1)
    out.sort()
    return out


def _jarque_bera(x, axis=0):
    n = x.shape[axis]
    d = x - x.mean(axis=axis, keepdims=True)
    s2 = np.mean(d ** 2, axis=axis)
    skew = np.mean(d ** 3, axis=axis) / s2 ** 1.5
    kurt = np.mean(d ** 4, axis=axis) / s2 ** 2
    return n * (skew ** 2 / 6.0 + (kurt - 3.0) ** 2 / 24.0)


def jb_pvalue(jb, n, method="monte-carlo", reps=100_000, seed=19800101):
    """Upper-tail p-value of the Jarque-Bera statistic for a sample of size ``n``.

    ``"chi2"`` uses the asymptotic chi-square(2) law; ``"monte-carlo"``
    the exact finite-sample null simulated with a fixed seed.
    """
    if method == "chi2":
        return float(stats.chi2.sf(jb, 2))
    if method != "monte-carlo":
        raise InputError(f"unknown Jarque-Bera p-value method {method!r}")
    null = _jb_null(int(n), int(reps), int(seed))
    return float((null.size - np.searchsorted(null, jb, side="left")) / null.size)


def normal_pvalue(stat, n):
    """Two-sided p-value of a mean or correlation with ``stat * sqrt(n) ~ N(0, 1)``."""
    return float(2.0 * stats.norm.sf(abs(stat) * math.sqrt(n)))


def sigma_pvalue(sd, n):
    """One-sided p-value of a sample SD (ddof=1), in the direction of its deviation from 1."""
    c = (n - 1) * sd * sd
    return float(min(stats.chi2.sf(c, n - 1), stats.chi2.cdf(c, n - 1)))


def gof_tests(w, jb_method="monte-carlo", jb_reps=100_000) -> GofReport:
    """Test the columns of ``w`` for being iid standard normal and uncorrelated.

    Per column: Jarque-Bera, mean, standard deviation (one-sided in the
    direction of the deviation) and lag-1 serial correlation; plus the
    cross-column correlation.
    """
    w = np.asarray(w, dtype=float)
    if w.ndim != 2 or w.shape[1] != 2:
        raise InputError("normal scores must form an n x 2 matrix")
    n = w.shape[0]
    if n < 8:
        raise InputError(f"need at least 8 rows for the test battery, got {n}")
    if np.any(~np.isfinite(w)):
        raise InputError("normal scores must be finite")
    vals, pv = {}, {}
    for j in range(2):
        col = w[:, j]
        d = col - col.mean()
        ss = np.dot(d, d)
        if np.ptp(col) == 0:
            raise InputError(f"column {j + 1} has zero variance")
        tag = str(j + 1)
        jb = float(_jarque_bera(col))
        vals["JB" + tag], pv["JB" + tag] = jb, jb_pvalue(jb, n, jb_method, jb_reps)
        mu = float(col.mean())
        vals["mu" + tag], pv["mu" + tag] = mu, normal_pvalue(mu, n)
        sd = float(col.std(ddof=1))
        vals["sigma" + tag], pv["sigma" + tag] = sd, sigma_pvalue(sd, n)
        rho = float(np.dot(d[:-1], d[1:]) / ss)
        vals["rho" + tag], pv["rho" + tag] = rho, normal_pvalue(rho, n)
    d1 = w[:, 0] - w[:, 0].mean()
    d2 = w[:, 1] - w[:, 1].mean()
    r12 = float(np.dot(d1, d2) / math.sqrt(np.dot(d1, d1) * np.dot(d2, d2)))
    vals["rho12"], pv["rho12"] = r12, normal_pvalue(r12, n)
    order = {k: vals[k] for k in STATISTICS}
    return GofReport(n, order, {k: pv[k] for k in STATISTICS}, jb_method)
