"""Hot loops of the interval likelihood.

Two interchangeable implementations of the per-cell log-likelihood are
provided: an explicit-loop kernel compiled with numba and a vectorised
numpy version.  ``cell_loglik`` dispatches to the numba one unless numba
is missing or ``LEVYCOP_DISABLE_NUMBA`` is set to a truthy value.

All kernels take the per-row log quantities of the model (see
``levycop.likelihood``) so the copula family never enters compiled code.
Terms whose integer prefactor is zero are skipped rather than evaluated,
which keeps ``0 * log(0)`` out of the sums.
"""
from __future__ import annotations

import math
import os

import numpy as np
from scipy.special import gammaln

_TRUTHY = {"1", "true", "yes", "on"}


def _numba_requested():
    return os.environ.get("LEVYCOP_DISABLE_NUMBA", "").strip().lower() not in _TRUTHY


try:
    from numba import njit
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and _numba_requested()


# ---------------------------------------------------------------------------
# numpy path
# ---------------------------------------------------------------------------


def _xlog_np(e, lg):
    with np.errstate(invalid="ignore"):
        return np.where(e == 0, 0.0, e * lg)


def _log_poisson_np(n, mu):
    n = np.asarray(n, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(n == 0, -mu, n * math.log(mu) - mu - gammaln(n + 1.0))


def _logsumexp_rows(t):
    """Log-sum-exp over all axes but the first; rows of -inf give -inf."""
    flat = t.reshape(t.shape[0], -1)
    mx = np.max(flat, axis=1)
    safe = np.where(np.isfinite(mx), mx, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.sum(np.exp(flat - safe[:, None]), axis=1)
        out = safe + np.log(s)
    out = np.where(mx == -np.inf, -np.inf, out)
    return np.where(np.isnan(flat).any(axis=1), np.nan, out)


def cell_loglik_numpy(k, l, mu1, mu2, muc, lF1, lf1, lF2, lf2, lFp, lF1p, lF2p, lfp):
    k = np.asarray(k, dtype=np.int64)
    l = np.asarray(l, dtype=np.int64)
    out = np.empty(k.shape, dtype=float)

    m00 = (k == 0) & (l == 0)
    out[m00] = -(mu1 + mu2 + muc)

    m10 = (k > 0) & (l == 0)
    kk = k[m10]
    out[m10] = (_log_poisson_np(kk, mu1) - mu2 - muc + np.log(kk)
                + _xlog_np(kk - 1, lF1[m10]) + lf1[m10])

    m01 = (k == 0) & (l > 0)
    ll = l[m01]
    out[m01] = (_log_poisson_np(ll, mu2) - mu1 - muc + np.log(ll)
                + _xlog_np(ll - 1, lF2[m01]) + lf2[m01])

    m11 = (k > 0) & (l > 0)
    if not np.any(m11):
        return out
    K = k[m11][:, None]
    L = l[m11][:, None]
    top = np.minimum(K, L)
    n = np.arange(int(top.max()) + 1)[None, :]
    valid = n <= top
    a = np.where(valid, K - n, 0)
    b = np.where(valid, L - n, 0)
    g1, d1 = lF1[m11][:, None], lf1[m11][:, None]
    g2, d2 = lF2[m11][:, None], lf2[m11][:, None]
    gp, g1p = lFp[m11][:, None], lF1p[m11][:, None]
    g2p, dp = lF2p[m11][:, None], lfp[m11][:, None]
    base = _log_poisson_np(a, mu1) + _log_poisson_np(b, mu2) + _log_poisson_np(n, muc)
    ninf = -np.inf
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = np.where(valid & (a > 0) & (b > 0),
                      np.log(a * b) + d1 + d2 + _xlog_np(a - 1, g1) + _xlog_np(b - 1, g2) + _xlog_np(n, gp),
                      ninf)
        t2 = np.where(valid & (n > 0) & (b > 0),
                      np.log(n * b) + d2 + g1p + _xlog_np(a, g1) + _xlog_np(b - 1, g2) + _xlog_np(n - 1, gp),
                      ninf)
        t3 = np.where(valid & (n > 0) & (a > 0),
                      np.log(n * a) + d1 + g2p + _xlog_np(b, g2) + _xlog_np(a - 1, g1) + _xlog_np(n - 1, gp),
                      ninf)
        t4 = np.where(valid & (n > 1),
                      np.log(n * (n - 1)) + g1p + g2p + _xlog_np(a, g1) + _xlog_np(b, g2) + _xlog_np(n - 2, gp),
                      ninf)
        t5 = np.where(valid & (n > 0),
                      np.log(np.maximum(n, 1)) + dp + _xlog_np(a, g1) + _xlog_np(b, g2) + _xlog_np(n - 1, gp),
                      ninf)
    terms = np.stack([t1, t2, t3, t4, t5], axis=2) + np.where(valid, base, 0.0)[:, :, None]
    out[m11] = _logsumexp_rows(terms)
    return out


# ---------------------------------------------------------------------------
# numba path
# ---------------------------------------------------------------------------

if HAVE_NUMBA:

    @njit(cache=True)
    def _log_poisson_nb(n, mu, log_mu):
        if n == 0:
            return -mu
        return n * log_mu - mu - math.lgamma(n + 1.0)

    @njit(cache=True)
    def _xlog_nb(e, lg):
        if e == 0:
            return 0.0
        return e * lg

    @njit(cache=True)
    def _cell_loglik_nb(k, l, mu1, mu2, muc, lF1, lf1, lF2, lf2, lFp, lF1p, lF2p, lfp, out):
        lm1 = math.log(mu1)
        lm2 = math.log(mu2)
        lmc = math.log(muc)
        ninf = -np.inf
        for i in range(k.shape[0]):
            ki = k[i]
            li = l[i]
            if ki == 0 and li == 0:
                out[i] = -(mu1 + mu2 + muc)
                continue
            if li == 0:
                out[i] = (_log_poisson_nb(ki, mu1, lm1) - mu2 - muc + math.log(ki)
                          + _xlog_nb(ki - 1, lF1[i]) + lf1[i])
                continue
            if ki == 0:
                out[i] = (_log_poisson_nb(li, mu2, lm2) - mu1 - muc + math.log(li)
                          + _xlog_nb(li - 1, lF2[i]) + lf2[i])
                continue
            g1 = lF1[i]
            d1 = lf1[i]
            g2 = lF2[i]
            d2 = lf2[i]
            gp = lFp[i]
            g1p = lF1p[i]
            g2p = lF2p[i]
            dp = lfp[i]
            mx = ninf
            acc = 0.0
            has_nan = False
            top = min(ki, li)
            for n in range(top + 1):
                a = ki - n
                b = li - n
                base = _log_poisson_nb(a, mu1, lm1) + _log_poisson_nb(b, mu2, lm2) + _log_poisson_nb(n, muc, lmc)
                for term in range(5):
                    if term == 0:
                        if a == 0 or b == 0:
                            continue
                        t = (math.log(a * b) + d1 + d2 + _xlog_nb(a - 1, g1)
                             + _xlog_nb(b - 1, g2) + _xlog_nb(n, gp))
                    elif term == 1:
                        if n == 0 or b == 0:
                            continue
                        t = (math.log(n * b) + d2 + g1p + _xlog_nb(a, g1)
                             + _xlog_nb(b - 1, g2) + _xlog_nb(n - 1, gp))
                    elif term == 2:
                        if n == 0 or a == 0:
                            continue
                        t = (math.log(n * a) + d1 + g2p + _xlog_nb(b, g2)
                             + _xlog_nb(a - 1, g1) + _xlog_nb(n - 1, gp))
                    elif term == 3:
                        if n < 2:
                            continue
                        t = (math.log(n * (n - 1)) + g1p + g2p + _xlog_nb(a, g1)
                             + _xlog_nb(b, g2) + _xlog_nb(n - 2, gp))
                    else:
                        if n == 0:
                            continue
                        t = (math.log(n) + dp + _xlog_nb(a, g1) + _xlog_nb(b, g2)
                             + _xlog_nb(n - 1, gp))
                    t += base
                    if t != t:
                        has_nan = True
                    elif t > mx:
                        acc = acc * math.exp(mx - t) + 1.0 if mx > ninf else 1.0
                        mx = t
                    elif t > ninf:
                        acc += math.exp(t - mx)
            if has_nan:
                out[i] = np.nan
            elif mx == ninf:
                out[i] = ninf
            else:
                out[i] = mx + math.log(acc)
        return out


def cell_loglik_numba(k, l, mu1, mu2, muc, lF1, lf1, lF2, lf2, lFp, lF1p, lF2p, lfp):
    if not HAVE_NUMBA:  # pragma: no cover
        raise RuntimeError("numba is not installed")
    k = np.ascontiguousarray(k, dtype=np.int64)
    l = np.ascontiguousarray(l, dtype=np.int64)
    arrs = [np.ascontiguousarray(a, dtype=np.float64)
            for a in (lF1, lf1, lF2, lf2, lFp, lF1p, lF2p, lfp)]
    out = np.empty(k.shape[0], dtype=np.float64)
    return _cell_loglik_nb(k, l, float(mu1), float(mu2), float(muc), *arrs, out)


def cell_loglik(k, l, mu1, mu2, muc, lF1, lf1, lF2, lf2, lFp, lF1p, lF2p, lfp):
    """Per-row interval log-likelihood from precomputed log quantities.

    ``mu1``, ``mu2``, ``muc`` are the Poisson means of the two independent
    parts and of the common shocks over one interval.  The ``lF*``/``lf*``
    arrays hold logs of the distribution functions and densities of the
    independent parts (``lF1, lf1, lF2, lf2``) and of the common-shock law
    and its partials (``lFp, lF1p, lF2p, lfp``); entries of rows that do not
    need them are ignored.
    """
    fn = cell_loglik_numba if USE_NUMBA else cell_loglik_numpy
    return fn(k, l, mu1, mu2, muc, lF1, lf1, lF2, lf2, lFp, lF1p, lF2p, lfp)
