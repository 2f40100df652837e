"""Log-likelihood of interval maxima and counts.

An interval contributes according to which margins jumped in it: the
probability of no jumps, the density of the maximum of the jumps of one
margin, or, when both margins jumped, a sum over the unobserved number of
common shocks of the mixed derivative of the joint distribution of the
two maxima.  Sums run in log space; see ``levycop.kernels``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from . import kernels
from .errors import InputError
from .model import (
    BcppModel,
    cdf_parallel,
    log_density_perp,
    parallel_partials,
    survival_perp,
)
from .simulate import IntervalPanel

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CellObservation:
    x: float
    y: float
    k: int
    l: int

    def __post_init__(self):
        if self.k < 0 or self.l < 0 or int(self.k) != self.k or int(self.l) != self.l:
            raise InputError("counts must be nonnegative integers")
        if (self.k == 0) != (self.x == 0) or (self.l == 0) != (self.y == 0):
            raise InputError("a zero count must coincide with a zero maximum")
        if self.x < 0 or self.y < 0:
            raise InputError("maxima must be >= 0")


def poisson_means(m: BcppModel, dt: float):
    """Poisson means of (perp1, perp2, common) jump counts over an interval of length ``dt``."""
    return m.lambda1_perp * dt, m.lambda2_perp * dt, m.lambda_parallel * dt


def poisson_triplet_logprob(m: BcppModel, dt, k1, k2, kc):
    """Log probability of ``k1``, ``k2`` independent-part jumps and ``kc`` common shocks."""
    if not dt > 0:
        raise InputError("interval length must be positive")
    out = 0.0
    for n, mu in zip((k1, k2, kc), poisson_means(m, dt)):
        n = np.asarray(n, dtype=float)
        if np.any(n < 0):
            raise InputError("counts must be >= 0")
        with np.errstate(divide="ignore", invalid="ignore"):
            out = out + np.where(n == 0, -mu, n * np.log(mu) - mu - gammaln(n + 1.0))
    return np.asarray(out)[()]


def _log_cdf_perp(m, j, x):
    sf = np.asarray(survival_perp(m, j, x))
    with np.errstate(divide="ignore"):
        return np.log1p(-sf)


def cell_inputs(m: BcppModel, x, y, k, l):
    """Log quantities consumed by ``kernels.cell_loglik`` for every row."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    k = np.asarray(k, dtype=np.int64)
    l = np.asarray(l, dtype=np.int64)
    size = k.shape[0]
    lF1, lf1, lF2, lf2 = (np.zeros(size) for _ in range(4))
    lFp, lF1p, lF2p, lfp = (np.zeros(size) for _ in range(4))
    r1 = k > 0
    r2 = l > 0
    if np.any(r1):
        lF1[r1] = _log_cdf_perp(m, 1, x[r1])
        lf1[r1] = log_density_perp(m, 1, x[r1])
    if np.any(r2):
        lF2[r2] = _log_cdf_perp(m, 2, y[r2])
        lf2[r2] = log_density_perp(m, 2, y[r2])
    rb = r1 & r2
    if np.any(rb):
        xb, yb = x[rb], y[rb]
        p1, p2, dens = parallel_partials(m, xb, yb)
        with np.errstate(divide="ignore"):
            lFp[rb] = np.log(cdf_parallel(m, xb, yb))
            lF1p[rb] = np.log(p1)
            lF2p[rb] = np.log(p2)
            lfp[rb] = np.log(dens)
    return lF1, lf1, lF2, lf2, lFp, lF1p, lF2p, lfp


def cell_logliks(m: BcppModel, x, y, k, l, dt):
    """Vectorised interval log-likelihoods for arrays of observations."""
    if not dt > 0:
        raise InputError("interval length must be positive")
    x, y, k, l = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float),
                                     np.asarray(k, dtype=np.int64), np.asarray(l, dtype=np.int64))
    shape = x.shape
    x, y, k, l = x.ravel(), y.ravel(), k.ravel(), l.ravel()
    if np.any((k == 0) != (x == 0)) or np.any((l == 0) != (y == 0)):
        raise InputError("a zero count must coincide with a zero maximum")
    m.require_nondegenerate()
    mu1, mu2, muc = poisson_means(m, dt)
    out = kernels.cell_loglik(k, l, mu1, mu2, muc, *cell_inputs(m, x, y, k, l))
    if np.any(out == -np.inf):
        log.debug("%d observations fall outside the model support", int(np.sum(out == -np.inf)))
    return out.reshape(shape)


def cell_loglik(m: BcppModel, obs: CellObservation, dt: float) -> float:
    """Log-likelihood contribution of a single interval."""
    return float(cell_logliks(m, obs.x, obs.y, obs.k, obs.l, dt))


def panel_loglik(m: BcppModel, panel: IntervalPanel) -> float:
    """Total log-likelihood of a panel; ``-inf`` if any interval is impossible."""
    if panel.M < 1 or not panel.horizon > 0:
        raise InputError("panel needs M >= 1 and a positive horizon")
    vals = cell_logliks(m, panel.z[:, 0], panel.z[:, 1], panel.n[:, 0], panel.n[:, 1], panel.dt)
    # fixed-order reduction keeps results bit-reproducible
    return float(np.sum(vals))
