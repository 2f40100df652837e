"""Exact path sampling and aggregation into interval panels.

A path is sampled by splitting the process into its two independent parts
and the common shocks, each an ordinary compound Poisson process whose
jump law is implied by the Levy copula.  Jump sizes are drawn by inverse
transform; the inverses are found by bisection so that any copula with
the model interface can be plugged in.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

from .errors import InputError, NumericError
from .model import (
    BcppModel,
    cdf_parallel_marginal,
    density_parallel_marginal,
    parallel_partials,
    survival_parallel_marginal,
    survival_perp,
)

ORIGINS = ("perp1", "perp2", "common")
_BISECT_ITERS = 200
_GROW_LIMIT = 200


@dataclass(frozen=True)
class EventRecord:
    time: float
    amount1: float
    amount2: float
    origin: Optional[str] = None


@dataclass(frozen=True, eq=False)
class Events:
    """Columnar event list, sorted by time.

    ``origin`` holds codes 0/1/2 for perp1/perp2/common, or is ``None``
    when the labels are unknown (real data) or withheld.
    """

    time: np.ndarray
    amount1: np.ndarray
    amount2: np.ndarray
    origin: Optional[np.ndarray] = None

    def __post_init__(self):
        t = np.asarray(self.time, dtype=float)
        a1 = np.asarray(self.amount1, dtype=float)
        a2 = np.asarray(self.amount2, dtype=float)
        if not (t.shape == a1.shape == a2.shape) or t.ndim != 1:
            raise InputError("event columns must be 1-d arrays of equal length")
        if np.any(a1 < 0) or np.any(a2 < 0) or np.any(np.isnan(a1)) or np.any(np.isnan(a2)):
            raise InputError("event amounts must be >= 0")
        object.__setattr__(self, "time", t)
        object.__setattr__(self, "amount1", a1)
        object.__setattr__(self, "amount2", a2)
        if self.origin is not None:
            o = np.asarray(self.origin, dtype=np.int8)
            if o.shape != t.shape:
                raise InputError("origin column has the wrong length")
            object.__setattr__(self, "origin", o)

    def __len__(self):
        return self.time.shape[0]

    def __iter__(self) -> Iterator[EventRecord]:
        for i in range(len(self)):
            org = None if self.origin is None else ORIGINS[self.origin[i]]
            yield EventRecord(float(self.time[i]), float(self.amount1[i]), float(self.amount2[i]), org)

    def records(self):
        return list(self)

    def without_origins(self) -> "Events":
        return Events(self.time, self.amount1, self.amount2, None)

    @classmethod
    def from_records(cls, records) -> "Events":
        records = list(records)
        t = np.array([r.time for r in records], dtype=float)
        a1 = np.array([r.amount1 for r in records], dtype=float)
        a2 = np.array([r.amount2 for r in records], dtype=float)
        if records and all(r.origin is not None for r in records):
            origin = np.array([ORIGINS.index(r.origin) for r in records], dtype=np.int8)
        else:
            origin = None
        return cls(t, a1, a2, origin)


@dataclass(frozen=True, eq=False)
class IntervalPanel:
    """Per-interval maxima ``z`` and counts ``n`` (both ``M x 2``) over ``[0, horizon]``."""

    horizon: float
    z: np.ndarray
    n: np.ndarray

    def __post_init__(self):
        if not (np.isfinite(self.horizon) and self.horizon > 0):
            raise InputError(f"horizon must be positive, got {self.horizon!r}")
        z = np.asarray(self.z, dtype=float)
        n_raw = np.asarray(self.n)
        if z.ndim != 2 or z.shape[1] != 2 or n_raw.shape != z.shape or z.shape[0] < 1:
            raise InputError("panel needs matching M x 2 matrices z and n with M >= 1")
        if not np.all(np.equal(np.mod(n_raw, 1), 0)) or np.any(n_raw < 0):
            raise InputError("counts must be nonnegative integers")
        n = n_raw.astype(np.int64)
        if np.any(np.isnan(z)) or np.any(z < 0):
            raise InputError("maxima must be >= 0")
        if np.any((n == 0) != (z == 0)):
            raise InputError("a zero count must coincide with a zero maximum and vice versa")
        object.__setattr__(self, "horizon", float(self.horizon))
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "n", n)

    @property
    def M(self) -> int:
        return self.z.shape[0]

    @property
    def dt(self) -> float:
        return self.horizon / self.M

    def __eq__(self, other):
        if not isinstance(other, IntervalPanel):
            return NotImplemented
        return (self.horizon == other.horizon and np.array_equal(self.z, other.z)
                and np.array_equal(self.n, other.n))


# ---------------------------------------------------------------------------
# Random streams
# ---------------------------------------------------------------------------


def make_rng(seed, index=None) -> np.random.Generator:
    """Generator for ``seed``, or for the ``index``-th substream of ``seed``.

    Substreams depend only on ``(seed, index)``, never on the order in which
    they are requested.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    key = () if index is None else (int(index),)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


# ---------------------------------------------------------------------------
# Inverse transforms
# ---------------------------------------------------------------------------


def _solve_increasing(fun, target, start_hi):
    """Vectorised bisection for ``fun(x) = target`` on ``[0, inf)``.

    ``fun`` must be nondecreasing with ``fun(0) <= target``.  The upper end
    starts at ``start_hi`` and doubles until it brackets the root.
    """
    target = np.asarray(target, dtype=float)
    lo = np.zeros_like(target)
    hi = np.full_like(target, float(start_hi))
    for _ in range(_GROW_LIMIT):
        short = fun(hi) < target
        if not np.any(short):
            break
        hi = np.where(short, hi * 2.0, hi)
        lo = np.where(short, hi / 2.0, lo)
    else:
        raise NumericError(f"could not bracket the root for targets {target[short][:5]}")
    for _ in range(_BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        if np.all((mid == lo) | (mid == hi)):
            break
        up = fun(mid) < target
        lo = np.where(up, mid, lo)
        hi = np.where(up, hi, mid)
    return 0.5 * (lo + hi)


def _start(m: BcppModel, j):
    return max(float(m.dist(j).quantile(1.0 - 1e-6)), 1e-12)


def perp_jump_quantile_sf(m: BcppModel, j, q):
    """Jump size of the independent part of margin ``j`` with survival probability ``q``."""
    q = np.asarray(q, dtype=float)
    return _solve_increasing(lambda x: -np.asarray(survival_perp(m, j, x)), -q, _start(m, j))


def parallel_marginal_quantile_sf(m: BcppModel, j, q):
    """Margin-``j`` component of a common shock with survival probability ``q``."""
    q = np.asarray(q, dtype=float)
    return _solve_increasing(lambda x: -np.asarray(survival_parallel_marginal(m, j, x)), -q, _start(m, j))


def conditional_cdf(m: BcppModel, x, y, numeric_density=False):
    """Distribution of the second component of a common shock given the first equals ``x``."""
    p1, _, _ = parallel_partials(m, x, y)
    f1 = density_parallel_marginal(m, 1, x, numeric=numeric_density)
    with np.errstate(invalid="ignore", divide="ignore"):
        h = np.asarray(p1) / np.asarray(f1)
    return np.clip(h, 0.0, 1.0)[()]


def conditional_quantile(m: BcppModel, x, p, numeric_density=False):
    """Inverse in ``y`` of ``conditional_cdf(m, x, y)`` by bracketed bisection."""
    m.require_parallel()
    x, p = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(p, dtype=float))
    if np.any((p <= 0) | (p >= 1)):
        raise NumericError("conditional_quantile needs 0 < p < 1")
    f1 = np.asarray(density_parallel_marginal(m, 1, x, numeric=numeric_density))
    if np.any(~(f1 > 0)):
        raise NumericError("conditional law undefined where the common-shock density of margin 1 is zero")
    xs = x.ravel()
    y = _solve_increasing(lambda yy: np.asarray(conditional_cdf(m, xs, yy, numeric_density)),
                          p.ravel(), _start(m, 2))
    return y.reshape(p.shape)[()]


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


def _open_uniform(rng, size):
    # uniform on (0, 1]
    return 1.0 - rng.random(size)


def sample_path(m: BcppModel, horizon: float, seed, index=None) -> Events:
    """Sample every jump of the process on ``(0, horizon]``.

    Parameters
    ----------
    m : BcppModel
    horizon : float
    seed : int, SeedSequence entropy or Generator
        Reproducibility token; ``index`` selects a substream.

    Returns
    -------
    Events
        Time-sorted jumps with origin labels.
    """
    if not (np.isfinite(horizon) and horizon > 0):
        raise InputError("horizon must be positive")
    m.require_nondegenerate()
    rng = make_rng(seed, index)
    n1 = int(rng.poisson(m.lambda1_perp * horizon))
    n2 = int(rng.poisson(m.lambda2_perp * horizon))
    nc = int(rng.poisson(m.lambda_parallel * horizon))

    t1 = horizon * _open_uniform(rng, n1)
    t2 = horizon * _open_uniform(rng, n2)
    tc = horizon * _open_uniform(rng, nc)

    x1 = perp_jump_quantile_sf(m, 1, _open_uniform(rng, n1)) if n1 else np.empty(0)
    x2 = perp_jump_quantile_sf(m, 2, _open_uniform(rng, n2)) if n2 else np.empty(0)
    if nc:
        xc = parallel_marginal_quantile_sf(m, 1, _open_uniform(rng, nc))
        # draw from (0, 1); an exact 0 is remapped to the smallest positive double
        pc = rng.random(nc)
        pc = np.where(pc > 0, pc, np.finfo(float).tiny)
        yc = conditional_quantile(m, xc, pc)
    else:
        xc = yc = np.empty(0)

    time = np.concatenate([t1, t2, tc])
    a1 = np.concatenate([x1, np.zeros(n2), xc])
    a2 = np.concatenate([np.zeros(n1), x2, yc])
    origin = np.concatenate([np.zeros(n1, np.int8), np.ones(n2, np.int8), np.full(nc, 2, np.int8)])
    order = np.argsort(time, kind="stable")
    return Events(time[order], a1[order], a2[order], origin[order])


def aggregate(events: Events, horizon: float, M: int) -> IntervalPanel:
    """Per-interval maxima and counts on ``M`` equal intervals ``(t_{i-1}, t_i]``."""
    if M < 1 or int(M) != M:
        raise InputError(f"interval count must be a positive integer, got {M!r}")
    M = int(M)
    t = events.time
    if np.any(~(t > 0)) or np.any(t > horizon):
        raise InputError("event times must lie in (0, horizon]")
    edges = np.arange(1, M + 1) * (horizon / M)
    edges[-1] = horizon
    idx = np.searchsorted(edges, t, side="left")
    z = np.zeros((M, 2))
    n = np.zeros((M, 2), dtype=np.int64)
    for j, amt in enumerate((events.amount1, events.amount2)):
        hit = amt > 0
        np.add.at(n[:, j], idx[hit], 1)
        np.maximum.at(z[:, j], idx[hit], amt[hit])
    return IntervalPanel(horizon, z, n)


def marginal_jump_vectors(events: Events):
    """All positive jump sizes of each margin, in time order."""
    return events.amount1[events.amount1 > 0].copy(), events.amount2[events.amount2 > 0].copy()


def simulate_panel(m: BcppModel, horizon: float, M: int, seed, index=None):
    """Sample a path and return ``(panel, s1, s2, events)``."""
    ev = sample_path(m, horizon, seed, index)
    s1, s2 = marginal_jump_vectors(ev)
    return aggregate(ev, horizon, M), s1, s2, ev


__all__ = [
    "EventRecord", "Events", "IntervalPanel", "make_rng", "sample_path", "aggregate",
    "marginal_jump_vectors", "simulate_panel", "conditional_cdf", "conditional_quantile",
    "perp_jump_quantile_sf", "parallel_marginal_quantile_sf", "cdf_parallel_marginal",
]
