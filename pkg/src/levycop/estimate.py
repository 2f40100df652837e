"""Marginal fits, IFM and full maximum likelihood, parametric bootstrap."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, logit

from .errors import InputError, LevyCopError, NumericError
from .likelihood import panel_loglik
from .model import BcppModel, Exponential, Weibull, make_copula, make_dist
from .simulate import IntervalPanel, simulate_panel

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FitOptions:
    """Optimizer settings; every field maps to a config key of the CLI."""

    xtol: float = 1e-6
    ftol: float = 1e-8
    max_iter: int = 500
    nm_max_iter: int = 500
    simplex_spread: float = 0.1
    grid_points: int = 61
    delta_min: float = 1e-3
    delta_max: float = 1e3
    logit_span: float = 20.0
    init_delta: float = 1.0


@dataclass
class FitReport:
    estimates: dict
    loglik: float
    converged: bool
    iterations: int
    method: str
    copula: str
    families: tuple

    def to_model(self) -> BcppModel:
        return model_from_params(self.estimates, self.families, self.copula)


@dataclass
class BootstrapSummary:
    names: list
    values: np.ndarray
    mean: np.ndarray
    sd: np.ndarray
    n_replicates: int
    n_failed: int
    seed: int
    substreams: list
    method: str
    estimates: np.ndarray = field(repr=False)
    warning: bool = False

    def table(self):
        """Rows (statistic, values) in the value / mean / SD layout."""
        return [("value", self.values), ("bootstrap mean", self.mean),
                ("bootstrap standard deviation", self.sd)]


# ---------------------------------------------------------------------------
# parameter bookkeeping
# ---------------------------------------------------------------------------


def param_names(families, copula: str = "clayton"):
    names = ["lambda1", "lambda2"]
    for j, fam in enumerate(families, start=1):
        names += [f"{p}{j}" for p in make_dist(fam, **_unit_params(fam)).param_names]
    return names + ["delta"]


def _unit_params(fam):
    return {"theta": 1.0} if fam == "exponential" else {"alpha": 1.0, "beta": 1.0}


def model_from_params(params: dict, families, copula: str) -> BcppModel:
    dists = []
    for j, fam in enumerate(families, start=1):
        keys = _unit_params(fam)
        dists.append(make_dist(fam, **{k: params[f"{k}{j}"] for k in keys}))
    return BcppModel(params["lambda1"], params["lambda2"], dists[0], dists[1],
                     make_copula(copula, params["delta"]))


def _delta_max_pcs(l1, l2):
    return min(1.0 / l1, 1.0 / l2)


class _DeltaTransform:
    """Map the real line onto the admissible copula parameters."""

    def __init__(self, copula, l1, l2, opts: FitOptions):
        self.copula = copula
        if copula == "clayton":
            self.lo, self.hi = math.log(opts.delta_min), math.log(opts.delta_max)
        else:
            self.dmax = _delta_max_pcs(l1, l2)
            self.lo, self.hi = -opts.logit_span, opts.logit_span

    def to_delta(self, t):
        if self.copula == "clayton":
            return math.exp(t)
        return self.dmax * float(expit(t))

    def from_delta(self, d):
        if self.copula == "clayton":
            return math.log(d)
        return float(logit(min(max(d / self.dmax, 1e-12), 1 - 1e-12)))


def _safe_loglik(m_factory, panel):
    try:
        m = m_factory()
        val = panel_loglik(m, panel)
    except (LevyCopError, FloatingPointError, OverflowError, ZeroDivisionError):
        return -np.inf
    return val if np.isfinite(val) else -np.inf


# ---------------------------------------------------------------------------
# marginals
# ---------------------------------------------------------------------------


def _weibull_shape(s):
    """Profile-likelihood shape estimate by safeguarded Newton on the score."""
    ls = np.log(s)
    mean_ls = ls.mean()
    if np.ptp(ls) == 0:
        raise NumericError("Weibull fit needs at least two distinct jump sizes")
    top = ls.max()

    def score(b):
        w = np.exp(b * (ls - top))
        sw = w.sum()
        m1 = np.dot(w, ls) / sw
        m2 = np.dot(w, ls * ls) / sw
        return 1.0 / b + mean_ls - m1, -1.0 / b ** 2 - (m2 - m1 * m1)

    lo, hi = 1e-3, 1.0
    while score(hi)[0] > 0:
        lo, hi = hi, hi * 2.0
        if hi > 1e6:
            raise NumericError("Weibull shape diverges")
    while score(lo)[0] < 0:
        lo /= 2.0
        if lo < 1e-12:
            raise NumericError("Weibull shape collapses to zero")
    b = 0.5 * (lo + hi)
    for _ in range(200):
        g, dg = score(b)
        if g > 0:
            lo = b
        else:
            hi = b
        step = b - g / dg
        b_new = step if lo < step < hi else 0.5 * (lo + hi)
        if abs(b_new - b) <= 1e-14 * max(1.0, b):
            return b_new
        b = b_new
    return b


def fit_marginal(s, horizon: float, family: str):
    """Maximise the compound Poisson likelihood of all jumps of one margin.

    Returns
    -------
    (float, JumpSizeDist)
        Frequency estimate ``len(s) / horizon`` and the fitted jump-size law.
    """
    s = np.asarray(s, dtype=float)
    if s.size == 0:
        raise InputError("no jumps to fit")
    if np.any(~(s > 0)) or np.any(~np.isfinite(s)):
        raise InputError("jump sizes must be finite and positive")
    if not horizon > 0:
        raise InputError("horizon must be positive")
    lam = s.size / horizon
    family = family.lower()
    if family == "exponential":
        return lam, Exponential(1.0 / s.mean())
    if family == "weibull":
        b = _weibull_shape(s)
        a = float(np.exp(np.log(np.mean(np.exp(b * (np.log(s) - np.log(s).max())))) / b + np.log(s).max()))
        return lam, Weibull(a, b)
    raise InputError(f"unknown jump-size family {family!r}")


# ---------------------------------------------------------------------------
# copula step of IFM
# ---------------------------------------------------------------------------


def _golden_max(f, a, b, xtol, ftol, max_iter):
    g = (math.sqrt(5.0) - 1.0) / 2.0
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = f(c), f(d)
    it = 0
    converged = False
    while it < max_iter:
        it += 1
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = f(d)
        if (b - a) < xtol and abs(fc - fd) < ftol:
            converged = True
            break
    return (c, fc, it, converged) if fc >= fd else (d, fd, it, converged)


def fit_copula_ifm(panel: IntervalPanel, margins, copula: str = "clayton",
                   options: Optional[FitOptions] = None) -> FitReport:
    """Maximise the panel likelihood over the copula parameter, margins held fixed.

    ``margins`` is ``((lambda1, dist1), (lambda2, dist2))``.  A log-spaced
    grid scan locates the global region, golden-section search refines it.
    """
    opts = options or FitOptions()
    (l1, d1), (l2, d2) = margins
    tr = _DeltaTransform(copula, l1, l2, opts)

    def f(t):
        return _safe_loglik(lambda: BcppModel(l1, l2, d1, d2, make_copula(copula, tr.to_delta(t))), panel)

    grid = np.linspace(tr.lo, tr.hi, opts.grid_points)
    if copula == "clayton":
        t0 = tr.from_delta(opts.init_delta)
        if tr.lo < t0 < tr.hi:
            grid = np.unique(np.append(grid, t0))
    vals = np.array([f(t) for t in grid])
    i = int(np.argmax(vals))
    if not np.isfinite(vals[i]):
        raise NumericError("likelihood is -inf over the whole parameter grid")
    a = grid[max(i - 1, 0)]
    b = grid[min(i + 1, len(grid) - 1)]
    t, ft, it, conv = _golden_max(f, a, b, opts.xtol, opts.ftol, opts.max_iter)
    if vals[i] > ft:
        t, ft = grid[i], vals[i]
    est = {"lambda1": l1, "lambda2": l2}
    est.update({f"{k}1": v for k, v in d1.params().items()})
    est.update({f"{k}2": v for k, v in d2.params().items()})
    est["delta"] = tr.to_delta(t)
    if not conv:
        log.warning("IFM copula step stopped after %d iterations without meeting tolerances", it)
    return FitReport(est, float(ft), conv, len(grid) + it, "ifm", copula, (d1.family, d2.family))


def fit_ifm(panel: IntervalPanel, s1, s2, families=("exponential", "exponential"),
            copula: str = "clayton", options: Optional[FitOptions] = None) -> FitReport:
    """Two-step IFM: each margin from all its jumps, then the copula from the panel."""
    m1 = fit_marginal(s1, panel.horizon, families[0])
    m2 = fit_marginal(s2, panel.horizon, families[1])
    return fit_copula_ifm(panel, (m1, m2), copula, options)


# ---------------------------------------------------------------------------
# full maximum likelihood
# ---------------------------------------------------------------------------


class _FullTransform:
    def __init__(self, families, copula, opts):
        self.families = tuple(families)
        self.copula = copula
        self.opts = opts
        self.names = param_names(self.families, copula)

    def to_params(self, t):
        p = {n: float(v) for n, v in zip(self.names[:-1], np.exp(t[:-1]))}
        if self.copula == "clayton":
            p["delta"] = math.exp(t[-1])
        else:
            p["delta"] = _delta_max_pcs(p["lambda1"], p["lambda2"]) * float(expit(t[-1]))
        return p

    def from_params(self, p):
        t = [math.log(p[n]) for n in self.names[:-1]]
        if self.copula == "clayton":
            t.append(math.log(p["delta"]))
        else:
            dmax = _delta_max_pcs(p["lambda1"], p["lambda2"])
            t.append(float(logit(min(max(p["delta"] / dmax, 1e-12), 1 - 1e-12))))
        return np.array(t)


def fit_full_mle(panel: IntervalPanel, families=("exponential", "exponential"),
                 copula: str = "clayton", init=None,
                 options: Optional[FitOptions] = None, s1=None, s2=None) -> FitReport:
    """Nelder-Mead over all parameters at once.

    ``init`` is a parameter dict, a ``FitReport`` or a ``BcppModel``; when
    omitted the IFM estimate is used, which needs the jump vectors ``s1``,
    ``s2``.
    """
    opts = options or FitOptions()
    if init is None:
        if s1 is None or s2 is None:
            raise InputError("full MLE needs an initial point or the jump vectors for IFM")
        init = fit_ifm(panel, s1, s2, families, copula, opts).estimates
    elif isinstance(init, FitReport):
        init = init.estimates
    elif isinstance(init, BcppModel):
        init = init.params()
    tr = _FullTransform(families, copula, opts)
    x0 = tr.from_params(init)

    def negll(t):
        return -_safe_loglik(lambda: model_from_params(tr.to_params(t), families, copula), panel)

    simplex = np.vstack([x0] + [x0 + opts.simplex_spread * e for e in np.eye(len(x0))])
    res = minimize(negll, x0, method="Nelder-Mead",
                   options={"initial_simplex": simplex, "xatol": opts.xtol, "fatol": opts.ftol,
                            "maxiter": opts.nm_max_iter, "maxfev": 4 * opts.nm_max_iter,
                            "adaptive": False})
    if not np.isfinite(res.fun):
        raise NumericError("full MLE could not find an admissible point")
    if not res.success:
        log.warning("Nelder-Mead: %s", res.message)
    return FitReport(tr.to_params(res.x), float(-res.fun), bool(res.success), int(res.nit),
                     "full-mle", copula, tuple(families))


# ---------------------------------------------------------------------------
# bootstrap
# ---------------------------------------------------------------------------


def _families(m: BcppModel):
    return (m.dist1.family, m.dist2.family)


def _replicate(args):
    m, horizon, M, method, seed, index, opts = args
    panel, s1, s2, _ = simulate_panel(m, horizon, M, seed, index)
    fam = _families(m)
    cop = m.copula.family
    try:
        rep = fit_ifm(panel, s1, s2, fam, cop, opts)
        if method == "full-mle":
            rep = fit_full_mle(panel, fam, cop, init=rep, options=opts)
    except LevyCopError as exc:
        log.info("replicate %s failed: %s", index, exc)
        return None
    if not rep.converged:
        return None
    return [rep.estimates[n] for n in param_names(fam, cop)]


def bootstrap(m: BcppModel, horizon: float, M: int, R: int, method: str = "ifm", seed: int = 0,
              jobs: int = 1, options: Optional[FitOptions] = None,
              substreams: Optional[Sequence[int]] = None) -> BootstrapSummary:
    """Parametric bootstrap: sample, re-estimate, summarise.

    Replicate ``r`` uses substream ``substreams[r]`` of ``seed`` (default
    ``r``).  Failed or non-converged replicates are excluded from the
    moments and counted; more than 10% failures sets ``warning``.
    """
    if R < 2:
        raise InputError("the bootstrap needs at least two replicates")
    if method not in ("ifm", "full-mle"):
        raise InputError(f"unknown estimation method {method!r}")
    opts = options or FitOptions()
    streams = list(range(R)) if substreams is None else [int(s) for s in substreams]
    if len(streams) != R:
        raise InputError("need one substream per replicate")
    jobs_args = [(m, horizon, M, method, seed, r, opts) for r in streams]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_replicate, jobs_args))
    else:
        results = [_replicate(a) for a in jobs_args]
    names = param_names(_families(m), m.copula.family)
    est = np.full((R, len(names)), np.nan)
    for r, row in enumerate(results):
        if row is not None:
            est[r] = row
    ok = ~np.isnan(est).any(axis=1)
    n_failed = int(R - ok.sum())
    if ok.sum() < 2:
        raise NumericError(f"only {int(ok.sum())} of {R} replicates succeeded")
    good = est[ok]
    truth = m.params()
    return BootstrapSummary(
        names=names,
        values=np.array([truth[n] for n in names]),
        mean=good.mean(axis=0),
        sd=good.std(axis=0, ddof=1),
        n_replicates=R,
        n_failed=n_failed,
        seed=seed,
        substreams=streams,
        method=method,
        estimates=est,
        warning=n_failed > 0.1 * R,
    )


__all__ = [
    "FitOptions", "FitReport", "BootstrapSummary", "fit_marginal", "fit_copula_ifm", "fit_ifm",
    "fit_full_mle", "bootstrap", "model_from_params", "param_names",
]
