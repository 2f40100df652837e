"""End-to-end acceptance criteria, one test per criterion.

Each test prints a single ``criterion N: PASS|FAIL`` line with the measured
quantities; the terminal summary repeats the verdicts.
"""
import csv
import io
import math
import os
import time
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

from levycop import (
    BcppModel,
    ClaytonLevyCopula,
    Exponential,
    PureCommonShockLevyCopula,
    Weibull,
    bootstrap,
    build_monthly_panel,
    cell_logliks,
    fit_ifm,
    gof_tests,
    gof_transform,
    panel_loglik,
    preprocess,
    read_loss_file,
    simulate_panel,
)
from levycop import formats
from levycop.gof import F_kl
from levycop.ingest import Window
from levycop.likelihood import poisson_triplet_logprob
from levycop.model import cdf_parallel, parallel_partials

DATA = Path(__file__).parent / "data"
FIXTURE = DATA / "danish_fixture.csv"
DANISH_ENV = "LEVYCOP_DANISH_FILE"

_OUTPUTS = {}


def report(crit, ok, detail):
    print(f"\ncriterion {crit}: {'PASS' if ok else 'FAIL'} - {detail}")


def table1(delta=1.0):
    return BcppModel(1000.0, 1000.0, Exponential(1.0), Exponential(1.0), ClaytonLevyCopula(delta))


def _bootstrap_bytes(bs, tmp_path, name):
    p = tmp_path / f"{name}.csv"
    r = tmp_path / f"{name}_replicates.csv"
    formats.write_bootstrap(p, bs)
    formats.write_replicates(r, bs)
    return p.read_bytes() + r.read_bytes()


# ---------------------------------------------------------------------------
# 1. derivative consistency
# ---------------------------------------------------------------------------


def _fd1(f, x, rel=1e-3):
    # five-point stencil, step proportional to x
    h = rel * x
    return (-f(x + 2 * h) + 8 * f(x + h) - 8 * f(x - h) + f(x - 2 * h)) / (12 * h)


def _fd_mixed(f, x, y, rel=1e-3):
    hx, hy = rel * x, rel * y
    return (f(x + hx, y + hy) - f(x + hx, y - hy) - f(x - hx, y + hy) + f(x - hx, y - hy)) / (4 * hx * hy)


def _relerr(a, b):
    return np.max(np.abs(a - b) / np.abs(b))


def _complement(c, upper):
    # differencing C itself loses everything to cancellation once u/v is
    # extreme; v - C (u >= v) or u - C (u < v) keeps full relative accuracy
    # and has the mixed derivative -dudv.  ``upper`` is fixed at the stencil
    # centre so every stencil point uses the same complement.
    return lambda u, v: np.where(upper, c._v_minus_value(u, v), c._u_minus_value(u, v))


@pytest.mark.acceptance(criterion=1)
def test_criterion_1_derivative_consistency():
    t0 = time.perf_counter()
    g = np.geomspace(1.0, 1000.0, 20)
    U, V = np.meshgrid(g, g)
    errs = {}
    for c in (ClaytonLevyCopula(0.4), ClaytonLevyCopula(1.0), ClaytonLevyCopula(5.0),
              PureCommonShockLevyCopula(1e-4)):
        tag = f"{c.family}({c.delta})"
        errs[tag + " du"] = _relerr(-_fd1(lambda u: c._v_minus_value(u, V), U), c.du(U, V))
        errs[tag + " dv"] = _relerr(-_fd1(lambda v: c._u_minus_value(U, v), V), c.dv(U, V))
        mixed = _fd_mixed(_complement(c, U >= V), U, V)
        errs[tag + " dudv"] = _relerr(-mixed, c.dudv(U, V))
    xs = np.geomspace(0.05, 5.0, 20)
    X, Y = np.meshgrid(xs, xs)
    models = {
        "clayton-exp": table1(),
        "clayton-weibull": BcppModel(71.1, 41.5, Weibull(0.818, 1.197), Weibull(1.036, 1.131),
                                     ClaytonLevyCopula(0.695)),
        "pcs-mixed": BcppModel(3.0, 2.0, Exponential(1.5), Weibull(1.2, 0.9),
                               PureCommonShockLevyCopula(0.1)),
    }
    for tag, m in models.items():
        p1, p2, dens = parallel_partials(m, X, Y)
        errs[tag + " F1par"] = _relerr(_fd1(lambda x: cdf_parallel(m, x, Y), X), p1)
        errs[tag + " F2par"] = _relerr(_fd1(lambda y: cdf_parallel(m, X, y), Y), p2)
        errs[tag + " fpar"] = _relerr(_fd_mixed(lambda x, y: cdf_parallel(m, x, y), X, Y), dens)
    elapsed = time.perf_counter() - t0
    first = max(v for k, v in errs.items() if not (k.endswith("dudv") or k.endswith("fpar")))
    mixed = max(v for k, v in errs.items() if k.endswith("dudv") or k.endswith("fpar"))
    ok = first <= 1e-6 and mixed <= 1e-4 and elapsed < 1.0
    report(1, ok, f"max rel err first-order {first:.2e} (<=1e-6), mixed {mixed:.2e} (<=1e-4), "
                  f"{elapsed:.2f}s (<1s)")
    assert first <= 1e-6, errs
    assert mixed <= 1e-4, errs
    assert elapsed < 1.0


# ---------------------------------------------------------------------------
# 2. likelihood normalisation
# ---------------------------------------------------------------------------


def _gl_nodes(breaks, order=8):
    z, w = np.polynomial.legendre.leggauss(order)
    a, b = breaks[:-1, None], breaks[1:, None]
    x = (0.5 * (b - a) * z + 0.5 * (a + b)).ravel()
    wt = (0.5 * (b - a) * w).ravel()
    return x, wt


@pytest.mark.acceptance(criterion=2)
def test_criterion_2_likelihood_normalisation():
    t0 = time.perf_counter()
    m = BcppModel(2.0, 2.0, Exponential(1.0), Exponential(1.0), ClaytonLevyCopula(1.0))
    dt, kmax = 1.0, 12
    x, w = _gl_nodes(np.concatenate([[0.0], np.geomspace(0.02, 40.0, 24)]))
    X, Y = np.meshgrid(x, x, indexing="ij")
    W2 = np.outer(w, w)
    atom = math.exp(cell_logliks(m, 0.0, 0.0, 0, 0, dt))
    edge_err, edges = 0.0, 0.0
    for k in range(1, kmax + 1):
        for j in (1, 2):
            args = (x, 0.0, k, 0) if j == 1 else (0.0, x, 0, k)
            mass = float(np.dot(w, np.exp(cell_logliks(m, *args, dt))))
            exact = math.exp(poisson_triplet_logprob(m, dt, k if j == 1 else 0, k if j == 2 else 0, 0))
            edge_err = max(edge_err, abs(mass - exact))
            edges += mass
    interior = 0.0
    for k in range(1, kmax + 1):
        for l in range(1, kmax + 1):
            interior += float(np.sum(W2 * np.exp(cell_logliks(m, X, Y, k, l, dt))))
    total = atom + edges + interior
    elapsed = time.perf_counter() - t0
    ok = abs(total - 1.0) <= 1e-3 and elapsed < 30
    report(2, ok, f"total mass {total:.8f} (|1-mass| <= 1e-3); edge integrals vs exact "
                  f"P(k,0,0): max abs err {edge_err:.1e}; {elapsed:.1f}s (<30s)")
    assert edge_err < 1e-6
    assert abs(total - 1.0) <= 1e-3
    assert elapsed < 30


# ---------------------------------------------------------------------------
# 3. simulator vs likelihood count law
# ---------------------------------------------------------------------------

C3_SEED = 20240


def run_c3():
    m = BcppModel(2.0, 2.0, Exponential(1.0), Exponential(1.0), ClaytonLevyCopula(1.0))
    N = 100_000
    panel, _, _, _ = simulate_panel(m, float(N), N, C3_SEED)
    counts = {}
    for k, l in panel.n:
        counts[(int(k), int(l))] = counts.get((int(k), int(l)), 0) + 1
    top = int(panel.n.max())
    K, L = np.meshgrid(np.arange(top + 1), np.arange(top + 1), indexing="ij")
    p = F_kl(m, 1.0, K.ravel(), L.ravel(), np.inf, np.inf).reshape(K.shape)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k", "l", "observed", "expected", "se"])
    checked, worst, fails = 0, 0.0, []
    for k in range(top + 1):
        for l in range(top + 1):
            e = N * p[k, l]
            obs = counts.get((k, l), 0)
            se = math.sqrt(N * p[k, l] * (1 - p[k, l]))
            w.writerow([k, l, obs, repr(float(e)), repr(se)])
            if e >= 25:
                checked += 1
                zscore = abs(obs - e) / se
                worst = max(worst, zscore)
                if zscore > 3:
                    fails.append((k, l, obs, e))
    return buf.getvalue().encode(), checked, worst, fails


@pytest.mark.acceptance(criterion=3)
def test_criterion_3_simulated_counts_match_likelihood():
    t0 = time.perf_counter()
    out, checked, worst, fails = run_c3()
    _OUTPUTS[3] = out
    elapsed = time.perf_counter() - t0
    ok = not fails and elapsed < 60
    report(3, ok, f"{checked} cells with expected count >= 25, worst |z| = {worst:.2f} "
                  f"(<= 3), {elapsed:.1f}s (<60s)")
    assert not fails, fails
    assert elapsed < 60


# ---------------------------------------------------------------------------
# 4-6. bootstrap reproductions
# ---------------------------------------------------------------------------


def run_c4(tmp_path):
    bs = bootstrap(table1(), 1.0, 100, 50, "ifm", seed=4)
    return bs, _bootstrap_bytes(bs, tmp_path, "c4")


@pytest.mark.acceptance(criterion=4)
def test_criterion_4_table1_ifm_bootstrap(tmp_path):
    t0 = time.perf_counter()
    bs, out = run_c4(tmp_path)
    _OUTPUTS[4] = out
    i = bs.names.index("delta")
    mean, sd = bs.mean[i], bs.sd[i]
    tol = 3 * sd / math.sqrt(50)
    ok = abs(mean - 1.0) <= tol and 0.07 <= sd <= 0.17 and bs.n_failed == 0
    report(4, ok, f"delta mean {mean:.4f} (|mean-1| <= {tol:.4f}), SD {sd:.4f} in [0.07, 0.17], "
                  f"failed {bs.n_failed}, {time.perf_counter() - t0:.0f}s")
    assert bs.n_failed == 0
    assert abs(mean - 1.0) <= tol
    assert 0.07 <= sd <= 0.17


def run_c5(tmp_path):
    b1 = bootstrap(table1(1.0), 1.0, 50, 50, "ifm", seed=5)
    b5 = bootstrap(table1(5.0), 1.0, 50, 50, "ifm", seed=5)
    return b1, b5, _bootstrap_bytes(b1, tmp_path, "c5_1") + _bootstrap_bytes(b5, tmp_path, "c5_5")


@pytest.mark.acceptance(criterion=5)
def test_criterion_5_sd_proportional_to_delta(tmp_path):
    t0 = time.perf_counter()
    b1, b5, out = run_c5(tmp_path)
    _OUTPUTS[5] = out
    sd1 = b1.sd[b1.names.index("delta")]
    sd5 = b5.sd[b5.names.index("delta")]
    ratio = sd5 / sd1
    ok = 2.5 <= ratio <= 6.0
    report(5, ok, f"SD(delta=5) {sd5:.4f} / SD(delta=1) {sd1:.4f} = {ratio:.2f} in [2.5, 6.0], "
                  f"{time.perf_counter() - t0:.0f}s")
    assert 2.5 <= ratio <= 6.0


def run_c6(tmp_path):
    bs = bootstrap(table1(), 1.0, 100, 25, "full-mle", seed=6)
    return bs, _bootstrap_bytes(bs, tmp_path, "c6")


@pytest.mark.acceptance(criterion=6)
def test_criterion_6_full_mle_unbiased(tmp_path):
    t0 = time.perf_counter()
    bs, out = run_c6(tmp_path)
    _OUTPUTS[6] = out
    dev = np.abs(bs.mean - bs.values)
    tol = 3 * bs.sd / math.sqrt(25)
    ok = bool(np.all(dev <= tol)) and bs.n_failed == 0
    detail = ", ".join(f"{n} {mu:.4g} (tol {t:.3g})" for n, mu, t in zip(bs.names, bs.mean, tol))
    report(6, ok, f"{detail}; failed {bs.n_failed}, {time.perf_counter() - t0:.0f}s")
    assert bs.n_failed == 0
    assert np.all(dev <= tol), (bs.mean, bs.sd)


# ---------------------------------------------------------------------------
# 7. loss-data pipeline
# ---------------------------------------------------------------------------

# Frozen targets for tests/data/danish_fixture.csv (regenerate with
# tests/data/make_danish_fixture.py).  Counts come from a plain csv recount,
# Weibull parameters from scipy.stats.weibull_min, delta from a dense grid of
# the panel likelihood, and the goodness-of-fit correlations from a
# finite-difference evaluation of the conditional law of the second maximum.
FIXTURE_TARGETS = {
    "events": 1001, "s1": 756, "s2": 455, "both_rows": 125,
    "delta": 0.6237,
    "rho12": {"pure-common-shock": 0.3397, "clayton": 0.0921},
    "p_rho12": {"pure-common-shock": 0.0001, "clayton": 0.3031},
}

PAPER_TARGETS = {
    "events": 940, "s1": 782, "s2": 456, "both_rows": 128,
    "margins": {"lambda1": 71.1, "lambda2": 41.5, "alpha1": 0.818, "beta1": 1.197,
                "alpha2": 1.036, "beta2": 1.131},
    "delta": 0.695,
    "rho12": {"pure-common-shock": 0.25, "clayton": -0.09},
    "p_rho12": {"pure-common-shock": 0.01, "clayton": 0.29},
}


def _pipeline(path):
    window = Window.years(1980, 1990)
    res = preprocess(read_loss_file(path), window, outside="drop")
    panel = build_monthly_panel(res, window)
    fams = ("weibull", "weibull")
    fits = {c: fit_ifm(panel, res.s1, res.s2, fams, c) for c in ("pure-common-shock", "clayton")}
    gof = {c: gof_tests(gof_transform(f.to_model(), panel).w) for c, f in fits.items()}
    return res, panel, fits, gof


def _sig3(a, b):
    return abs(a - b) <= 0.5 * 10 ** (math.floor(math.log10(abs(b))) - 2)


def _check_pipeline(res, panel, fits, gof, targets, margins_ref):
    checks = {
        "events": len(res.events) == targets["events"],
        "s1": res.s1.size == targets["s1"],
        "s2": res.s2.size == targets["s2"],
        "panel": panel.z.shape == (132, 2) and panel.n.shape == (132, 2),
        "panel counts": tuple(panel.n.sum(axis=0)) == (res.s1.size, res.s2.size),
        "rows": int(np.sum((panel.n > 0).all(axis=1))) == targets["both_rows"],
    }
    est = fits["clayton"].estimates
    for k, ref in margins_ref.items():
        checks[k] = _sig3(est[k], ref)
    checks["delta"] = abs(est["delta"] - targets["delta"]) <= 0.005
    for c in ("pure-common-shock", "clayton"):
        checks[f"rho12 {c}"] = abs(gof[c].values["rho12"] - targets["rho12"][c]) <= 0.02
        checks[f"p rho12 {c}"] = abs(gof[c].pvalues["rho12"] - targets["p_rho12"][c]) <= 0.02
    return checks


def _fixture_oracles(path):
    """Independent recomputation of the fixture targets."""
    n_ev = n1 = n2 = 0
    s1, s2 = [], []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            if not ("1980-01-01" <= row["Date"] <= "1990-12-31"):
                continue
            b, c = float(row["Building"]), float(row["Contents"])
            if b > 1.0:
                s1.append(math.log(b))
            if c > 1.0:
                s2.append(math.log(c))
            n_ev += (b > 1.0) or (c > 1.0)
    margins = {"lambda1": len(s1) / 11.0, "lambda2": len(s2) / 11.0}
    for j, s in ((1, s1), (2, s2)):
        beta, _, alpha = stats.weibull_min.fit(np.array(s), floc=0.0)
        margins[f"alpha{j}"], margins[f"beta{j}"] = alpha, beta
    return n_ev, len(s1), len(s2), margins


@pytest.mark.acceptance(criterion=7)
def test_criterion_7_loss_data_pipeline_fixture():
    res, panel, fits, gof = _pipeline(FIXTURE)
    n_ev, n1, n2, margins = _fixture_oracles(FIXTURE)
    assert (n_ev, n1, n2) == (FIXTURE_TARGETS["events"], FIXTURE_TARGETS["s1"], FIXTURE_TARGETS["s2"])
    targets = FIXTURE_TARGETS
    checks = _check_pipeline(res, panel, fits, gof, targets, margins)
    # delta also against a dense grid of the same likelihood, margins held at their fits
    m = fits["clayton"].to_model()
    grid = np.linspace(FIXTURE_TARGETS["delta"] - 0.05, FIXTURE_TARGETS["delta"] + 0.05, 1001)
    ll = [panel_loglik(m.with_copula(ClaytonLevyCopula(d)), panel) for d in grid]
    checks["delta grid"] = abs(fits["clayton"].estimates["delta"] - grid[int(np.argmax(ll))]) <= 0.005
    ok = all(checks.values())
    report(7, ok, "fixture pipeline: " + ", ".join(f"{k} {'ok' if v else 'MISMATCH'}"
                                                   for k, v in checks.items()))
    assert ok, checks


@pytest.mark.acceptance(criterion=7)
@pytest.mark.skipif(not os.environ.get(DANISH_ENV), reason=f"set {DANISH_ENV} to the public loss file")
def test_criterion_7_loss_data_pipeline_real_file():
    res, panel, fits, gof = _pipeline(os.environ[DANISH_ENV])
    checks = _check_pipeline(res, panel, fits, gof, PAPER_TARGETS, PAPER_TARGETS["margins"])
    ok = all(checks.values())
    report(7, ok, "real file: " + ", ".join(f"{k} {'ok' if v else 'MISMATCH'}"
                                            for k, v in checks.items()))
    assert ok, checks


# ---------------------------------------------------------------------------
# 8. goodness-of-fit calibration
# ---------------------------------------------------------------------------


def run_c8():
    window = Window.years(1980, 1990)
    res = preprocess(read_loss_file(FIXTURE), window, outside="drop")
    panel = build_monthly_panel(res, window)
    fams = ("weibull", "weibull")
    fitted = fit_ifm(panel, res.s1, res.s2, fams, "clayton").to_model()
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["replicate", "rows", "rho12", "p_rho12"])
    rejections = 0
    for r in range(100):
        p, s1, s2, _ = simulate_panel(fitted, window.horizon, window.months, 8, index=r)
        refit = fit_ifm(p, s1, s2, fams, "clayton").to_model()
        rep = gof_tests(gof_transform(refit, p).w, jb_method="chi2")
        rejections += rep.pvalues["rho12"] < 0.05
        w.writerow([r, rep.n, repr(rep.values["rho12"]), repr(rep.pvalues["rho12"])])
    return buf.getvalue().encode(), rejections


@pytest.mark.acceptance(criterion=8)
def test_criterion_8_gof_calibration():
    t0 = time.perf_counter()
    out, rejections = run_c8()
    _OUTPUTS[8] = out
    elapsed = time.perf_counter() - t0
    ok = rejections <= 12 and elapsed < 600
    report(8, ok, f"cross-correlation test rejects in {rejections}/100 panels at 5% (<= 12), "
                  f"{elapsed:.0f}s (<600s)")
    assert rejections <= 12
    assert elapsed < 600


# ---------------------------------------------------------------------------
# 9. determinism
# ---------------------------------------------------------------------------


@pytest.mark.acceptance(criterion=9)
def test_criterion_9_determinism(tmp_path):
    runs = {
        3: lambda d: run_c3()[0],
        4: lambda d: run_c4(d)[1],
        5: lambda d: run_c5(d)[2],
        6: lambda d: run_c6(d)[1],
        8: lambda d: run_c8()[0],
    }
    same = {}
    for crit, fn in runs.items():
        first = _OUTPUTS.get(crit)
        if first is None:
            (tmp_path / "a").mkdir(exist_ok=True)
            first = fn(tmp_path / "a")
        (tmp_path / "b").mkdir(exist_ok=True)
        same[crit] = first == fn(tmp_path / "b")
    ok = all(same.values())
    report(9, ok, "byte-identical reruns: " + ", ".join(f"criterion {k} {'yes' if v else 'NO'}"
                                                         for k, v in same.items()))
    assert ok, same
