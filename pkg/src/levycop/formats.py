"""Plain-text file formats: run configs, panels, events, jumps and results.

Tables are comma-separated with a header row, preceded by ``# key=value``
metadata lines.  Floats are written with ``repr`` so that a write/read
round trip is bit-exact, and nothing time-dependent is ever written, so
equal inputs give byte-identical files.
"""
from __future__ import annotations

import configparser
import csv
import io
import math
import os
from dataclasses import fields
from typing import Optional

import numpy as np

from .errors import InputError
from .estimate import BootstrapSummary, FitOptions, FitReport
from .gof import STATISTICS, GofReport
from .model import BcppModel, make_copula, make_dist
from .simulate import ORIGINS, Events, IntervalPanel

CONFIG_ENV = "LEVYCOP_CONFIG"
_SECTION = "run"

RUN_DEFAULTS = {
    "horizon": "1.0",
    "intervals": "100",
    "replicates": "100",
    "seed": "0",
    "method": "ifm",
    "jobs": "1",
    "jb_method": "monte-carlo",
    "threshold": "1.0",
}


# ---------------------------------------------------------------------------
# small helpers
# ---------------------------------------------------------------------------


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _float(text, what):
    try:
        return float(text)
    except (TypeError, ValueError):
        raise InputError(f"{what}: expected a number, got {text!r}") from None


def _int(text, what):
    try:
        v = float(text)
    except (TypeError, ValueError):
        raise InputError(f"{what}: expected an integer, got {text!r}") from None
    if not v.is_integer():
        raise InputError(f"{what}: expected an integer, got {text!r}")
    return int(v)


def _bool(text):
    return str(text).strip().lower() in ("1", "true", "yes", "on")


def _write_table(path, meta: Optional[dict], header, rows):
    buf = io.StringIO()
    for k, v in (meta or {}).items():
        if "\n" in str(v):
            raise InputError(f"metadata value for {k!r} contains a newline")
        buf.write(f"# {k}={fmt(v)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    with open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())


def _read_table(path):
    meta, lines = {}, []
    with open(path, newline="") as fh:
        for line in fh:
            if line.startswith("#"):
                key, sep, val = line[1:].strip().partition("=")
                if sep:
                    meta[key.strip()] = val.strip()
            elif line.strip():
                lines.append(line)
    if not lines:
        raise InputError(f"{path}: no table header")
    reader = csv.reader(lines)
    header = next(reader)
    return meta, header, list(reader)


def _expect(path, header, want):
    if header[:len(want)] != list(want):
        raise InputError(f"{path}: expected columns {list(want)}, got {header}")


# ---------------------------------------------------------------------------
# run configuration
# ---------------------------------------------------------------------------


def load_config(path=None, defaults: bool = True, use_env: bool = True) -> dict:
    """Key-value config file (an optional ``[run]`` header is allowed).

    With ``path`` omitted the file named by ``$LEVYCOP_CONFIG`` is used, if
    set; otherwise only the built-in defaults apply.  A result file written
    by the CLI is accepted too, and yields the settings it was made with.
    """
    cfg = dict(RUN_DEFAULTS) if defaults else {}
    if not path and use_env:
        path = os.environ.get(CONFIG_ENV)
    if not path:
        return cfg
    with open(path) as fh:
        text = fh.read()
    captured = _captured_config(text)
    if captured is not None:
        cfg.update(captured)
        return cfg
    if not text.lstrip().startswith("["):
        text = f"[{_SECTION}]\n" + text
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise InputError(f"{path}: {exc}") from None
    for sec in cp.sections():
        for k, v in cp.items(sec):
            cfg[k] = v
    return cfg


def _captured_config(text):
    # result files carry their run config as "# config.<key>=<value>" lines
    if not text.startswith("#"):
        return None
    out = {}
    for line in text.splitlines():
        if not line.startswith("#"):
            break
        key, sep, val = line[1:].strip().partition("=")
        if sep and key.startswith("config."):
            out[key[len("config."):]] = val
    return out or None


def model_from_config(cfg: dict) -> BcppModel:
    """Build a model from ``copula, delta, lambda1/2, dist1/2`` and family parameters."""
    try:
        copula = cfg.get("copula", "clayton")
        dists = []
        for j in (1, 2):
            fam = cfg.get(f"dist{j}", "exponential").lower()
            if fam == "exponential":
                dists.append(make_dist(fam, theta=_float(cfg[f"theta{j}"], f"theta{j}")))
            elif fam == "weibull":
                dists.append(make_dist(fam, alpha=_float(cfg[f"alpha{j}"], f"alpha{j}"),
                                       beta=_float(cfg[f"beta{j}"], f"beta{j}")))
            else:
                raise InputError(f"dist{j}: unknown family {fam!r}")
        return BcppModel(_float(cfg["lambda1"], "lambda1"), _float(cfg["lambda2"], "lambda2"),
                         dists[0], dists[1], make_copula(copula, _float(cfg["delta"], "delta")))
    except KeyError as exc:
        raise InputError(f"model config is missing key {exc.args[0]!r}") from None


def model_to_config(m: BcppModel) -> dict:
    out = {"copula": m.copula.family, "delta": m.copula.delta,
           "lambda1": m.lambda1, "lambda2": m.lambda2}
    for j in (1, 2):
        d = m.dist(j)
        out[f"dist{j}"] = d.family
        out.update({f"{k}{j}": v for k, v in d.params().items()})
    return out


def fit_options_from_config(cfg: dict) -> FitOptions:
    kw = {}
    for f in fields(FitOptions):
        if f.name in cfg:
            conv = _int if f.type in (int, "int") else _float
            kw[f.name] = conv(cfg[f.name], f.name)
    return FitOptions(**kw)


def write_config(path, cfg: dict):
    with open(path, "w") as fh:
        for k, v in cfg.items():
            fh.write(f"{k} = {fmt(v)}\n")


# ---------------------------------------------------------------------------
# panels, events, jumps
# ---------------------------------------------------------------------------

PANEL_HEADER = ("interval_index", "z1", "z2", "n1", "n2")


def write_panel(path, panel: IntervalPanel, meta: Optional[dict] = None):
    m = {"horizon": panel.horizon, "intervals": panel.M}
    m.update(meta or {})
    rows = ((i + 1, panel.z[i, 0], panel.z[i, 1], panel.n[i, 0], panel.n[i, 1])
            for i in range(panel.M))
    _write_table(path, m, PANEL_HEADER, rows)


def read_panel(path):
    """Return ``(panel, metadata)``."""
    meta, header, rows = _read_table(path)
    _expect(path, header, PANEL_HEADER)
    if "horizon" not in meta:
        raise InputError(f"{path}: panel metadata lacks the horizon")
    try:
        z = np.array([[float(r[1]), float(r[2])] for r in rows])
        n = np.array([[_int(r[3], "n1"), _int(r[4], "n2")] for r in rows], dtype=np.int64)
        idx = [int(r[0]) for r in rows]
    except (ValueError, IndexError) as exc:
        raise InputError(f"{path}: malformed panel row ({exc})") from None
    if idx != list(range(1, len(rows) + 1)):
        raise InputError(f"{path}: interval_index must run 1..M in order")
    return IntervalPanel(_float(meta["horizon"], "horizon"), z, n), meta


def write_events(path, events: Events, keep_origins: bool = False, meta: Optional[dict] = None):
    with_origin = keep_origins and events.origin is not None
    header = ("time", "amount1", "amount2") + (("origin",) if with_origin else ())
    rows = []
    for i in range(len(events)):
        row = [events.time[i], events.amount1[i], events.amount2[i]]
        if with_origin:
            row.append(ORIGINS[events.origin[i]])
        rows.append(row)
    _write_table(path, meta, header, rows)


def read_events(path):
    """Return ``(events, metadata)``; an ``origin`` column is never read."""
    meta, header, rows = _read_table(path)
    _expect(path, header, ("time", "amount1", "amount2"))
    try:
        cols = np.array([[float(r[0]), float(r[1]), float(r[2])] for r in rows]).reshape(-1, 3)
    except (ValueError, IndexError) as exc:
        raise InputError(f"{path}: malformed event row ({exc})") from None
    return Events(cols[:, 0], cols[:, 1], cols[:, 2]), meta


def write_jumps(path, s1, s2, meta: Optional[dict] = None):
    rows = [(1, v) for v in s1] + [(2, v) for v in s2]
    _write_table(path, meta, ("margin", "size"), rows)


def read_jumps(path):
    """Return ``(s1, s2, metadata)``."""
    meta, header, rows = _read_table(path)
    _expect(path, header, ("margin", "size"))
    s = {1: [], 2: []}
    for r in rows:
        j = _int(r[0], "margin")
        if j not in s:
            raise InputError(f"{path}: margin must be 1 or 2, got {j}")
        s[j].append(_float(r[1], "size"))
    return np.array(s[1]), np.array(s[2]), meta


# ---------------------------------------------------------------------------
# results
# ---------------------------------------------------------------------------


def write_fit(path, rep: FitReport, meta: Optional[dict] = None):
    m = {"kind": "fit", "method": rep.method, "copula": rep.copula,
         "dist1": rep.families[0], "dist2": rep.families[1], "loglik": rep.loglik,
         "converged": rep.converged, "iterations": rep.iterations}
    m.update(meta or {})
    _write_table(path, m, ("parameter", "value"), rep.estimates.items())


def read_fit(path) -> FitReport:
    meta, header, rows = _read_table(path)
    _expect(path, header, ("parameter", "value"))
    if meta.get("kind") != "fit":
        raise InputError(f"{path}: not a fit report")
    est = {r[0]: _float(r[1], r[0]) for r in rows}
    return FitReport(est, _float(meta["loglik"], "loglik"), _bool(meta["converged"]),
                     _int(meta["iterations"], "iterations"), meta["method"], meta["copula"],
                     (meta["dist1"], meta["dist2"]))


def write_bootstrap(path, bs: BootstrapSummary, meta: Optional[dict] = None):
    m = {"kind": "bootstrap", "method": bs.method, "seed": bs.seed,
         "replicates": bs.n_replicates, "failed": bs.n_failed, "warning": bs.warning}
    m.update(meta or {})
    rows = [[label] + list(vals) for label, vals in bs.table()]
    _write_table(path, m, ["statistic"] + list(bs.names), rows)


def read_bootstrap(path) -> dict:
    """Return ``{"names", "value", "bootstrap mean", "bootstrap standard deviation", "meta"}``."""
    meta, header, rows = _read_table(path)
    _expect(path, header, ("statistic",))
    if meta.get("kind") != "bootstrap":
        raise InputError(f"{path}: not a bootstrap summary")
    out = {"names": header[1:], "meta": meta}
    for r in rows:
        out[r[0]] = np.array([_float(v, r[0]) for v in r[1:]])
    return out


def write_replicates(path, bs: BootstrapSummary, meta: Optional[dict] = None):
    rows = [[s] + list(bs.estimates[i]) for i, s in enumerate(bs.substreams)]
    _write_table(path, meta, ["substream"] + list(bs.names), rows)


def gof_header():
    cols = ["copula", "rows"]
    for s in STATISTICS:
        cols += [s, f"p_{s}"]
    return cols


def write_gof(path, reports: dict, meta: Optional[dict] = None):
    """One row per copula family, each statistic followed by its p-value."""
    m = {"kind": "gof"}
    m.update(meta or {})
    rows = []
    for cop, rep in reports.items():
        row = [cop, rep.n]
        for s in STATISTICS:
            row += [rep.values[s], rep.pvalues[s]]
        rows.append(row)
    _write_table(path, m, gof_header(), rows)


def read_gof(path) -> dict:
    meta, header, rows = _read_table(path)
    if header != gof_header():
        raise InputError(f"{path}: not a goodness-of-fit table")
    out = {}
    for r in rows:
        vals = {s: _float(r[2 + 2 * i], s) for i, s in enumerate(STATISTICS)}
        pv = {s: _float(r[3 + 2 * i], s) for i, s in enumerate(STATISTICS)}
        out[r[0]] = GofReport(_int(r[1], "rows"), vals, pv, meta.get("jb_method", "monte-carlo"))
    return out


def read_any(path):
    """Load a stored result, dispatching on its ``kind`` metadata."""
    meta, header, _ = _read_table(path)
    kind = meta.get("kind")
    if kind == "fit":
        return "fit", read_fit(path)
    if kind == "bootstrap":
        return "bootstrap", read_bootstrap(path)
    if kind == "gof":
        return "gof", read_gof(path)
    if header[:len(PANEL_HEADER)] == list(PANEL_HEADER):
        return "panel", read_panel(path)[0]
    raise InputError(f"{path}: unrecognised result file")


# ---------------------------------------------------------------------------
# human-readable tables
# ---------------------------------------------------------------------------


def _num(x, digits=4):
    if isinstance(x, str):
        return x
    if x == 0 or not math.isfinite(x):
        return str(x)
    mag = abs(x)
    if mag >= 100:
        return f"{x:.0f}"
    return f"{x:.{digits}g}" if mag < 1e-3 else f"{x:.3f}"


def _grid(header, rows):
    cells = [list(map(str, header))] + [[_num(v) for v in r] for r in rows]
    widths = [max(len(c[i]) for c in cells) for i in range(len(header))]
    lines = ["  ".join(c.rjust(w) if i else c.ljust(w) for i, (c, w) in enumerate(zip(row, widths)))
             for row in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def render_bootstrap(b: dict) -> str:
    labels = ("value", "bootstrap mean", "bootstrap standard deviation")
    rows = [[lab] + list(b[lab]) for lab in labels if lab in b]
    return _grid([""] + list(b["names"]), rows)


def render_fit(rep: FitReport) -> str:
    head = f"{rep.method} fit, {rep.copula} copula, loglik {rep.loglik:.3f}"
    return head + "\n" + _grid(["parameter", "estimate"], list(rep.estimates.items()))


def render_gof(reports: dict) -> str:
    header = ["copula"] + list(STATISTICS)
    rows = []
    for cop, rep in reports.items():
        rows.append([cop] + [rep.values[s] for s in STATISTICS])
        rows.append([""] + [f"({rep.pvalues[s]:.2f})" for s in STATISTICS])
    return _grid(header, rows)


def render_panel(panel: IntervalPanel) -> str:
    n = panel.n.sum(axis=0)
    return (f"panel: {panel.M} intervals over horizon {panel.horizon!r}, "
            f"jumps per margin {int(n[0])}, {int(n[1])}, "
            f"intervals with both margins {int(np.sum((panel.n > 0).all(axis=1)))}\n")
