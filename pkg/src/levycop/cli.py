"""Command-line front end: ``levycop simulate|fit|bootstrap|gof|ingest|report``.

Settings come from a key-value config file (``--config`` or
``$LEVYCOP_CONFIG``), and command-line flags override them.  Every output
file records the effective settings as ``# config.<key>=<value>`` lines,
and passing such a file back as ``--config`` replays the run.

Exit status: 0 success, 2 invalid input or config, 3 numerical failure
or non-convergence, 4 file I/O error.
"""
from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import formats
from .errors import DomainError, InputError, ModelError, NumericError
from .estimate import bootstrap, fit_full_mle, fit_ifm
from .gof import gof_tests, gof_transform
from .ingest import build_monthly_panel, parse_window, preprocess, read_loss_file
from .simulate import simulate_panel

log = logging.getLogger("levycop")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

DANISH_NOTE = (
    "The multivariate Danish fire insurance losses (columns Date, Building, "
    "Contents, Profits; 2167 losses 1980-1990, millions of Kroner adjusted to 1985) ship "
    "as the 'danishmulti' dataset of the R package fitdistrplus (also in "
    "CASdatasets). Export it to CSV and pass it with --input; nothing is "
    "downloaded."
)


class NotConverged(Exception):
    pass


# ---------------------------------------------------------------------------
# config plumbing
# ---------------------------------------------------------------------------

_OPTION_KEYS = ("xtol", "ftol", "max_iter", "nm_max_iter", "simplex_spread", "grid_points",
                "delta_min", "delta_max", "logit_span", "init_delta")


def _effective_config(args) -> dict:
    cfg = formats.load_config(args.config)
    if getattr(args, "model", None):
        cfg.update(formats.load_config(args.model, defaults=False, use_env=False))
    for key, val in vars(args).items():
        if key in ("config", "model", "command", "func", "verbose", "set") or val is None:
            continue
        if isinstance(val, bool):
            if val:
                cfg[key] = "true"
            continue
        cfg[key] = formats.fmt(val) if not isinstance(val, list) else ",".join(map(str, val))
    for item in getattr(args, "set", None) or []:
        k, sep, v = item.partition("=")
        if not sep:
            raise InputError(f"--set expects KEY=VALUE, got {item!r}")
        cfg[k.strip()] = v.strip()
    return cfg


def _meta(command, cfg, extra=None):
    m = {"command": command}
    m.update(extra or {})
    for k in sorted(cfg):
        m[f"config.{k}"] = cfg[k]
    return m


def _need(cfg, key):
    if not cfg.get(key):
        raise InputError(f"missing setting {key!r} (flag --{key.replace('_', '-')} or config key)")
    return cfg[key]


def _pos_int(cfg, key):
    v = formats._int(_need(cfg, key), key)
    if v < 1:
        raise InputError(f"{key} must be >= 1")
    return v


def _pos_float(cfg, key):
    v = formats._float(_need(cfg, key), key)
    if not (np.isfinite(v) and v > 0):
        raise InputError(f"{key} must be a positive number")
    return v


def _families(cfg):
    return (cfg.get("dist1", "exponential").lower(), cfg.get("dist2", "exponential").lower())


def _method(cfg):
    m = cfg.get("method", "ifm")
    if m not in ("ifm", "full-mle"):
        raise InputError(f"method must be 'ifm' or 'full-mle', got {m!r}")
    return m


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_simulate(args):
    cfg = _effective_config(args)
    m = formats.model_from_config(cfg)
    horizon = _pos_float(cfg, "horizon")
    M = _pos_int(cfg, "intervals")
    seed = formats._int(cfg["seed"], "seed")
    if not (cfg.get("out_panel") or cfg.get("out_events") or cfg.get("out_jumps")):
        raise InputError("nothing to write: give --out-panel, --out-events or --out-jumps")
    panel, s1, s2, ev = simulate_panel(m, horizon, M, seed)
    meta = _meta("simulate", cfg)
    if cfg.get("out_panel"):
        formats.write_panel(cfg["out_panel"], panel, meta)
    if cfg.get("out_events"):
        formats.write_events(cfg["out_events"], ev, formats._bool(cfg.get("keep_origins", "")),
                             dict(meta, horizon=horizon))
    if cfg.get("out_jumps"):
        formats.write_jumps(cfg["out_jumps"], s1, s2, meta)
    print(formats.render_panel(panel), end="")
    return EXIT_OK


def _fit(cfg, panel, s1, s2, copula):
    opts = formats.fit_options_from_config(cfg)
    fam = _families(cfg)
    rep = fit_ifm(panel, s1, s2, fam, copula, opts)
    if _method(cfg) == "full-mle":
        rep = fit_full_mle(panel, fam, copula, init=rep, options=opts)
    return rep


def _load_panel_and_jumps(cfg):
    panel, _ = formats.read_panel(_need(cfg, "panel"))
    s1, s2, _ = formats.read_jumps(_need(cfg, "jumps"))
    return panel, s1, s2


def cmd_fit(args):
    cfg = _effective_config(args)
    panel, s1, s2 = _load_panel_and_jumps(cfg)
    rep = _fit(cfg, panel, s1, s2, cfg.get("copula", "clayton"))
    formats.write_fit(_need(cfg, "out"), rep, _meta("fit", cfg))
    print(formats.render_fit(rep), end="")
    if not rep.converged:
        raise NotConverged(f"{rep.method} fit did not converge after {rep.iterations} iterations")
    return EXIT_OK


def cmd_bootstrap(args):
    cfg = _effective_config(args)
    m = formats.model_from_config(cfg)
    bs = bootstrap(m, _pos_float(cfg, "horizon"), _pos_int(cfg, "intervals"),
                   _pos_int(cfg, "replicates"), _method(cfg),
                   seed=formats._int(cfg["seed"], "seed"), jobs=_pos_int(cfg, "jobs"),
                   options=formats.fit_options_from_config(cfg))
    meta = _meta("bootstrap", cfg)
    formats.write_bootstrap(_need(cfg, "out"), bs, meta)
    if cfg.get("out_replicates"):
        formats.write_replicates(cfg["out_replicates"], bs, meta)
    print(formats.render_bootstrap({"names": bs.names, **dict(bs.table())}), end="")
    if bs.warning:
        log.warning("%d of %d replicates failed", bs.n_failed, bs.n_replicates)
    return EXIT_OK


def cmd_gof(args):
    cfg = _effective_config(args)
    panel, _ = formats.read_panel(_need(cfg, "panel"))
    jb = cfg.get("jb_method", "monte-carlo")
    reports = {}
    fits = [f for f in (cfg.get("fits") or "").split(",") if f]
    if fits:
        for path in fits:
            rep = formats.read_fit(path)
            reports[rep.copula] = gof_tests(gof_transform(rep.to_model(), panel).w, jb)
    else:
        s1, s2, _ = formats.read_jumps(_need(cfg, "jumps"))
        for cop in [c for c in cfg.get("copulas", "clayton").split(",") if c]:
            rep = _fit(cfg, panel, s1, s2, cop)
            if not rep.converged:
                raise NotConverged(f"{cop} fit feeding the goodness-of-fit did not converge")
            reports[rep.copula] = gof_tests(gof_transform(rep.to_model(), panel).w, jb)
    level = formats._float(cfg.get("level", "0.01"), "level")
    formats.write_gof(_need(cfg, "out"), reports, _meta("gof", cfg, {"jb_method": jb}))
    print(formats.render_gof(reports), end="")
    for cop, r in reports.items():
        bad = [s for s in r.pvalues if r.rejects(s, level)]
        if bad:
            print(f"{cop}: rejected at level {level}: {', '.join(bad)}")
    return EXIT_OK


def cmd_ingest(args):
    cfg = _effective_config(args)
    path = _need(cfg, "input")
    cols = {}
    for item in [c for c in (cfg.get("columns") or "").split(",") if c]:
        k, sep, v = item.partition("=")
        if not sep:
            raise InputError(f"--columns expects FIELD=HEADER pairs, got {item!r}")
        cols[k.strip()] = v.strip()
    records = read_loss_file(path, cols, cfg.get("date_format") or None)
    window = parse_window(_need(cfg, "window"))
    res = preprocess(records, window, formats._float(cfg["threshold"], "threshold"),
                     outside="drop")
    panel = build_monthly_panel(res, window)
    meta = _meta("ingest", cfg, {"preprocessed": True})
    if cfg.get("out_panel"):
        formats.write_panel(cfg["out_panel"], panel, meta)
    if cfg.get("out_jumps"):
        formats.write_jumps(cfg["out_jumps"], res.s1, res.s2, meta)
    if cfg.get("out_events"):
        formats.write_events(cfg["out_events"], res.events, False, dict(meta, horizon=res.horizon))
    print(f"{len(res.events)} events, {res.s1.size} margin-1 jumps, {res.s2.size} margin-2 jumps")
    print(formats.render_panel(panel), end="")
    return EXIT_OK


def cmd_report(args):
    out = []
    for path in args.files:
        kind, obj = formats.read_any(path)
        out.append(f"== {path} ({kind})\n")
        if kind == "fit":
            out.append(formats.render_fit(obj))
        elif kind == "bootstrap":
            out.append(formats.render_bootstrap(obj))
        elif kind == "gof":
            out.append(formats.render_gof(obj))
        else:
            out.append(formats.render_panel(obj))
    text = "".join(out)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    print(text, end="")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _add_common(p):
    p.add_argument("--config", help="key-value config file (default: $LEVYCOP_CONFIG)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override any config key; repeatable")
    p.add_argument("-v", "--verbose", action="store_true")


def _add_model(p):
    p.add_argument("--model", help="config file holding the model keys")
    p.add_argument("--horizon", type=float)
    p.add_argument("--intervals", type=int)
    p.add_argument("--seed", type=int)


def _add_fit(p):
    p.add_argument("--method", choices=("ifm", "full-mle"))
    p.add_argument("--dist1", choices=("exponential", "weibull"))
    p.add_argument("--dist2", choices=("exponential", "weibull"))
    for k in _OPTION_KEYS:
        p.add_argument("--" + k.replace("_", "-"), dest=k, type=float if k not in
                       ("max_iter", "nm_max_iter", "grid_points") else int)


def build_parser():
    ap = argparse.ArgumentParser(prog="levycop", description=__doc__.split("\n\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="sample a path and write panel / events / jumps")
    _add_common(p)
    _add_model(p)
    p.add_argument("--out-panel")
    p.add_argument("--out-events")
    p.add_argument("--out-jumps")
    p.add_argument("--keep-origins", action="store_true",
                   help="add the origin column to the events file (never read back)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="estimate a model from a panel and jump file")
    _add_common(p)
    p.add_argument("--panel")
    p.add_argument("--jumps")
    p.add_argument("--copula", choices=("clayton", "pure-common-shock"))
    _add_fit(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("bootstrap", help="parametric bootstrap of an estimator")
    _add_common(p)
    _add_model(p)
    p.add_argument("--replicates", type=int)
    p.add_argument("--jobs", type=int)
    _add_fit(p)
    p.add_argument("--out")
    p.add_argument("--out-replicates")
    p.set_defaults(func=cmd_bootstrap)

    p = sub.add_parser("gof", help="goodness-of-fit table for one or more copulas")
    _add_common(p)
    p.add_argument("--panel")
    p.add_argument("--jumps")
    p.add_argument("--fits", help="comma-separated fit reports to test")
    p.add_argument("--copulas", help="comma-separated copulas to fit and test")
    p.add_argument("--jb-method", choices=("monte-carlo", "chi2"))
    p.add_argument("--level", type=float)
    _add_fit(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gof)

    p = sub.add_parser("ingest", help="loss file to monthly panel", description=DANISH_NOTE)
    _add_common(p)
    p.add_argument("--input")
    p.add_argument("--window", help="YYYY-YYYY or YYYY-MM-DD:YYYY-MM-DD")
    p.add_argument("--threshold", type=float)
    p.add_argument("--date-format", help="strptime format; ISO dates by default")
    p.add_argument("--columns", help="e.g. date=Date,building=Building,contents=Contents")
    p.add_argument("--out-panel")
    p.add_argument("--out-jumps")
    p.add_argument("--out-events")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("report", help="render stored results as text tables")
    p.add_argument("files", nargs="+")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (InputError, DomainError, ModelError) as exc:
        print(f"levycop: invalid input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NumericError, NotConverged) as exc:
        print(f"levycop: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"levycop: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
