"""Command-line interface: ``staggered-qtt {estimate,simulate,dominance}``.

Settings resolve as flags, then a ``--config`` file, then defaults. The
config file holds one ``key = value`` pair per line; keys are the long
flag names without dashes (``bootstrap = 499``, ``first-treated = g``);
``#`` starts a comment.

Exit status is 0 on success, 1 on I/O failure and 2 on validation errors,
which are also reported as a JSON object on standard error.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .counterfactual import CONDITIONAL, IPW, METHODS, RCS, UNCONDITIONAL
from .effects import (
    DEFAULT_TAUS,
    aggregate_event_time,
    aggregate_overall,
    cohort_shares,
    kendall_tau_diagnostic,
    qtt_surface,
)
from .errors import InvalidSpec, MissingCovariates, QttError
from .inference import bootstrap_band, sd_pair_bootstrap
from .panel import Schema, load_cross_sections, load_panel
from .propensity import DEFAULT_TRIM
from .simulate import (
    COUNTERFACTUAL,
    QTT,
    SCHEMA_VERSION,
    DgpSpec,
    TableRun,
    mc_metadata_json,
    paper_table,
    run_monte_carlo,
    write_mc_csv,
)

DEFAULTS = {
    "input": None,
    "unit": "unit",
    "time": "period",
    "outcome": "y",
    "first_treated": "first_treated",
    "treatment": None,
    "covariates": "",
    "sep": ",",
    "method": None,
    "anticipation": 0,
    "quantiles": None,
    "bootstrap": 0,
    "alpha": 0.05,
    "seed": 0,
    "aggregate": "none",
    "effect": 0.0,
    "trim": DEFAULT_TRIM,
    "trend": "linear",
    "threads": 1,
    "output": None,
    "format": "csv",
    # simulate
    "dgp": None,
    "n": 1000,
    "T": 4,
    "epsilon_bar": 0.0,
    "rho_bar": 0.0,
    "reps": 2000,
    "paper_table": None,
    "targets": "2:2",
    "estimand": COUNTERFACTUAL,
    # dominance
    "cohort": None,
    "period": None,
}

# settings that never change results and are left out of the metadata
_NON_SEMANTIC = ("threads", "config", "output")


class UsageError(QttError):
    code = "UsageError"


def read_config(path):
    """Parse a flat ``key = value`` file into a dict with underscore keys."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            key = key.lstrip("-").replace("-", "_")
            if key not in DEFAULTS:
                raise UsageError(f"{path}:{lineno}: unknown setting {key!r}")
            out[key] = value
    return out


def _add_common(p):
    p.add_argument("--config", help="flat key = value settings file")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, help="worker threads; 0 means one per CPU")
    p.add_argument("--output", help="output directory (stdout when omitted)")
    p.add_argument("--format", choices=("csv", "json"))
    p.add_argument("--quantiles", help="comma-separated quantile levels")


def _add_data(p):
    p.add_argument("--input", required=False, help="long-format delimited file")
    p.add_argument("--unit")
    p.add_argument("--time")
    p.add_argument("--outcome")
    p.add_argument("--first-treated", dest="first_treated")
    p.add_argument("--treatment", help="per-period binary treatment column instead of --first-treated")
    p.add_argument("--covariates", help="comma-separated covariate columns")
    p.add_argument("--sep", help="field separator; use 'tab' for tab-delimited input")
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--anticipation", type=int)
    p.add_argument("--bootstrap", type=int, help="bootstrap replicates B (0 disables)")
    p.add_argument("--trim", type=float)


def build_parser():
    parser = argparse.ArgumentParser(prog="staggered-qtt", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", help="QTT surface, aggregations, bands and diagnostics")
    _add_common(est)
    _add_data(est)
    est.add_argument("--alpha", type=float)
    est.add_argument("--aggregate", choices=("event", "overall", "none"))

    sim = sub.add_parser("simulate", help="Monte Carlo bias and RMSE")
    _add_common(sim)
    sim.add_argument("--dgp", type=int)
    sim.add_argument("--n", type=int)
    sim.add_argument("--T", type=int)
    sim.add_argument("--epsilon-bar", dest="epsilon_bar", type=float)
    sim.add_argument("--rho-bar", dest="rho_bar", type=float)
    sim.add_argument("--trend", choices=("linear", "quadratic"))
    sim.add_argument("--effect", type=float)
    sim.add_argument("--reps", type=int)
    sim.add_argument("--method", help="comma-separated methods (unconditional, ipw)")
    sim.add_argument("--targets", help="comma-separated r:t pairs, default 2:2")
    sim.add_argument("--estimand", choices=(COUNTERFACTUAL, QTT))
    sim.add_argument("--anticipation", type=int)
    sim.add_argument("--paper-table", dest="paper_table",
                     choices=("1", "2", "3", "4", "C1", "C2", "C3", "C4"))

    dom = sub.add_parser("dominance", help="stochastic dominance statistics with pair bootstrap")
    _add_common(dom)
    _add_data(dom)
    dom.add_argument("--cohort", type=int, required=False)
    dom.add_argument("--period", type=int, required=False)
    return parser


def resolve(args):
    """Merge flags over config file over defaults."""
    cfg = read_config(args.config) if getattr(args, "config", None) else {}
    out = {}
    for key, default in DEFAULTS.items():
        flag = getattr(args, key, None)
        if flag is not None:
            out[key] = flag
        elif key in cfg:
            out[key] = _coerce(key, cfg[key], default)
        else:
            out[key] = default
    out["command"] = args.command
    return out


def _coerce(key, text, default):
    kind = {"anticipation": int, "bootstrap": int, "seed": int, "threads": int, "n": int,
            "T": int, "reps": int, "dgp": int, "cohort": int, "period": int,
            "alpha": float, "effect": float, "trim": float, "epsilon_bar": float,
            "rho_bar": float}.get(key)
    if kind is None:
        return text
    try:
        return kind(text)
    except ValueError:
        raise UsageError(f"setting {key!r} expects {kind.__name__}, got {text!r}") from None


def _taus(cfg, default):
    text = cfg["quantiles"]
    if text is None or text == "":
        return tuple(default)
    try:
        return tuple(float(x) for x in str(text).split(",") if x.strip())
    except ValueError:
        raise UsageError(f"cannot parse quantiles {text!r}") from None


def _schema(cfg):
    covs = tuple(c.strip() for c in str(cfg["covariates"] or "").split(",") if c.strip())
    return Schema(unit=cfg["unit"], time=cfg["time"], outcome=cfg["outcome"],
                  first_treated=None if cfg["treatment"] else cfg["first_treated"],
                  treatment=cfg["treatment"], covariates=covs)


def _sep(cfg):
    return "\t" if cfg["sep"] in ("tab", "\\t", "\t") else cfg["sep"]


def _metadata(cfg, **extra):
    meta = {k: v for k, v in cfg.items() if k not in _NON_SEMANTIC}
    payload = {"schema_version": SCHEMA_VERSION, "config": meta}
    payload.update(extra)
    return payload


def _dumps(obj):
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


class _Sink:
    """Writes named outputs into a directory, or concatenates them on stdout."""

    def __init__(self, output):
        self.dir = Path(output) if output else None
        if self.dir is not None:
            self.dir.mkdir(parents=True, exist_ok=True)

    def write(self, name, text):
        if self.dir is None:
            sys.stdout.write(f"## {name}\n{text}")
        else:
            with open(self.dir / name, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)


def _load(cfg):
    if not cfg["input"]:
        raise UsageError("--input is required")
    schema = _schema(cfg)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        if cfg["method"] == RCS:
            data = load_cross_sections(cfg["input"], schema, _sep(cfg))
        else:
            data = load_panel(cfg["input"], schema, _sep(cfg))
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    if cfg["method"] in (IPW, CONDITIONAL) and not schema.covariates:
        raise MissingCovariates(f"method {cfg['method']!r} needs --covariates")
    return data


def _method_kwargs(cfg):
    return {"trim": cfg["trim"]} if cfg["method"] == IPW else {}


def estimate_command(cfg):
    cfg["method"] = cfg["method"] or UNCONDITIONAL
    data = _load(cfg)
    taus = _taus(cfg, DEFAULT_TAUS)
    kwargs = _method_kwargs(cfg)
    rho = cfg["anticipation"]
    surface = qtt_surface(data, rho, taus, cfg["method"], **kwargs)
    sink = _Sink(cfg["output"])
    fmt = cfg["format"]

    if fmt == "csv":
        sink.write("surface.csv", surface.to_csv())
    else:
        sink.write("surface.json", _dumps(surface.to_dict()))

    if cfg["aggregate"] != "none":
        shares = cohort_shares(data)
        if cfg["aggregate"] == "event":
            agg = aggregate_event_time(surface, shares, last_period=max(data.periods))
        else:
            agg = aggregate_overall(surface, shares)
        if fmt == "csv":
            sink.write("aggregation.csv", agg.to_csv())
        else:
            sink.write("aggregation.json", _dumps(agg.to_dict()))

    if cfg["bootstrap"] > 0:
        if cfg["method"] == RCS:
            raise InvalidSpec("the unit bootstrap needs panel data; use --bootstrap 0 with rcs")
        bands = [bootstrap_band(data, r, t, rho, taus, cfg["method"], cfg["bootstrap"],
                                cfg["alpha"], cfg["seed"], cfg["threads"], **kwargs).to_dict()
                 for r, t in surface.pairs]
        sink.write("bands.json", _dumps({"schema_version": SCHEMA_VERSION, "bands": bands}))

    diagnostics = []
    if cfg["method"] != RCS:
        for r in data.cohorts:
            try:
                diagnostics.append(kendall_tau_diagnostic(data, r, anticipation=rho).to_dict())
            except QttError as exc:
                diagnostics.append({"cohort": r, **exc.to_dict()})
    sink.write("kendall.json", _dumps({"schema_version": SCHEMA_VERSION, "cohorts": diagnostics}))

    models = [cf.propensity.to_dict() for _, cf in sorted(surface.counterfactuals.items())
              if cf.propensity is not None]
    summary = data.summary() if hasattr(data, "summary") else {"cohorts": list(data.cohorts)}
    sink.write("metadata.json", _dumps(_metadata(cfg, data=summary, propensity=models)))
    return 0


def _parse_targets(text):
    try:
        return tuple(tuple(int(v) for v in pair.split(":")) for pair in str(text).split(",") if pair)
    except ValueError:
        raise UsageError(f"cannot parse targets {text!r}; expected r:t pairs") from None


def simulate_command(cfg):
    if cfg["paper_table"]:
        runs = paper_table(cfg["paper_table"], seed=cfg["seed"], effect=cfg["effect"])
    else:
        if cfg["dgp"] is None:
            raise UsageError("give --dgp or --paper-table")
        spec = DgpSpec(cfg["dgp"], cfg["n"], cfg["T"], cfg["epsilon_bar"], cfg["rho_bar"],
                       cfg["trend"], cfg["effect"], cfg["seed"])
        if cfg["method"] is None:
            methods = (UNCONDITIONAL,) if cfg["dgp"] == 1 else (UNCONDITIONAL, IPW)
        else:
            methods = tuple(m.strip() for m in str(cfg["method"]).split(",") if m.strip())
        for m in methods:
            if m not in (UNCONDITIONAL, IPW):
                raise InvalidSpec(f"simulate supports unconditional and ipw, got {m!r}")
        runs = [TableRun(spec, methods, _parse_targets(cfg["targets"]))]
    reports = []
    for run in runs:
        taus = _taus(cfg, run.taus)
        reports.append(run_monte_carlo(run.spec, cfg["reps"], taus, run.methods, run.targets,
                                       cfg["threads"], cfg["anticipation"], cfg["estimand"]))
    sink = _Sink(cfg["output"])
    meta = _metadata(cfg)
    if cfg["format"] == "csv":
        sink.write("mc.csv", write_mc_csv(reports))
        sink.write("mc.json", mc_metadata_json(reports, meta) + "\n")
    else:
        rows = [dict(zip(r.CSV_COLUMNS, line)) for r in reports for line in r.csv_rows()]
        payload = json.loads(mc_metadata_json(reports, meta))
        payload["rows"] = rows
        sink.write("mc.json", _dumps(payload))
    return 0


def dominance_command(cfg):
    cfg["method"] = cfg["method"] or UNCONDITIONAL
    data = _load(cfg)
    if cfg["method"] == RCS:
        raise InvalidSpec("the pair bootstrap needs panel data")
    if cfg["cohort"] is None or cfg["period"] is None:
        raise UsageError("--cohort and --period are required")
    B = cfg["bootstrap"] or 999
    res = sd_pair_bootstrap(data, cfg["cohort"], cfg["period"], cfg["anticipation"],
                            cfg["method"], B, cfg["seed"], cfg["threads"], **_method_kwargs(cfg))
    out = res.to_dict()
    out.update(r=cfg["cohort"], t=cfg["period"], method=cfg["method"])
    sink = _Sink(cfg["output"])
    sink.write("dominance.json", _dumps(out))
    sink.write("metadata.json", _dumps(_metadata(cfg)))
    return 0


COMMANDS = {"estimate": estimate_command, "simulate": simulate_command,
            "dominance": dominance_command}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](resolve(args))
    except QttError as exc:
        sys.stderr.write(json.dumps(exc.to_dict(), sort_keys=True) + "\n")
        return 2
    except OSError as exc:
        sys.stderr.write(json.dumps({"error": "IOError", "message": str(exc)}, sort_keys=True) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
