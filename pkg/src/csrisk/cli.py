"""Command line: run a JSON configuration, or verify the property suites.

    csrisk --config run.json [--output report.json] [--format json|csv]
    csrisk --verify all --seed 42 --count 100

Exit codes: 0 success, 1 failed verification, 2 configuration error, 3 numeric error.
"""

import argparse
import csv
import io
import json
import sys
import time

import numpy as np

from . import __version__
from .allocation import RULES, allocate
from .bsde import risk_measure
from .claims import parse_claim
from .drivers import driver_from_config
from .errors import ConfigurationError, CsRiskError, NumericError
from .lattice import LatticeModel
from .properties import SUITES, run_suite

SCHEMA_VERSION = 1
EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3
ALLOCATING_RULES = ("sub", "sub_bsvie", "aumann_shapley", "penalized_aumann_shapley")
SUM_TOL = 1e-12


def load_config(path):
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigurationError("config must be a JSON object")
    return cfg


def _section(cfg, key, default=None):
    value = cfg.get(key, default)
    if value is None:
        raise ConfigurationError(f"config is missing the {key!r} section")
    return value


def build_model(cfg):
    m = _section(cfg, "model")
    try:
        T, steps = float(m["T"]), int(m["steps"])
    except (KeyError, TypeError, ValueError):
        raise ConfigurationError("model needs numeric 'T' and integer 'steps'") from None
    return LatticeModel.build(T, steps, m.get("layout", "node"))


def _rule_list(cfg):
    rules = cfg.get("rules", [])
    if not isinstance(rules, list):
        raise ConfigurationError("'rules' must be a list")
    out = []
    for r in rules:
        if isinstance(r, str):
            r = {"tag": r}
        if not isinstance(r, dict) or r.get("tag") not in RULES:
            raise ConfigurationError(f"rule {r!r} must name a tag in {RULES}")
        out.append(dict(r))
    return out


def _states(model, values, t):
    return [{"index": j, "value": float(v)} for j, v in enumerate(model.at(values, t))]


def _report_times(cfg, model):
    times = cfg.get("output", {}).get("report_times", [0])
    if not isinstance(times, list) or not times:
        raise ConfigurationError("report_times must be a non-empty list of step indices")
    for t in times:
        if not isinstance(t, int) or isinstance(t, bool):
            raise ConfigurationError(f"report time {t!r} is not an integer step index")
        model.check_step(t)
    return times


def run(cfg, sign_variant=None, kappa=None, deterministic=False):
    """Execute a configuration and return the report dictionary."""
    start = time.perf_counter()
    model = build_model(cfg)
    driver = driver_from_config(_section(cfg, "driver"), model)
    claims = _section(cfg, "claims")
    if "aggregate" not in claims:
        raise ConfigurationError("claims need an 'aggregate' entry")
    Y = parse_claim(claims["aggregate"], model)
    units = [parse_claim(x, model, {"Y": Y}) for x in claims.get("sub_units", [])]
    rules = _rule_list(cfg)
    times = _report_times(cfg, model)

    if any(r["tag"] in ALLOCATING_RULES for r in rules) and units:
        mismatch = float(np.max(np.abs(sum(units) - Y)))
        if mismatch > SUM_TOL:
            raise ConfigurationError(f"sub-units do not sum to the aggregate: max mismatch {mismatch:.3e}")
    if rules and not units:
        raise ConfigurationError("allocation rules need at least one sub-unit")

    results = []
    rho = risk_measure(model, driver, Y)
    for t in times:
        results.append({"rule": "risk", "unit": "aggregate", "t": t,
                        "states": _states(model, rho.Y, t), "diagnostics": {}})
    for r in rules:
        tag = r["tag"]
        params = {k: v for k, v in r.items() if k != "tag"}
        if tag == "sub_bsvie" and sign_variant is not None:
            params["sign_variant"] = sign_variant
        if tag == "cserm" and kappa is not None:
            params["kappa"] = kappa
        total = np.zeros(model.size)
        for i, X in enumerate(units):
            res = allocate(tag, model, driver, X, Y, **params)
            total += res.values
            diag = {k: v for k, v in res.diagnostics.items() if isinstance(v, (int, float, str))}
            for t in times:
                results.append({"rule": tag, "unit": i, "t": t, "states": _states(model, res.values, t),
                                "diagnostics": diag})
        residual = float(np.max(np.abs(total - rho.Y)))
        for t in times:
            results.append({"rule": tag, "unit": "total", "t": t, "states": _states(model, total, t),
                            "diagnostics": {"full_allocation_residual": residual}})

    echo = dict(cfg)
    echo["deterministic"] = bool(deterministic or cfg.get("deterministic", False))
    if sign_variant is not None:
        echo["sign_variant"] = sign_variant
    if kappa is not None:
        echo["kappa"] = kappa
    report = {"schema_version": SCHEMA_VERSION, "engine_version": __version__, "config": echo,
              "results": results}
    if not echo["deterministic"]:
        report["elapsed_seconds"] = time.perf_counter() - start
    return report


def report_to_csv(report):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["rule", "t", "state", "value"])
    for entry in report["results"]:
        label = entry["rule"] if entry["unit"] == "aggregate" else f"{entry['rule']}[{entry['unit']}]"
        for s in entry["states"]:
            writer.writerow([label, entry["t"], s["index"], repr(s["value"])])
    return buf.getvalue()


def dump_report(report, fmt):
    if fmt == "csv":
        return report_to_csv(report)
    return json.dumps(report, sort_keys=True, indent=2) + "\n"


def _write(text, path):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _parse_kappa(value):
    if value in ("1/g1", "2/g1"):
        return value
    try:
        number = float(value)
    except ValueError:
        raise argparse.ArgumentTypeError("kappa must be 1/g1, 2/g1 or a positive number") from None
    if not number > 0:
        raise argparse.ArgumentTypeError("kappa must be positive")
    return number


def build_parser():
    p = argparse.ArgumentParser(prog="csrisk", description=__doc__.splitlines()[0])
    mode = p.add_mutually_exclusive_group(required=True)
    mode.add_argument("--config", metavar="PATH", help="JSON run configuration")
    mode.add_argument("--verify", choices=SUITES, help="run a property suite")
    p.add_argument("--seed", type=int, default=0, help="seed for --verify (default 0)")
    p.add_argument("--count", type=int, default=100, help="instances per check for --verify")
    p.add_argument("--deterministic", action="store_true", help="omit timing so reports are byte-identical")
    p.add_argument("--sign-variant", choices=("paper", "corrected"), default=None,
                   help="sign of the subdifferential BSVIE driver (default corrected)")
    p.add_argument("--kappa", type=_parse_kappa, default=None, help="CSERM coefficient: 1/g1, 2/g1 or a number")
    p.add_argument("--output", metavar="PATH", default=None, help="report file (default: config output.path or stdout)")
    p.add_argument("--format", choices=("json", "csv"), default=None, help="report format for --config")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.verify:
            return _verify(args)
        cfg = load_config(args.config)
        report = run(cfg, args.sign_variant, args.kappa, args.deterministic)
        out = cfg.get("output", {})
        fmt = args.format or out.get("format", "json")
        if fmt not in ("json", "csv"):
            raise ConfigurationError(f"output format must be json or csv, got {fmt!r}")
        _write(dump_report(report, fmt), args.output or out.get("path"))
        return EXIT_OK
    except NumericError as exc:
        print(f"csrisk: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (CsRiskError, ValueError) as exc:
        print(f"csrisk: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def _verify(args):
    if args.count < 1:
        raise ConfigurationError("--count must be at least 1")
    rep = run_suite(args.verify, args.count, args.seed, args.sign_variant or "corrected", args.kappa)
    for line in rep.lines():
        print(line, file=sys.stderr)
    doc = {"schema_version": SCHEMA_VERSION, "engine_version": __version__, "verify": rep.to_dict()}
    if args.output:
        _write(json.dumps(doc, sort_keys=True, indent=2) + "\n", args.output)
    if rep.passed:
        print(f"csrisk verify {args.verify}: all asserted checks passed", file=sys.stderr)
        return EXIT_OK
    worst = max(rep.failures(), key=lambda r: r.worst - r.tolerance)
    print(f"csrisk verify {args.verify}: FAILED, worst row {worst.name} = {worst.worst:.3e} "
          f"(tolerance {worst.tolerance:.0e})", file=sys.stderr)
    return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
