"""Command-line interface.

Exit status: 0 on success, 1 on data or validation errors, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .assessment import AssessmentConfig, one_step_only, two_step_assess
from .data import Endpoint, load_csv
from .errors import AnalysisError
from .sim.believe import BelieveParams, believe_csv, believe_json, believe_study
from .sim.montecarlo import DEFAULT_METHODS, Method, TableResult, estimate_cp_many, reproduce_table
from .sim.scenarios import FAMILIES, builtin_scenarios, get_scenario, scenarios_json
from .sim.targets import TABLE_SHIFT

PROG = "mrct"


class UsageError(Exception):
    pass


def _add_assessment_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("assessment")
    g.add_argument("--q1", type=float, default=0.9, help="step-1 threshold")
    g.add_argument("--q2", type=float, default=0.5, help="step-2 threshold")
    g.add_argument("--alpha", type=float, default=0.025, help="one-sided level of the overall test")
    g.add_argument("--alpha-interaction", type=float, default=0.05,
                   help="level of the CATE-similarity (interaction) test")
    g.add_argument("--margin", type=float, default=0.0, help="non-inferiority margin M")
    g.add_argument("--smoothing", type=float, default=0.5,
                   help="pseudo-count per level in the density ratios")
    g.add_argument("--covariance", choices=("ols", "hc3"), default="ols",
                   help="covariance of the interaction Wald test")
    g.add_argument("--design", choices=("onehot", "raw"), default="onehot",
                   help="covariate coding in the outcome and working models")
    g.add_argument("--per-region-cuts", action="store_true", default=False,
                   help="discretize with per-region instead of pooled tertiles")
    g.add_argument("--pseudo-per-region", action="store_true", default=False,
                   help="survival pseudo-observations per arm within region")
    g.add_argument("--density", choices=("per_covariate", "joint"), default="per_covariate",
                   help="density-ratio mode of the step-2 adjustment")


def _add_common(p: argparse.ArgumentParser, formats=("json", "csv", "text"),
                default_format="json") -> None:
    p.add_argument("--format", choices=formats, default=default_format, help="output format")
    p.add_argument("--output", default=None, help="output file (default: standard output)")
    p.add_argument("--config", default=None,
                   help="key=value file of defaults; flags given on the command line win")


def _add_mc(p: argparse.ArgumentParser, seed: int) -> None:
    p.add_argument("--reps", type=int, default=10_000, help="Monte Carlo replicates")
    p.add_argument("--seed", type=int, default=seed, help="master seed")
    p.add_argument("--threads", type=int, default=None,
                   help="worker processes (default: $MRCT_THREADS, else all cores)")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog=PROG, formatter_class=fmt,
                                     description="Regional consistency assessment for "
                                                 "multi-regional clinical trials.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("assess", formatter_class=fmt, help="assess a trial dataset (CSV)")
    p.add_argument("--data", required=True, help="trial CSV file")
    p.add_argument("--region", required=True, help="region of interest")
    p.add_argument("--endpoint", choices=("continuous", "binary", "survival"),
                   default="continuous", help="endpoint type")
    p.add_argument("--tau", type=float, default=None, help="RMST horizon (survival only)")
    p.add_argument("--pi1", type=float, default=0.5, help="randomization probability P(T=1)")
    p.add_argument("--method", choices=("two_step", "one_step"), default="two_step",
                   help="assessment rule")
    _add_assessment_flags(p)
    _add_common(p)

    p = sub.add_parser("simulate", formatter_class=fmt,
                       help="Monte Carlo consistency probabilities for one scenario")
    p.add_argument("--scenario", required=True, help="built-in scenario name")
    p.add_argument("--kappa-ratio", type=float, default=1.0, help="kappa_r / kappa_-r")
    p.add_argument("--methods", default=";".join(m.label for m in DEFAULT_METHODS),
                   help="';'-separated methods, e.g. 'Ko(0.5);TS(0.9,0.5)'")
    _add_mc(p, seed=42)
    _add_assessment_flags(p)
    _add_common(p, formats=("json", "csv"))

    p = sub.add_parser("tables", formatter_class=fmt,
                       help="reproduce a consistency-probability table")
    p.add_argument("--which", choices=sorted(TABLE_SHIFT), required=True, help="table")
    p.add_argument("--families", default=",".join(FAMILIES), help="comma-separated families")
    p.add_argument("--layout", choices=("wide", "long"), default="wide",
                   help="wide: table layout; long: one row per cell")
    _add_mc(p, seed=42)
    _add_assessment_flags(p)
    _add_common(p, formats=("csv",), default_format="csv")

    p = sub.add_parser("believe", formatter_class=fmt, help="run the BELIEVE case study")
    p.add_argument("--model", choices=("printed", "sign-corrected", "both"), default="printed",
                   help="response-model parameterization")
    _add_mc(p, seed=7)
    _add_assessment_flags(p)
    _add_common(p, formats=("json", "csv"))

    p = sub.add_parser("scenarios", formatter_class=fmt, help="list built-in scenarios")
    p.add_argument("--name", default=None, help="show one scenario only")
    _add_common(p, formats=("json", "text"))
    parser.subcommands = sub.choices
    return parser


# --------------------------------------------------------------------------
# config files


def read_config(path: str) -> dict[str, str]:
    out = {}
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _coerce(value: str, like):
    if isinstance(like, bool):
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise UsageError(f"not a boolean: {value!r}")
    if isinstance(like, int):
        return int(value)
    if isinstance(like, float):
        return float(value)
    if isinstance(like, tuple):
        return tuple(type(like[0])(v) for v in value.split(","))
    return value


def _split_config(parser, argv) -> tuple[argparse.Namespace, dict[str, str]]:
    """Parse argv with config-file values as defaults; return the leftover
    (non-flag) keys for scenario or model overrides."""
    args = parser.parse_args(argv)
    if not args.config:
        return args, {}
    sub = parser.subcommands[args.command]
    actions = {a.dest: a for a in sub._actions if a.option_strings}  # noqa: SLF001
    defaults, rest = {}, {}
    for key, value in read_config(args.config).items():
        action = actions.get(key)
        if action is None or key in ("config", "help"):
            rest[key] = value
            continue
        if action.type is not None:
            value = action.type(value)
        elif isinstance(action.default, bool):
            value = _coerce(value, False)
        if action.choices and value not in action.choices:
            raise UsageError(f"config {key}={value!r} not in {list(action.choices)}")
        defaults[key] = value
    sub.set_defaults(**defaults)
    return parser.parse_args(argv), rest


def _override(obj, overrides: dict[str, str], what: str):
    if not overrides:
        return obj
    fields = {f.name for f in dataclasses.fields(obj)}
    changes = {}
    for key, value in overrides.items():
        if key not in fields:
            raise UsageError(f"unknown {what} setting {key!r}")
        changes[key] = _coerce(value, getattr(obj, key))
    return dataclasses.replace(obj, **changes)


# --------------------------------------------------------------------------
# commands


def _config(args, region: str) -> AssessmentConfig:
    return AssessmentConfig(
        region=region, q1=args.q1, q2=args.q2, alpha=args.alpha,
        alpha_interaction=args.alpha_interaction, margin=args.margin,
        smoothing=args.smoothing, covariance=args.covariance, design_mode=args.design,
        pooled_cuts=not args.per_region_cuts, pseudo_per_region=args.pseudo_per_region,
        density_mode=args.density,
    )


def _cmd_assess(args, extra) -> str:
    if extra:
        raise UsageError(f"unknown config keys for assess: {sorted(extra)}")
    if args.endpoint == "survival":
        if args.tau is None:
            raise UsageError("--tau is required for survival endpoints")
        endpoint = Endpoint.survival(args.tau)
    else:
        if args.tau is not None:
            raise UsageError("--tau applies to survival endpoints only")
        endpoint = Endpoint(args.endpoint)
    data = load_csv(args.data, endpoint, pi1=args.pi1)
    cfg = _config(args, args.region)
    report = (two_step_assess if args.method == "two_step" else one_step_only)(data, cfg)
    if args.format == "json":
        return report.to_json()
    return report.to_csv() if args.format == "csv" else report.to_text()


def _results_json(results) -> str:
    return json.dumps([r.to_dict() for r in results], indent=2, sort_keys=True) + "\n"


def _results_csv(results) -> str:
    tab = TableResult("", tuple(results), {})
    return tab.to_long_csv()


def _cmd_simulate(args, extra) -> str:
    spec = _override(get_scenario(args.scenario), extra, "scenario")
    spec = spec.with_kappa_ratio(args.kappa_ratio)
    methods = [Method.parse(m) for m in args.methods.split(";") if m.strip()]
    results = estimate_cp_many(spec, methods, _config(args, "r"), args.reps, args.seed,
                               args.threads)
    return _results_json(results) if args.format == "json" else _results_csv(results)


def _cmd_tables(args, extra) -> str:
    families = [f.strip() for f in args.families.split(",") if f.strip()]
    unknown = set(families) - set(FAMILIES)
    if unknown:
        raise UsageError(f"unknown families {sorted(unknown)}; choose from {list(FAMILIES)}")
    transform = (lambda s: _override(s, extra, "scenario")) if extra else None
    if extra:
        _override(get_scenario(f"{families[0]}-noshift"), extra, "scenario")
    tab = reproduce_table(args.which, args.reps, args.seed, args.threads, families,
                          config=_config(args, "r"), spec_transform=transform)
    return tab.to_csv() if args.layout == "wide" else tab.to_long_csv()


def _cmd_believe(args, extra) -> str:
    models = {"printed": BelieveParams.printed, "sign-corrected": BelieveParams.sign_corrected}
    names = list(models) if args.model == "both" else [args.model]
    studies = []
    for name in names:
        params = _override(models[name](), extra, "BELIEVE model")
        studies.append(believe_study(args.reps, args.seed, params,
                                     config=_config(args, "Asian"), workers=args.threads,
                                     label=name))
    return believe_json(studies) if args.format == "json" else believe_csv(studies)


def _cmd_scenarios(args, extra) -> str:
    if extra:
        raise UsageError(f"unknown config keys for scenarios: {sorted(extra)}")
    cat = builtin_scenarios()
    if args.name is not None:
        spec = get_scenario(args.name)
        cat = {spec.name: spec}
    if args.format == "json":
        if args.name is None:
            return scenarios_json()
        return json.dumps({k: v.to_dict() for k, v in cat.items()}, indent=2,
                          sort_keys=True) + "\n"
    lines = []
    for name, s in cat.items():
        mu = lambda v: "(" + ", ".join(f"{x:.4f}" for x in v) + ")"  # noqa: E731
        lines.append(f"{name}: mu_r={mu(s.mu_r)} mu_-r={mu(s.mu_minus_r)} "
                     f"moments={s.moments}")
    return "\n".join(lines) + "\n"


COMMANDS = {
    "assess": _cmd_assess, "simulate": _cmd_simulate, "tables": _cmd_tables,
    "believe": _cmd_believe, "scenarios": _cmd_scenarios,
}


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args, extra = _split_config(parser, argv)
        if getattr(args, "reps", 1) < 1:
            raise UsageError("--reps must be at least 1")
        if getattr(args, "threads", None) is not None and args.threads < 1:
            raise UsageError("--threads must be at least 1")
        text = COMMANDS[args.command](args, extra)
    except SystemExit as exc:  # argparse usage errors
        return int(exc.code or 0)
    except (UsageError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"{PROG}: usage error: {msg}", file=sys.stderr)
        return 2
    except (AnalysisError, ValueError, OSError) as exc:
        print(f"{PROG}: error: {exc}", file=sys.stderr)
        return 1
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
