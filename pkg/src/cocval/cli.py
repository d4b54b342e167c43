"""Command-line entry point.

Exit codes: 0 success, 2 invalid input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
import time
import warnings
from pathlib import Path
from typing import Optional, Sequence

from . import __version__, analytic
from .engine import (
    acceptability_residual,
    stagewise_acceptability_residual,
    value_liability,
    value_stagewise,
)
from .errors import InvalidInputError, NumericalError
from .io import (
    RunConfig,
    Report,
    monte_carlo_acceptability,
    monte_carlo_acceptability_stagewise,
    normal_liability,
    parse_input,
)
from .margins import (
    PRACTITIONER_VARIANTS,
    closed_form_bound,
    margin_report,
    recursive_bound,
    stagewise_margin_report,
)
from .scenario_tree import ScenarioTree, validate

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3


def _metadata(config: RunConfig, **extra) -> dict:
    echo = {
        k: v
        for k, v in vars(config).items()
        if k not in ("output", "format") and v is not None
    }
    return {"tool": "cocval", "version": __version__, "config": echo, **extra}


def _max_abs(values) -> float:
    return max((abs(v) for v in values), default=0.0)


def _load(config: RunConfig):
    model, curve, config = parse_input(config.input, config)
    if isinstance(model, ScenarioTree):
        return model, curve, config, None
    return model, curve, config, normal_liability(model, config.n)


def cmd_value(config: RunConfig) -> Report:
    model, curve, config, liability = _load(config)
    spec, rule = config.risk(), config.rule()
    cols = ["node", "t", "V", "C", "D", "gamma", "rho", "residual"]
    if liability is None:
        result = value_liability(model, curve, spec, rule)
        resid = acceptability_residual(model, curve, spec, rule, result)
        rows = [
            dict(node=nid, t=model.nodes[nid].time, V=nv.value, C=nv.capital, D=nv.dividend,
                 gamma=nv.gamma, rho=nv.rho, residual=resid[nid])
            for nid, nv in result.nodes.items()
        ]
        root = result.root
        summary = {"V_0": root.value, "C_0": root.capital, "D_0": root.dividend,
                   "gamma_0": root.gamma, "max_residual": _max_abs(resid.values())}
    else:
        start = time.perf_counter()
        result = value_stagewise(liability, curve, spec, rule)
        elapsed = time.perf_counter() - start
        resid = stagewise_acceptability_residual(liability, curve, rule, result)
        rows = [
            dict(node=f"year {t}", t=t, V=nv.value, C=nv.capital, D=nv.dividend,
                 gamma=nv.gamma, rho=nv.rho, residual=resid[t])
            for t, nv in enumerate(result.nodes)
        ]
        v1, v0 = analytic.value(model)
        summary = {"V_0": result.root_value, "V_1": result.nodes[1].value,
                   "analytic V_0": v0, "analytic V_1": v1,
                   "V_0 - analytic": result.root_value - v0, "n": config.n,
                   "max_residual": _max_abs(resid.values()), "seconds": elapsed}
    return Report("value", summary, rows, cols,
                  _metadata(config, max_acceptability_residual=summary["max_residual"]))


def _margin_rows(rep, times, variant_other):
    other = rep.practitioner(variant_other, 0.0) if rep.plain_risk_sum is not None else None
    rows = []
    for k in rep.best_estimate:
        rows.append(dict(
            node=k, t=times(k), V=rep.value[k], BE=rep.best_estimate[k],
            DP=rep.dividend_portfolio[k], RM_bar=rep.expected_risk_margin[k],
            RM_tilde=None if rep.adjusted_margin is None else rep.adjusted_margin[k],
            practitioner=None if rep.practitioner_margin is None else rep.practitioner_margin[k],
            **{variant_other: None if other is None else other[k]},
            decomposition=rep.best_estimate[k] + rep.dividend_portfolio[k] - rep.value[k],
        ))
    return rows


def cmd_margin(config: RunConfig) -> Report:
    model, curve, config, liability = _load(config)
    spec, rule = config.risk(), config.rule()
    other = next(v for v in PRACTITIONER_VARIANTS if v != config.variant)
    if liability is None:
        result = value_liability(model, curve, spec, rule)
        rep = margin_report(model, curve, spec, rule, result, config.epsilon, config.variant)
        resid = acceptability_residual(model, curve, spec, rule, result)
        rows = _margin_rows(rep, lambda k: model.nodes[k].time, other)
    else:
        result = value_stagewise(liability, curve, spec, rule)
        rep = stagewise_margin_report(liability, curve, spec, rule, result,
                                      config.epsilon, config.variant)
        resid = stagewise_acceptability_residual(liability, curve, rule, result)
        rows = _margin_rows(rep, lambda k: k, other)
    summary = {f"{k}_0": v for k, v in rep.at_root().items()}
    if rep.plain_risk_sum is not None:
        summary[f"{other}_0"] = rep.practitioner(other, 0.0)[rep.root]
        summary["adjusted bound applies"] = rep.corollary_applies
    summary["max_decomposition_error"] = rep.max_decomposition_error
    summary["max_residual"] = _max_abs(resid.values())
    cols = ["node", "t", "V", "BE", "DP", "RM_bar", "RM_tilde", "practitioner", other,
            "decomposition"]
    return Report("margin", summary, rows, cols, _metadata(
        config, practitioner_variant=config.variant,
        max_decomposition_error=rep.max_decomposition_error,
        max_acceptability_residual=summary["max_residual"]))


def cmd_bounds(config: RunConfig) -> Report:
    model, curve, config, liability = _load(config)
    spec, rule = config.risk(), config.rule()
    notes = []
    if liability is None:
        result = value_liability(model, curve, spec, rule)
        resid = acceptability_residual(model, curve, spec, rule, result)
        recursive = recursive_bound(model, curve, result)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            closed = closed_form_bound(model, curve, result)
        notes = [str(w.message) for w in caught]
        rows = [dict(node=k, t=model.nodes[k].time, V=result.nodes[k].value,
                     recursive=recursive[k], closed_form=closed[k])
                for k in result.nodes]
        root = model.root
    else:
        result = value_stagewise(liability, curve, spec, rule)
        resid = stagewise_acceptability_residual(liability, curve, rule, result)
        rep = stagewise_margin_report(liability, curve, spec, rule, result)
        recursive, closed = rep.recursive_bound, rep.closed_form_bound
        rows = [dict(node=f"year {t}", t=t, V=rep.value[t], recursive=recursive[t],
                     closed_form=closed[t]) for t in rep.value]
        root = 0
    summary = {"V_0": result.root_value, "recursive_0": recursive[root], "closed_form_0": closed[root]}
    if liability is not None:
        summary["analytic V_0^u"] = analytic.upper_bound(model)
    summary["max_residual"] = _max_abs(resid.values())
    if notes:
        summary["note"] = "; ".join(notes)
    return Report("bounds", summary, rows, ["node", "t", "V", "recursive", "closed_form"],
                  _metadata(config, max_acceptability_residual=summary["max_residual"]))


def cmd_example(args) -> Report:
    spec = analytic.NormalLiabilitySpec(tuple(args.mu), tuple(args.sigma), args.alpha, args.eta)
    v1, v0 = analytic.value(spec)
    prop = analytic.check_proposition(spec)
    q = analytic.std_normal_quantile(spec.alpha)
    summary = {
        "V_1": v1, "V_0": v0, "V_0^u": analytic.upper_bound(spec),
        "q_alpha": q, "phi(q_alpha)": analytic.std_normal_pdf(q),
        "f(alpha)": analytic.f(spec.alpha), "g(alpha)": analytic.g(spec.alpha),
        "merged V_0": prop.v0[1], "merged V_0^u": prop.v0_upper[1],
        "bounds strict (a)": prop.part_a, "reversal": prop.reversal, "eta*": prop.threshold,
    }
    if prop.note:
        summary["note"] = prop.note
    meta = {"tool": "cocval", "version": __version__,
            "config": {"mu": list(spec.mu), "sigma": list(spec.sigma), "alpha": spec.alpha,
                       "eta": spec.eta}}
    return Report("example", summary, metadata=meta)


def cmd_oracle(config: RunConfig, node=None) -> Report:
    model, curve, config, liability = _load(config)
    spec, rule = config.risk(), config.rule()
    if liability is None:
        result = value_liability(model, curve, spec, rule)
        if node is not None and node not in model.nodes:
            # ids from the command line arrive as strings
            node = next((k for k in model.nodes if str(k) == node), node)
        est = monte_carlo_acceptability(model, curve, result, config.paths, config.seed, node)
    else:
        result = value_stagewise(liability, curve, spec, rule)
        est = monte_carlo_acceptability_stagewise(liability, curve, result, config.paths,
                                                  config.seed, int(node or 0))
    within = abs(est.estimate) <= 3 * est.std_error
    summary = {"node": est.node, "estimate": est.estimate, "std_error": est.std_error,
               "paths": est.paths, "seed": est.seed, "within 3 SE": within}
    return Report("oracle", summary, metadata=_metadata(config))


def cmd_validate(config: RunConfig) -> tuple[Report, int]:
    model, curve, config, liability = _load(config)
    if liability is not None:
        return Report("validate", {"kind": "normal_example", "valid": True}), EXIT_OK
    problems = validate(model)
    if curve is not None and not curve.covers(model.horizon + 1):
        problems.append(f"curve must cover maturities 1..{model.horizon + 1}")
    if curve is None:
        problems += [
            f"node {nid!r}: no one-year rate and no curve"
            for nid in model.internal_nodes_backward()
            if model.nodes[nid].short_rate is None
        ]
    summary = {"nodes": len(model.nodes), "valid": not problems}
    rows = [{"problem": p} for p in problems]
    return Report("validate", summary, rows, ["problem"]), EXIT_INVALID if problems else EXIT_OK


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("input", help="JSON input file")
    p.add_argument("--alpha", type=float, help="VaR level, overrides the file")
    p.add_argument("--eta", type=float, help="cost-of-capital rate, overrides the file")
    p.add_argument("--flat-rate", type=float, dest="flat_rate",
                   help="flat risk-free rate, overrides the file's curve")
    p.add_argument("--n", type=int, default=None, help="atoms per year for normal examples")
    p.add_argument("--output", help="write the JSON report here")
    p.add_argument("--format", choices=("table", "json"), default="table")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cocval", description="Cost-of-capital valuation of insurance liabilities."
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, text in (("value", "value every node"),
                       ("bounds", "recursive and closed-form upper bounds"),
                       ("validate", "check tree invariants")):
        _common(sub.add_parser(name, help=text))

    p = sub.add_parser("margin", help="best estimate, dividend portfolio and risk margins")
    _common(p)
    p.add_argument("--epsilon", type=float, default=0.0, help="practitioner margin loading")
    p.add_argument("--variant", choices=PRACTITIONER_VARIANTS, default="paper",
                   help="scaling of the practitioner margin")

    p = sub.add_parser("oracle", help="Monte Carlo check of the acceptability condition")
    _common(p)
    p.add_argument("--paths", type=int, default=100_000)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--node", help="node id (default: root); a year for normal examples")

    p = sub.add_parser("example", help="closed-form two-year normal example")
    p.add_argument("--mu", type=float, nargs=2, default=[100.0, 100.0])
    p.add_argument("--sigma", type=float, nargs=2, default=[50.0, 50.0])
    p.add_argument("--alpha", type=float, default=0.995)
    p.add_argument("--eta", type=float, default=0.06)
    p.add_argument("--output", help="write the JSON report here")
    p.add_argument("--format", choices=("table", "json"), default="table")
    return parser


def _config(args) -> RunConfig:
    config = RunConfig(input=args.input, command=args.command, alpha=args.alpha, eta=args.eta,
                       output=args.output, format=args.format)
    if args.flat_rate is not None:
        config.curve = {"flat": args.flat_rate}
    if args.n is not None:
        config.n = args.n
    for name in ("paths", "seed", "epsilon", "variant"):
        if hasattr(args, name):
            setattr(config, name, getattr(args, name))
    return config


def run(args) -> tuple[Report, int]:
    if args.command == "example":
        return cmd_example(args), EXIT_OK
    config = _config(args)
    config.check()
    if args.command == "validate":
        return cmd_validate(config)
    if args.command == "oracle":
        return cmd_oracle(config, args.node), EXIT_OK
    handler = {"value": cmd_value, "margin": cmd_margin, "bounds": cmd_bounds}[args.command]
    return handler(config), EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        report, code = run(args)
    except InvalidInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    if args.output:
        Path(args.output).write_text(report.dumps() + "\n")
    print(report.dumps() if args.format == "json" else report.table())
    return code


if __name__ == "__main__":
    sys.exit(main())
