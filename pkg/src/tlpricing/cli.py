"""Command line harness: validate scenarios, run solvers, and grid oracles.

Exit codes: 0 success, 1 scenario validation / compatibility failure,
2 solver error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from .bcd import penalty_escalate
from .dycors import DycorsConfig, dycors_solve
from .errors import TlPricingError
from .gridsearch import oracle_grid
from .io import load_scenario, write_report
from .model import PriceSpace, Scenario, validate_scenario
from .objective import SolveReport, make_report
from .spg import SpgConfig, spg_solve

SOLVERS = ("spg", "bcd", "dycors", "oracle-grid")
MODES = ("time-location", "time-only", "flat")


@dataclass
class RunSpec:
    scenario_path: str
    solver: str = "dycors"
    mode: str = "time-location"
    seed: int = 0
    out_path: str | None = None
    config: dict = field(default_factory=dict)


def _utility_kinds(s: Scenario) -> set[str]:
    return {ut.utility.kind for ut in s.user_types}


def check_compatibility(s: Scenario, solver: str) -> str | None:
    kinds = _utility_kinds(s)
    if solver == "spg" and kinds != {"log"}:
        return (
            f"solver 'spg' needs homogeneous logarithmic utilities, scenario has {sorted(kinds)}; "
            "use 'dycors' for mixed or non-log populations"
        )
    if solver == "bcd" and kinds != {"linear"}:
        return (
            f"solver 'bcd' needs homogeneous linear utilities, scenario has {sorted(kinds)}; "
            "use 'dycors' instead"
        )
    return None


def run(spec: RunSpec) -> SolveReport:
    """Execute one solver run and return the report (callers handle I/O)."""
    s = load_scenario(spec.scenario_path)
    violations = validate_scenario(s)
    if violations:
        raise ValueError("invalid scenario:\n" + "\n".join(str(v) for v in violations))

    if spec.mode == "flat":
        report = make_report(s, s.flat_prices(), solver=spec.solver, mode="flat", seed=spec.seed)
        return report

    problem = check_compatibility(s, spec.solver)
    if problem and spec.solver in ("spg", "bcd"):
        raise ValueError(problem)

    space = PriceSpace(s, spec.mode)
    cfg = dict(spec.config)
    if spec.solver == "spg":
        report = spg_solve(s, config=SpgConfig(**cfg) if cfg else None, space=space, seed=spec.seed)
    elif spec.solver == "bcd":
        report = penalty_escalate(s, space=space, seed=spec.seed, **cfg)
    elif spec.solver == "dycors":
        cfg.setdefault("seed", spec.seed)
        report = dycors_solve(s, config=DycorsConfig(**cfg), space=space)
    elif spec.solver == "oracle-grid":
        step = float(cfg.get("step", 0.01))
        started = time.perf_counter()
        best_p, _ = oracle_grid(s, step, mode=spec.mode)
        report = make_report(
            s,
            best_p,
            solver="oracle-grid",
            mode=spec.mode,
            seed=spec.seed,
            diagnostics={"step": step},
            started=started,
        )
    else:
        raise ValueError(f"unknown solver {spec.solver!r}")
    return report


def _summarize(report: SolveReport) -> str:
    m = report.metrics
    lines = [
        f"solver={report.solver} mode={report.mode} seed={report.seed} "
        f"wall_time={report.wall_time_s:.3f}s",
        f"objective            {report.objective:.6f}   (flat benchmark {report.flat_objective:.6f})",
    ]
    if "bcd_objective" in report.diagnostics:
        lines.append(
            f"guided objective     {report.diagnostics['bcd_objective']:.6f}   "
            "(operator-steered tie resolution)"
        )
    lines += [
        f"total cost           {report.total_cost:.6f}   (flat {report.flat_total_cost:.6f}"
        + (
            f", reduction {report.cost_reduction_pct:.2f}%)"
            if report.cost_reduction_pct is not None
            else ")"
        ),
        f"average discount     {m.average_discount:.4f}",
        f"excess demand        {m.excess_demand:.6f}",
        f"traffic variance     {m.traffic_variance:.6f}",
        f"user payoff          {m.total_user_payoff:.6f}   (gain vs flat {report.payoff_gain_vs_flat:+.6f})",
    ]
    return "\n".join(lines)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="tlpricing", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_val = sub.add_parser("validate", help="check a scenario file against the model invariants")
    p_val.add_argument("--scenario", required=True)

    p_run = sub.add_parser("run", help="optimize prices for a scenario")
    p_run.add_argument("--scenario", required=True)
    p_run.add_argument("--solver", choices=SOLVERS, default="dycors")
    p_run.add_argument("--mode", choices=MODES, default="time-location")
    p_run.add_argument("--seed", type=int, default=0)
    p_run.add_argument("--out", default=None, help="write the JSON report here")
    p_run.add_argument("--config", default=None, help="JSON file with solver options")

    p_or = sub.add_parser("oracle", help="exhaustive grid search (small scenarios)")
    p_or.add_argument("--scenario", required=True)
    p_or.add_argument("--step", type=float, default=0.01)
    p_or.add_argument("--mode", choices=("time-location", "time-only"), default="time-location")
    p_or.add_argument("--out", default=None)

    p_cmp = sub.add_parser("compare", help="run several solvers on one scenario side by side")
    p_cmp.add_argument("--scenario", required=True)
    p_cmp.add_argument("--solvers", default="spg,dycors",
                       help="comma-separated subset of " + ",".join(SOLVERS))
    p_cmp.add_argument("--mode", choices=MODES, default="time-location")
    p_cmp.add_argument("--seed", type=int, default=0)
    p_cmp.add_argument("--config", default=None,
                       help="JSON file mapping solver name to its options")

    args = parser.parse_args(argv)

    if args.command == "validate":
        try:
            s = load_scenario(args.scenario)
        except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        violations = validate_scenario(s)
        if violations:
            for v in violations:
                print(str(v))
            return 1
        print(f"ok: {args.scenario} ({s.T0} slots x {s.L} locations, {s.n_types} user types)")
        return 0

    if args.command == "run":
        config = {}
        if args.config:
            with open(args.config) as fh:
                config = json.load(fh)
        spec = RunSpec(
            scenario_path=args.scenario,
            solver=args.solver,
            mode=args.mode,
            seed=args.seed,
            out_path=args.out,
            config=config,
        )
        try:
            report = run(spec)
        except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        except TlPricingError as exc:
            print(f"solver error: {exc}", file=sys.stderr)
            return 2
        if spec.out_path:
            write_report(report, spec.out_path)
        print(_summarize(report))
        return 0

    if args.command == "compare":
        config = {}
        if args.config:
            with open(args.config) as fh:
                config = json.load(fh)
        solvers = [name.strip() for name in args.solvers.split(",") if name.strip()]
        bad = [name for name in solvers if name not in SOLVERS]
        if bad:
            print(f"error: unknown solver(s) {bad}", file=sys.stderr)
            return 1
        rows = []
        for name in solvers:
            spec = RunSpec(
                scenario_path=args.scenario, solver=name, mode=args.mode,
                seed=args.seed, config=dict(config.get(name, {})),
            )
            try:
                report = run(spec)
            except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
                print(f"error ({name}): {exc}", file=sys.stderr)
                return 1
            except TlPricingError as exc:
                print(f"solver error ({name}): {exc}", file=sys.stderr)
                return 2
            rows.append((name, report))
        print(f"{'solver':12s} {'objective':>14s} {'total cost':>12s} {'reduction':>10s} {'time':>9s}")
        for name, report in rows:
            red = f"{report.cost_reduction_pct:.2f}%" if report.cost_reduction_pct is not None else "n/a"
            print(
                f"{name:12s} {report.objective:14.6f} {report.total_cost:12.6f} "
                f"{red:>10s} {report.wall_time_s:8.3f}s"
            )
        return 0

    if args.command == "oracle":
        try:
            s = load_scenario(args.scenario)
            violations = validate_scenario(s)
            if violations:
                for v in violations:
                    print(str(v))
                return 1
            started = time.perf_counter()
            best_p, best_value = oracle_grid(s, args.step, mode=args.mode)
        except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        except TlPricingError as exc:
            print(f"solver error: {exc}", file=sys.stderr)
            return 2
        print(f"optimum {best_value:.6f} at prices:")
        for row in np.asarray(best_p):
            print("  " + " ".join(f"{v:.4f}" for v in row))
        if args.out:
            report = make_report(
                s, best_p, solver="oracle-grid", mode=args.mode,
                diagnostics={"step": args.step}, started=started,
            )
            write_report(report, args.out)
        return 0

    return 1  # pragma: no cover


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
