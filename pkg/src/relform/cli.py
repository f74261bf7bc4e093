"""Batch command-line front end: run, compare, and validate scenarios.

Exit codes: 0 success, 2 configuration error, 3 runtime failure. All
output files are plain CSV with shortest round-trip float formatting and
are bit-identical across repeated invocations with identical inputs; the
resolved scenario is echoed next to them for provenance.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, NoValidWeights, RelformError
from .graph import stress_matrix_of_weights
from .scenario import emit_document, load_scenario
from .sim import PreparedScenario, prepare, run_monte_carlo, steady_slice


def _fmt(value) -> str:
    return repr(float(value))


def _trace_header(prep: PreparedScenario) -> list[str]:
    cols = ["run", "k", "estimator", "eps", "cov_trace", "affine_residual", "leader_residual"]
    for i, j in prep.edges.edges:
        for c in range(prep.dim):
            cols.append(f"xhat_{i}_{j}_{c}")
    return cols


def _write_trace_file(path: Path, prep: PreparedScenario, traces) -> None:
    with open(path, "w", newline="\n") as out:
        out.write(",".join(_trace_header(prep)) + "\n")
        for run_index, trace in enumerate(traces):
            for k in range(trace.steps):
                row = [
                    str(run_index),
                    str(k),
                    trace.estimator,
                    _fmt(trace.eps[k]),
                    _fmt(trace.cov_trace[k]),
                    _fmt(trace.affine_residual[k]),
                    _fmt(trace.leader_residual[k]),
                ]
                row.extend(_fmt(v) for v in trace.estimates[k])
                out.write(",".join(row) + "\n")


def _aggregate(traces, horizon):
    """Per-step mean/std of eps over completed runs, plus the shared trace curve."""
    done = [t for t in traces if not t.failed]
    eps = np.vstack([t.eps for t in done])
    mean = eps.mean(axis=0)
    std = eps.std(axis=0, ddof=1) if eps.shape[0] > 1 else np.zeros(horizon)
    return mean, std, done[0].cov_trace


def _write_summary(path: Path, estimator: str, mean, std, cov) -> None:
    with open(path, "w", newline="\n") as out:
        out.write("k,estimator,eps_mean,eps_std,cov_trace\n")
        for k in range(mean.shape[0]):
            out.write(
                f"{k},{estimator},{_fmt(mean[k])},{_fmt(std[k])},{_fmt(cov[k])}\n"
            )


def _echo_scenario(out_dir: Path, document: dict) -> None:
    (out_dir / "scenario.resolved.toml").write_text(emit_document(document), newline="\n")


def _run_all(prep: PreparedScenario):
    """All runs of one estimator as traces (single runs bypass the MC gate)."""
    from .sim import run_once

    scenario = prep.scenario
    if scenario.runs == 1:
        return [run_once(prep, scenario.seed)]
    summary = run_monte_carlo(prep, keep_traces=True)
    return summary.traces


def _report_failures(traces) -> int:
    for run_index, trace in enumerate(traces):
        if trace.failed:
            print(
                f"error: run {run_index} (seed {trace.seed}) failed at step "
                f"{trace.fail_step}: {trace.fail_message}",
                file=sys.stderr,
            )
            return 3
    return 0


def cmd_run(args) -> int:
    scenario, document, warnings = load_scenario(args.scenario, args.set or [])
    scenario, document = _apply_flag_overrides(scenario, document, args)
    for line in warnings:
        print(f"warning: {line}", file=sys.stderr)
    prep = prepare(scenario)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    _echo_scenario(out_dir, document)
    traces = _run_all(prep)
    _write_trace_file(out_dir / f"trace_{scenario.estimator}.csv", prep, traces)
    if any(not t.failed for t in traces):
        mean, std, cov = _aggregate(traces, scenario.horizon)
        _write_summary(out_dir / "summary.csv", scenario.estimator, mean, std, cov)
    return _report_failures(traces)


def cmd_compare(args) -> int:
    estimators = [e.strip() for e in args.estimators.split(",") if e.strip()]
    if len(estimators) < 2:
        raise ConfigError("compare needs at least two estimators (--estimators a,b,...)")
    scenario, document, warnings = load_scenario(args.scenario, args.set or [])
    scenario, document = _apply_flag_overrides(scenario, document, args)
    if scenario.runs < 2:
        raise ConfigError("compare needs sim.runs >= 2 for the Monte Carlo spread")
    for line in warnings:
        print(f"warning: {line}", file=sys.stderr)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    _echo_scenario(out_dir, document)

    window = steady_slice(scenario.horizon)
    columns = []
    steady_rows = []
    exit_code = 0
    for index, estimator in enumerate(estimators):
        offset = 0 if scenario.pairing == "paired" else index * scenario.runs
        variant = replace(scenario, estimator=estimator, seed=scenario.seed + offset)
        prep = prepare(variant)
        traces = _run_all(prep)
        _write_trace_file(out_dir / f"trace_{estimator}.csv", prep, traces)
        code = _report_failures(traces)
        exit_code = exit_code or code
        if all(t.failed for t in traces):
            continue
        mean, std, cov = _aggregate(traces, scenario.horizon)
        columns.append((estimator, mean, std, cov))
        completed = [t for t in traces if not t.failed]
        steady_eps = [float(t.eps[window].mean()) for t in completed]
        steady_rows.append(
            (
                estimator,
                float(np.mean(steady_eps)),
                float(cov[window].mean()),
                len(completed),
                len(traces) - len(completed),
            )
        )

    with open(out_dir / "summary.csv", "w", newline="\n") as out:
        header = ["k"]
        for name, *_ in columns:
            header.extend([f"eps_mean_{name}", f"eps_std_{name}", f"cov_trace_{name}"])
        out.write(",".join(header) + "\n")
        for k in range(scenario.horizon):
            row = [str(k)]
            for _, mean, std, cov in columns:
                row.extend([_fmt(mean[k]), _fmt(std[k]), _fmt(cov[k])])
            out.write(",".join(row) + "\n")

    with open(out_dir / "steady_state.csv", "w", newline="\n") as out:
        out.write("estimator,steady_eps_mean,steady_trace_mean,runs_completed,runs_failed\n")
        for name, eps_mean, trace_mean, done, failed in steady_rows:
            out.write(f"{name},{_fmt(eps_mean)},{_fmt(trace_mean)},{done},{failed}\n")
    return exit_code


def cmd_validate(args) -> int:
    scenario, document, warnings = load_scenario(args.scenario, args.set or [])
    scenario, document = _apply_flag_overrides(scenario, document, args)
    prep = prepare(scenario)
    for line in warnings:
        print(f"warning: {line}")
    stress = stress_matrix_of_weights(prep.weights, prep.num_nodes)
    eigvals = np.linalg.eigvalsh(stress)
    print(f"nodes: {prep.num_nodes}")
    print(f"links: {len(scenario.graph.links)}")
    print(f"directed edges: {prep.edge_count}")
    print(f"dimension: {prep.dim}")
    print(f"leaders: {list(scenario.graph.leader_set)}")
    print(f"estimator: {scenario.estimator}")
    print(f"measurement repeat: {scenario.repeat}")
    print(f"dt: {scenario.dt}  horizon: {scenario.horizon}  runs: {scenario.runs}")
    print(f"weight residual: {prep.weight_residual:.3e}")
    print(f"stress eigenvalues: min {eigvals[0]:.3e}, max {eigvals[-1]:.3e}")
    rate = scenario.dt * float(eigvals[-1])
    if rate > 1.0:
        print(f"warning: dt * max stress eigenvalue = {rate:.2f}; explicit stepping may be unstable")
    return 0


def _apply_flag_overrides(scenario, document, args):
    if getattr(args, "runs", None) is not None:
        scenario = replace(scenario, runs=args.runs)
        document = {**document, "sim": {**document["sim"], "runs": args.runs}}
    if getattr(args, "seed", None) is not None:
        scenario = replace(scenario, seed=args.seed)
        document = {**document, "sim": {**document["sim"], "seed": args.seed}}
    return scenario, document


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="relform",
        description="Relative formation control simulator: run, compare, validate scenarios.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_out):
        p.add_argument("--scenario", required=True, help="scenario TOML file")
        if needs_out:
            p.add_argument("--out", required=True, help="output directory")
        p.add_argument(
            "--set",
            action="append",
            metavar="KEY=VALUE",
            help="override a scenario key, e.g. noise.sigma_v=0.1 (repeatable)",
        )
        p.add_argument("--runs", type=int, help="override sim.runs")
        p.add_argument("--seed", type=int, help="override sim.seed")

    run_p = sub.add_parser("run", help="execute one estimator and write trace + summary files")
    common(run_p, needs_out=True)
    run_p.set_defaults(func=cmd_run)

    cmp_p = sub.add_parser("compare", help="paired Monte Carlo across estimators")
    common(cmp_p, needs_out=True)
    cmp_p.add_argument(
        "--estimators", required=True, help="comma-separated estimator list (>= 2 entries)"
    )
    cmp_p.set_defaults(func=cmd_compare)

    val_p = sub.add_parser("validate", help="check a scenario and print its digest")
    common(val_p, needs_out=False)
    val_p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, NoValidWeights) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RelformError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
