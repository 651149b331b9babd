"""Command-line front end.

Subcommands: ``synth`` (offline table synthesis with persistence),
``simulate`` (closed-loop runs with CSV traces), ``sweep`` (sampling-cost
sweeps with periodic baselines) and ``verify`` (certificate checks on
persisted tables).

Exit codes: 0 success, 2 configuration error, 3 numeric/synthesis error,
4 certificate failure, 5 scheduling violation.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .errors import (
    CertificateError,
    ConfigurationError,
    SchedulingError,
    SelfTrigError,
    SynthesisError,
)
from .scenario import load_scenario
from .scheduler import verify_conflict_free
from .simulator import (
    MODE_PERIODIC,
    average_sampling_interval,
    empiric_cost,
    run_periodic,
    run_self_triggered,
    sweep_alpha,
    write_sweep_csv,
    write_trace_csv,
    write_txlog_csv,
)
from .synthesis import (
    build_gain_table,
    deserialize_gain_table,
    pstar_is_gamma,
    select_pstar,
    serialize_gain_table,
    stability_certificate,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_CERTIFICATE = 4
EXIT_SCHEDULING = 5

FULL_SCALE_ENV = "SELFTRIG_FULL_SCALE"
FULL_SCALE_RUNS = 100
FULL_SCALE_HORIZON = 10_000


def _table_path(out_dir: Path, loop_id: str) -> Path:
    return out_dir / f"{loop_id}.gains.json"


def _check_network_admissible(scn) -> None:
    s = len(scn.loops)
    if s >= 2:
        missing = [i for i in range(1, s + 1) if i not in scn.I0]
        if missing or s > scn.p:
            raise ConfigurationError(
                f"inadmissible network: {s} loops sharing one channel need waits "
                f"{{1..{s}}} in I0 and s <= p (I0={list(scn.I0)}, p={scn.p})"
            )


def _print_table(gt, cert) -> None:
    print(
        f"loop {gt.loop_id}: n={gt.n} m={gt.m} alpha={gt.alpha:g} "
        f"p={gt.p} gamma={gt.gamma} epsilon={cert.epsilon:.5f}"
    )
    header = f"  {'i':>3}  {'L(i)':>24}  {'P(i)':>24}"
    print(header)
    for i in gt.I0:
        P, L = gt.entries[i][0], gt.entries[i][1]
        l_str = " ".join(f"{v:.2f}" for v in L.ravel())
        p_str = " ".join(f"{v:.2f}" for v in P.ravel())
        print(f"  {i:>3}  {l_str:>24}  {p_str:>24}")


def cmd_synth(args) -> int:
    scn, _ = load_scenario(args.scenario)
    _check_network_admissible(scn)
    tables = {}
    for spec in scn.loops:
        try:
            tables[spec.name] = build_gain_table(
                spec.system, spec.weights, scn.I0, scn.p, loop_id=spec.name
            )
        except SynthesisError as exc:
            raise SynthesisError(f"loop {spec.name!r}: {exc}") from exc
    systems = [spec.system for spec in scn.loops]
    pstar = select_pstar(systems, scn.I0)
    if scn.p != pstar:
        raise SynthesisError(
            f"scenario period p={scn.p} differs from the admissible terminal "
            f"period {pstar}; the stability construction requires p == {pstar}"
        )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for spec in scn.loops:
        gt = tables[spec.name]
        cert = stability_certificate(gt, spec.system, pstar)
        path = _table_path(out_dir, spec.name)
        path.write_text(serialize_gain_table(gt, cert))
        _print_table(gt, cert)
        print(f"  written: {path}")
    return EXIT_OK


def _load_tables(tables_dir: Path) -> dict:
    paths = sorted(tables_dir.glob("*.gains.json"))
    if not paths:
        raise ConfigurationError(f"no *.gains.json files in {tables_dir}")
    tables = {}
    for path in paths:
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigurationError(f"cannot read table {path}: {exc}") from exc
        gt, eps, pstar = deserialize_gain_table(text)
        tables[gt.loop_id] = (gt, eps, pstar)
    return tables


def _write_gnuplot(out_dir: Path, loops) -> None:
    lines = [
        "set datafile separator ','",
        "set key autotitle columnhead",
        "set xlabel 'k'",
    ]
    for spec in loops:
        n, m = spec.system.n, spec.system.m
        sampled_col = 1 + n + m + 1  # k, x_1..x_n, u_1..u_m, sampled
        curves = [
            f"'{spec.name}.trace.csv' using 1:{1 + j} with steps"
            for j in range(1, n + 1)
        ]
        curves.append(
            f"'{spec.name}.trace.csv' using 1:(${sampled_col}==1?$2:1/0) "
            f"with points pt 7 title 'samples'"
        )
        lines.append(f"set title 'loop {spec.name}'")
        lines.append("plot " + ", \\\n     ".join(curves))
        lines.append("pause -1")
    (out_dir / "plot.gp").write_text("\n".join(lines) + "\n")


def cmd_simulate(args) -> int:
    scn, _ = load_scenario(args.scenario)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    if scn.mode == MODE_PERIODIC:
        trace = run_periodic(scn)
    else:
        if not args.tables:
            raise ConfigurationError(
                "self-triggered scenarios need -t/--tables (run synth first)"
            )
        stored = _load_tables(Path(args.tables))
        missing = [spec.name for spec in scn.loops if spec.name not in stored]
        if missing:
            raise ConfigurationError(f"no gain tables for loops {missing}")
        tables = {name: gt for name, (gt, _, _) in stored.items()}
        trace = run_self_triggered(scn, tables)
    if not verify_conflict_free(sorted(trace.tx_log)):
        raise SchedulingError("simulated transmission log has a slot conflict")
    summary = {}
    for spec in scn.loops:
        tr = trace.loops[spec.name]
        write_trace_csv(tr, out_dir / f"{spec.name}.trace.csv")
        final_x = tr.states[-1]
        summary[spec.name] = {
            "first_wait": int(tr.waits[0]),
            "final_wait": int(tr.waits[-1]),
            "n_samples": int(tr.sample_times.size),
            "avg_interval": average_sampling_interval(tr),
            "empiric_cost": empiric_cost(tr, spec.weights.Q, spec.weights.R),
            "final_value": float(tr.values[-1]),
            "final_state_norm": float(np.linalg.norm(final_x)),
        }
    write_txlog_csv(trace, out_dir / "tx_log.csv")
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    if args.gnuplot:
        _write_gnuplot(out_dir, scn.loops)
    for name, stats in summary.items():
        print(
            f"loop {name}: first_wait={stats['first_wait']} "
            f"final_wait={stats['final_wait']} samples={stats['n_samples']} "
            f"avg_interval={stats['avg_interval']:.3f} "
            f"cost={stats['empiric_cost']:.6g} final_V={stats['final_value']:.6g}"
        )
    print(f"outputs written to {out_dir}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    scn, _ = load_scenario(args.scenario)
    _check_network_admissible(scn)
    alphas = [float(a) for a in args.alphas.split(",") if a.strip() != ""]
    n_runs = args.runs
    horizon = scn.horizon
    if os.environ.get(FULL_SCALE_ENV) == "1":
        n_runs = FULL_SCALE_RUNS
        horizon = FULL_SCALE_HORIZON
        print(f"full-scale sweep: {n_runs} runs x {horizon} steps")
    scn = replace(scn, horizon=horizon)
    summary = sweep_alpha(scn, alphas, n_runs, args.seed)
    for alpha, msg in summary.errors.items():
        print(f"alpha={alpha:g}: synthesis failed: {msg}", file=sys.stderr)

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    single = len(summary.loop_names) == 1
    suffix = out.suffix or ".csv"
    stem = str(out.with_suffix(""))

    def out_path(loop_name: str, periodic: bool) -> Path:
        parts = [] if single else [loop_name]
        if periodic:
            parts.append("periodic")
        tag = "." + ".".join(parts) if parts else ""
        return Path(stem + tag + suffix)

    for name in summary.loop_names:
        write_sweep_csv(summary, name, out_path(name, periodic=False))

    # Periodic baseline at the matched (rounded) mean interval per alpha.
    baseline = _periodic_baseline(replace(scn, seed=args.seed), summary, n_runs)
    for name in summary.loop_names:
        _write_baseline_csv(baseline, name, summary, out_path(name, periodic=True))
    print(f"sweep written to {out}")
    return EXIT_OK


def _periodic_baseline(scn, summary, n_runs: int) -> dict:
    """Mean periodic cost per loop at each alpha's matched sampling interval."""
    results = {name: {} for name in summary.loop_names}
    s = len(scn.loops)
    for ai, alpha in enumerate(summary.alphas):
        if ai not in summary.mean_interval[summary.loop_names[0]]:
            continue
        interval = np.mean(
            [summary.mean_interval[name][ai] for name in summary.loop_names]
        )
        ts = int(min(max(round(interval), 1, s), scn.p))
        costs = {name: np.empty(n_runs) for name in summary.loop_names}
        for r in range(n_runs):
            trace = run_periodic(scn, ts, alpha_index=ai, run_index=r)
            for spec in scn.loops:
                tr = trace.loops[spec.name]
                costs[spec.name][r] = empiric_cost(tr, spec.weights.Q, spec.weights.R)
        for name in summary.loop_names:
            results[name][ai] = (ts, float(np.mean(costs[name])),
                                 float(np.std(costs[name], ddof=1) / np.sqrt(n_runs))
                                 if n_runs > 1 else 0.0)
    return results


def _write_baseline_csv(baseline, loop_name, summary, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["alpha", "mean_interval", "mean_cost", "se_cost", "n_runs"])
        for ai, alpha in enumerate(summary.alphas):
            if ai not in baseline[loop_name]:
                continue
            ts, cost, se = baseline[loop_name][ai]
            writer.writerow([repr(float(alpha)), repr(float(ts)), repr(cost), repr(se), summary.n_runs])


def cmd_verify(args) -> int:
    scn, _ = load_scenario(args.scenario)
    stored = _load_tables(Path(args.tables))
    systems = {spec.name: spec.system for spec in scn.loops}
    _check_network_admissible(scn)
    pstar = select_pstar(list(systems.values()), scn.I0)
    pg = pstar_is_gamma(list(systems.values()), scn.I0)
    print(f"terminal period {pstar}; equals max wait gamma: {'yes' if pg else 'no'}")
    s = len(scn.loops)
    if s >= 2:
        print(f"network admissibility (s={s} <= p={scn.p}, waits 1..{s} available): ok")
    failures = []
    for spec in scn.loops:
        if spec.name not in stored:
            raise ConfigurationError(f"no stored table for loop {spec.name!r}")
        gt, eps_stored, pstar_stored = stored[spec.name]
        if gt.n != spec.system.n or gt.m != spec.system.m:
            raise ConfigurationError(
                f"table/scenario dimension mismatch for loop {spec.name!r}"
            )
        try:
            cert = stability_certificate(gt, spec.system, pstar)
        except (CertificateError, ConfigurationError) as exc:
            failures.append(f"loop {spec.name!r}: {exc}")
            print(f"loop {spec.name}: CERTIFICATE FAILED: {exc}")
            continue
        collapse = math.isclose(cert.lower_bound, cert.upper_bound, rel_tol=1e-12)
        print(
            f"loop {spec.name}: epsilon={cert.epsilon:.17g} "
            f"(stored {eps_stored:.17g}), bounds=[{cert.lower_bound:.6g}, "
            f"{cert.upper_bound:.6g}]{' (collapsed)' if collapse else ''}, "
            f"pstar={cert.pstar} (stored {pstar_stored})"
        )
        if cert.lower_bound > cert.upper_bound + 1e-15:
            failures.append(f"loop {spec.name!r}: bound ordering violated")
    if failures:
        raise CertificateError("; ".join(failures))
    print("all certificates pass")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="selftrig",
        description="Self-triggered MPC: offline synthesis, simulation and verification",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="synthesize gain tables from a scenario")
    p_synth.add_argument("-c", "--scenario", required=True)
    p_synth.add_argument("-o", "--out", required=True, help="output directory")
    p_synth.set_defaults(func=cmd_synth)

    p_sim = sub.add_parser("simulate", help="run a scenario against stored tables")
    p_sim.add_argument("-c", "--scenario", required=True)
    p_sim.add_argument("-t", "--tables", help="directory of *.gains.json files")
    p_sim.add_argument("-o", "--out", required=True, help="output directory")
    p_sim.add_argument("--gnuplot", action="store_true", help="emit plot.gp")
    p_sim.set_defaults(func=cmd_simulate)

    p_sweep = sub.add_parser("sweep", help="sweep the sampling cost alpha")
    p_sweep.add_argument("-c", "--scenario", required=True)
    p_sweep.add_argument("--alphas", required=True, help="comma-separated ascending list")
    p_sweep.add_argument("--runs", type=int, default=20)
    p_sweep.add_argument("--seed", type=int, default=0)
    p_sweep.add_argument("-o", "--out", required=True, help="output CSV path")
    p_sweep.set_defaults(func=cmd_sweep)

    p_verify = sub.add_parser("verify", help="check certificates of stored tables")
    p_verify.add_argument("-t", "--tables", required=True)
    p_verify.add_argument("-c", "--scenario", required=True)
    p_verify.set_defaults(func=cmd_verify)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        code = args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        code = EXIT_CONFIG
    except SynthesisError as exc:
        print(f"synthesis error: {exc}", file=sys.stderr)
        code = EXIT_NUMERIC
    except CertificateError as exc:
        print(f"certificate failure: {exc}", file=sys.stderr)
        code = EXIT_CERTIFICATE
    except SchedulingError as exc:
        print(f"scheduling violation: {exc}", file=sys.stderr)
        code = EXIT_SCHEDULING
    except SelfTrigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = EXIT_CONFIG
    if argv is None:
        sys.exit(code)
    return code


if __name__ == "__main__":
    main()
