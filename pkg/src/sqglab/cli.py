"""``sqglab <simulate|limit|scaling|verify> --config <path> [--output <dir>] [--threads n]``

Exit codes: 0 success, 1 validation error, 2 runtime abort (non-finite state or a
step-size bound violated mid-run), 3 failed check (``verify`` suite failure or a
``scaling`` report whose ``D_N`` column is not strictly decreasing).

Every command writes into a staging directory that is renamed onto the output
directory only when complete, together with ``manifest.json`` (config hash,
version, seeds, wall-clock metadata and a checksummed file inventory). Failures
print a JSON error report on stderr.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, Diagnostic, RunConfig, load_config, render
from .dynamics import (EXPLICIT_SCHEMES, BrownianDriver, GalerkinSystem, RecordingPlan, SimulationAbort,
                       StabilityError, advective_dt_bound, explicit_dt_bound, simulate_batch)
from .io import (atomic_output, dumps_json, file_inventory, report_to_csv, report_to_dict, snapshot_arrays,
                 trajectory_to_csv, write_container)
from .limit import DeterministicConfig, energy_residual, solve_boussinesq, solve_sqg
from .scaling import EnsembleSpec, default_observables, run_scaling
from .verify import format_table, run_suites

COMMANDS = ("simulate", "limit", "scaling", "verify")
EXIT_OK, EXIT_VALIDATION, EXIT_ABORT, EXIT_CHECK = 0, 1, 2, 3
BATCH = 16


def _fmt(x) -> str:
    return repr(float(x))


def _precheck(cfg: RunConfig, base_dir):
    """Step-size bounds that are known before any step is taken (validation errors, not aborts)."""
    omega0 = cfg.initial_fields(base_dir)[-1]
    for r in cfg.theta_radii:
        sde = cfg.sde_config(r)
        if cfg.scheme in EXPLICIT_SCHEMES:
            bound = explicit_dt_bound(sde)
            what = "0.5/(4 pi^2 N^2 (nu+kappa))"
        else:
            bound = advective_dt_bound(cfg.galerkin_n, GalerkinSystem(sde).max_speed(omega0.coeffs[None]))
            what = "0.1/(2 pi N max|u0|)"
        if cfg.dt > bound * (1 + 1e-12):
            raise ConfigError([Diagnostic(0, "dt", f"{cfg.scheme} needs dt <= {what} = {bound:.3g} "
                                                   f"for this configuration, got {cfg.dt:g}")])
        if cfg.scheme not in EXPLICIT_SCHEMES:
            break  # the advective bound does not depend on the noise


def manifest(cfg: RunConfig, command: str, started: float, root: Path, extra: dict | None = None) -> dict:
    hashed = replace(cfg, output_dir="-", threads=1)
    out = {
        "tool": "sqglab",
        "version": __version__,
        "command": command,
        "config_hash": cfg.config_hash(),
        "config": render(hashed).splitlines()[1:],
        "seeds": {"seed": cfg.seed, "sample_indices": [1, cfg.ensemble_size] if command in ("simulate", "scaling")
                  else []},
        "wall_clock": {"started": datetime.fromtimestamp(started, timezone.utc).isoformat(),
                       "elapsed_seconds": time.time() - started},
        "files": file_inventory(root),
    }
    out.update(extra or {})
    return out


# --------------------------------------------------------------------------
# commands


def _simulate_chunk(args):
    sde, initial, seed, indices, plan = args
    return simulate_batch(sde, initial, [BrownianDriver(seed, int(i)) for i in indices], plan)


def cmd_simulate(cfg: RunConfig, out, base_dir) -> tuple[int, dict, str]:
    sde = cfg.sde_config()
    initial = cfg.initial_fields(base_dir)
    plan = RecordingPlan(cfg.record_times, default_observables(cfg.galerkin_n), [0.0, cfg.t_final])
    idx = np.arange(1, cfg.ensemble_size + 1)
    tasks = [(sde, initial, cfg.seed, idx[i:i + BATCH], plan) for i in range(0, idx.size, BATCH)]
    if cfg.threads > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
            parts = list(pool.map(_simulate_chunk, tasks))
    else:
        parts = [_simulate_chunk(t) for t in tasks]
    recs = [r for p in parts for r in p]
    rows = ["sample_index,status," + ",".join(f"final_norm_{f}" for f in sde.fields)]
    aborts = {}
    for i, r in zip(idx, recs):
        name = f"sample_{i:04d}"
        out.write_text(f"trajectories/{name}.csv", trajectory_to_csv(r))
        arrays = snapshot_arrays(r, -1)  # final state, readable back as initial_data
        arrays.update({f"{f}/initial": r.snapshots[f][0] for f in r.fields})
        out.write_bytes(f"snapshots/{name}.sqgfld", write_container(arrays))
        status = "aborted" if r.aborted else "ok"
        if r.aborted:
            aborts[int(i)] = r.abort
        rows.append(f"{i},{status}," + ",".join(_fmt(r.l2_norms[f][-1]) for f in sde.fields))
    out.write_text("summary.csv", "\n".join(rows) + "\n")
    extra = {"scheme": cfg.scheme, "dt": cfg.dt, "noise": sde.theta.manifest(), "aborts": aborts}
    status = EXIT_ABORT if aborts else EXIT_OK
    return status, extra, f"{len(recs)} samples, {len(aborts)} aborted"


def cmd_limit(cfg: RunConfig, out, base_dir) -> tuple[int, dict, str]:
    dcfg = DeterministicConfig(equation=cfg.equation, N=cfg.galerkin_n, nu=cfg.nu, kappa=cfg.kappa,
                               dt=cfg.dt, t_final=cfg.t_final)
    initial = cfg.initial_fields(base_dir)
    plan = RecordingPlan(cfg.record_times, default_observables(cfg.galerkin_n), [0.0, cfg.t_final])
    rec = solve_sqg(*initial, dcfg, plan) if cfg.equation == "SQG" else solve_boussinesq(*initial, dcfg, plan)
    out.write_text("trajectory.csv", trajectory_to_csv(rec))
    # the balance is an identity for SQG omega and for xi; Boussinesq omega is forced by buoyancy
    balanced = ("omega",) if cfg.equation == "SQG" else ("xi",)
    res = {f: energy_residual(rec, dcfg, f) for f in balanced}
    lines = ["time," + ",".join(f"energy_residual_{f}" for f in balanced)]
    lines += [_fmt(t) + "," + ",".join(_fmt(res[f][i]) for f in balanced) for i, t in enumerate(rec.times)]
    out.write_text("energy.csv", "\n".join(lines) + "\n")
    out.write_bytes("snapshots/final.sqgfld", write_container(snapshot_arrays(rec, -1)))
    extra = {"scheme": dcfg.scheme, "dt": dcfg.dt, "deterministic": True}
    return EXIT_OK, extra, f"final ||omega|| = {rec.l2_norms['omega'][-1]:.6g}"


def scaling_spec(cfg: RunConfig, base_dir=None) -> EnsembleSpec:
    """The ensemble experiment a ``scaling`` run performs for ``cfg``."""
    return EnsembleSpec(base=cfg.sde_config(), theta_family=cfg.theta_list(), initial=cfg.initial_fields(base_dir),
                        sample_count=cfg.ensemble_size, seed=cfg.seed, delta=cfg.delta,
                        deviation_epsilon=cfg.deviation_epsilon, record_intervals=cfg.record_times,
                        threads=cfg.threads)


def cmd_scaling(cfg: RunConfig, out, base_dir) -> tuple[int, dict, str]:
    report = run_scaling(scaling_spec(cfg, base_dir))
    out.write_text("report.csv", report_to_csv(report))
    body = report_to_dict(report, cfg.config_hash(), {"seed": cfg.seed, "sample_indices": [1, cfg.ensemble_size]})
    out.write_text("report.json", dumps_json(body))
    d = report.distances
    monotone = bool(np.all(np.diff(d) < 0))
    extra = {"scheme": cfg.scheme, "dt": cfg.dt, "noise": [t.manifest() for t in cfg.theta_list()],
             "checks": {"distance_strictly_decreasing": monotone}}
    text = "D_N: " + ", ".join(f"{x:.4g}" for x in d)
    return (EXIT_OK if monotone else EXIT_CHECK), extra, text


def cmd_verify(cfg: RunConfig, out, base_dir) -> tuple[int, dict, str]:
    results = run_suites()
    table = format_table(results)
    lines = ["suite,passed,worst,threshold"]  # timings stay out of the CSV so reruns are byte-identical
    lines += [f"{r.name},{r.passed},{_fmt(r.worst)},{_fmt(r.threshold)}" for r in results]
    out.write_text("verify.csv", "\n".join(lines) + "\n")
    ok = all(r.passed for r in results)
    return (EXIT_OK if ok else EXIT_CHECK), {"suites": {r.name: r.passed for r in results}}, table


HANDLERS = {"simulate": cmd_simulate, "limit": cmd_limit, "scaling": cmd_scaling, "verify": cmd_verify}


def run(command: str, cfg: RunConfig, base_dir: Path | None = None, stdout=None) -> int:
    """Execute one command; artifacts land in ``cfg.output_dir`` atomically."""
    stdout = stdout or sys.stdout
    started = time.time()
    _precheck(cfg, base_dir)
    target = Path(cfg.output_dir)
    with atomic_output(target) as out:
        out.write_text("config.txt", render(cfg))
        status, extra, text = HANDLERS[command](cfg, out, base_dir)
        extra["exit_status"] = status
        out.write_text("manifest.json", dumps_json(manifest(cfg, command, started, out.path, extra)))
    print(text, file=stdout)
    print(f"wrote {target}", file=stdout)
    return status


def _error(kind: str, code: int, message: str, **fields) -> int:
    report = {"error": kind, "exit_code": code, "message": message, **fields}
    print(json.dumps(report, sort_keys=True), file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="sqglab", description="Stochastic SQG / Boussinesq Galerkin experiments")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="flat key = value configuration file")
    parser.add_argument("--output", help="output directory (overrides output_dir)")
    parser.add_argument("--threads", type=int, help="worker processes (overrides threads)")
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_VALIDATION if e.code else EXIT_OK
    try:
        cfg = load_config(args.config)
        if args.output:
            cfg = replace(cfg, output_dir=args.output)
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigError([Diagnostic(0, "threads", "--threads must be >= 1")])
            cfg = replace(cfg, threads=args.threads)
        return run(args.command, cfg, Path(args.config).parent)
    except ConfigError as e:
        return _error("validation", EXIT_VALIDATION, str(e), diagnostics=[d._asdict() for d in e.diagnostics])
    except OSError as e:
        return _error("io", EXIT_VALIDATION, str(e))
    except SimulationAbort as e:
        return _error("abort", EXIT_ABORT, str(e), step=e.step, time=e.time)
    except StabilityError as e:
        return _error("abort", EXIT_ABORT, str(e))


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
