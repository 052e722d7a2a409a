"""Command-line runner: one subcommand per experiment kind plus
``plot-data`` for tidy tables.

Exit status: 0 all gating checks passed, 1 a gating check failed,
2 invalid config, 3 run error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import platform
import sys
import time
import traceback
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from ._accel import backend
from .cell import effective_flux_limiter, effective_hamiltonian, effective_model
from .config import KINDS, ExperimentConfig, load_config, space_time_hamiltonian, validate_config
from .errors import ConfigInvalid, HJLabError, MissingResult
from .hamiltonian import is_quasiconvex
from .homogenization import EpsilonSweep, convergence_report
from .solver import Grid1D, solve_cauchy
from .traffic import (CheckRow, check_lower_bound, check_merging_limit, check_monotonicity_in_spacing,
                      check_n1_identity, critical_distance_estimate, random_scenario)

log = logging.getLogger("hjlab")

OUTPUT_ROOT_ENV = "HJLAB_OUTPUT_ROOT"
EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_ERROR = 0, 1, 2, 3


@dataclass
class RunResult:
    status: int
    outdir: Path
    checks: list[dict] = field(default_factory=list)
    files: list[str] = field(default_factory=list)
    error: str | None = None


def write_rows(path: Path, header: Sequence[str], rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(header))
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return path


def _check(name: str, passed: bool, gating: bool = True, **info) -> dict:
    return {"check": name, "pass": bool(passed), "gating": gating, **info}


# -- per-kind runners -------------------------------------------------------------

def _run_cauchy(cfg: ExperimentConfig, out: Path, files: list) -> list[dict]:
    n = cfg.numerics
    sc = cfg.junction_scenario()
    grid = Grid1D.symmetric(n["half_width"], n["dx"], sc.positions)
    T = n["T"]
    times = n.get("output_times") or [0.0, T]
    traj = solve_cauchy(sc, cfg.initial_datum(), T, grid, output_times=times, cfl_safety=n["cfl_safety"])
    files.extend(str(p) for p in traj.write(out, "trajectory"))
    return [_check("barrier", traj.barrier_ok(), excess=traj.barrier_excess, C=traj.C)]


def _run_effective_hamiltonian(cfg: ExperimentConfig, out: Path, files: list) -> list[dict]:
    n = cfg.numerics
    H = space_time_hamiltonian(cfg.scenario)
    ps = [float(p) for p in n["ps"]]
    rows = []
    for p in ps:
        est = effective_hamiltonian(H, p, n["dx"], n["T"], cfl_safety=n["cfl_safety"])
        rows.append((p, est.value, est.lower, est.upper, est.width_bound))
    files.append(str(write_rows(out / "hbar.csv", ["p", "H_bar", "lower", "upper", "width_bound"], rows)))
    vals = np.array([r[1] for r in rows])
    order = np.argsort(ps)
    vals = vals[order]
    checks = [_check("quasi_convex", is_quasiconvex(vals, 1e-6))]
    if len(vals) >= 3:
        checks.append(_check("coercive", vals[0] > vals.min() and vals[-1] > vals.min()))
    return checks


def _flux_kw(cfg: ExperimentConfig) -> dict:
    n = cfg.numerics
    kw = {"dx": n["dx"], "T": n["T"], "tol": n.get("tol", 0.02), "cfl_safety": n["cfl_safety"], "jobs": cfg.jobs}
    if n.get("rho_schedule"):
        kw["rho_schedule"] = [float(r) for r in n["rho_schedule"]]
    return kw


def _run_flux_limiter(cfg: ExperimentConfig, out: Path, files: list) -> list[dict]:
    sc = cfg.junction_scenario()
    res = effective_flux_limiter(sc, strict=False, keep_correctors=True, **_flux_kw(cfg))
    files.append(str(write_rows(out / "rho_sweep.csv", ["rho", "lambda", "lower", "upper"],
                                [(r.rho, r.value, r.lower, r.upper) for r in res.provenance])))
    model = effective_model(sc, res)
    (out / "effective_model.json").write_text(model.to_json(), encoding="utf-8")
    files.append(str(out / "effective_model.json"))
    prof = res.correctors[-1].profile
    w = prof.values - prof.values[int(np.argmin(np.abs(prof.grid.x)))]
    files.append(str(write_rows(out / "profile.csv", ["x", "u"], zip(prof.grid.x.tolist(), w.tolist()))))
    return [_check("lambda_monotone", res.monotone),
            _check("above_A0", res.upper >= res.A0 - 1e-9, A_bar=res.A_bar, A0=res.A0),
            _check("converged", res.converged, bracket=[res.lower, res.upper])]


def _run_epsilon_sweep(cfg: ExperimentConfig, out: Path, files: list) -> list[dict]:
    n = cfg.numerics
    sc = cfg.junction_scenario()
    res = effective_flux_limiter(sc, strict=False, **_flux_kw(cfg))
    model = effective_model(sc, res)
    sweep = EpsilonSweep(tuple(n["epsilons"]), T=n["horizon"], X=n["X"], u0=cfg.initial_datum())
    rep = convergence_report(sweep, sc, model, coarse_dx=n["coarse_dx"], noise=n["noise"], jobs=cfg.jobs)
    files.append(str(rep.write_csv(out / "convergence.csv")))
    (out / "sweep.json").write_text(json.dumps(rep.manifest, indent=2, sort_keys=True), encoding="utf-8")
    files.append(str(out / "sweep.json"))
    checks = [_check("errors_non_increasing", rep.non_increasing, errors=rep.errors),
              _check("converging", not rep.not_converging),
              _check("barriers", all(r.barrier_ok for r in rep.rows))]
    if "max_error" in n:
        checks.append(_check("final_error", rep.errors[-1] <= n["max_error"], bound=n["max_error"]))
    return checks


def _row_dicts(rows: Sequence[CheckRow]) -> list[dict]:
    return [_check(r.name, r.passed, r.gating, expected=r.expected, computed=r.computed,
                   bracket=[r.lower, r.upper]) for r in rows]


def _run_traffic_checks(cfg: ExperimentConfig, out: Path, files: list) -> list[dict]:
    n = cfg.numerics
    sc = cfg.junction_scenario()
    kw = _flux_kw(cfg)
    kw.pop("tol")
    tol = n.get("tol", 0.03)
    cp = cfg.check_params
    checks: list[dict] = []
    rows: list[CheckRow] = []
    tables: dict[str, list[dict]] = {}
    for name in cfg.checks:
        if name == "n1_identity":
            rep = check_n1_identity(sc, tol, strict=False, **kw)
        elif name == "lower_bound":
            rep = check_lower_bound(sc, strict=False, **kw)
        elif name == "spacing_monotone":
            rep = check_monotonicity_in_spacing(sc, cp.get("deltas", (0.0, 0.75, 3.75)), strict=False, **kw)
            tables["ell_abar"] = rep.table
        elif name == "merging_limit":
            rep = check_merging_limit(sc, cp.get("ells", (1.0, 0.25, 0.0625)), strict=False, **kw)
            tables["ell_abar"] = rep.table
        elif name == "critical_distance":
            cd = critical_distance_estimate(sc)
            checks.append(_check("critical_distance", True, gating=False, d0=cd.d0, C=cd.C, level=cd.level,
                                 degenerate=cd.degenerate))
            continue
        elif name == "random_lower_bound":
            rng = np.random.default_rng(cfg.seed)
            rep_rows = []
            for i in range(int(cp.get("n_random", 20))):
                rs = random_scenario(rng, dx=n["dx"])
                r = check_lower_bound(rs, strict=False, **kw).rows[0]
                r.name = f"random_lower_bound[{i}]"
                rep_rows.append(r)
            rows.extend(rep_rows)
            checks.extend(_row_dicts(rep_rows))
            continue
        rows.extend(rep.rows)
        checks.extend(_row_dicts(rep.rows))
    files.append(str(write_rows(out / "summary.csv", ["check", "expected", "computed", "lower", "upper", "pass"],
                                [(r.name, r.expected, r.computed, r.lower, r.upper, "PASS" if r.passed else "FAIL")
                                 for r in rows])))
    for tname, table in tables.items():
        files.append(str(write_rows(out / f"{tname}.csv", ["ell", "A_bar", "lower", "upper"],
                                    [(t["ell"], t["A_bar"], t["lower"], t["upper"]) for t in table])))
    return checks


RUNNERS = {"cauchy": _run_cauchy, "effective_hamiltonian": _run_effective_hamiltonian,
           "flux_limiter": _run_flux_limiter, "epsilon_sweep": _run_epsilon_sweep,
           "traffic_checks": _run_traffic_checks}


def _versions() -> dict:
    out = {"hjlab": __version__, "numpy": np.__version__, "python": platform.python_version(),
           "backend": backend()}
    try:
        import numba
        out["numba"] = numba.__version__
    except ImportError:
        out["numba"] = None
    return out


def run(cfg: ExperimentConfig, outdir: str | Path) -> RunResult:
    """Run one experiment; the manifest is written even when it fails."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    files: list[str] = []
    checks: list[dict] = []
    error = None
    try:
        checks = RUNNERS[cfg.kind](cfg, out, files)
        status = EXIT_OK if all(c["pass"] for c in checks if c.get("gating", True)) else EXIT_FAIL
    except ConfigInvalid as exc:
        status, error = EXIT_CONFIG, f"{type(exc).__name__}: {exc}"
    except Exception as exc:  # recorded in the manifest
        status, error = EXIT_ERROR, f"{type(exc).__name__} in {cfg.kind}: {exc}"
        log.debug(traceback.format_exc())
    manifest = {"kind": cfg.kind, "config": cfg.as_dict(), "config_file": cfg.source, "versions": _versions(),
                "wall_clock_s": round(time.perf_counter() - t0, 3), "status": status, "error": error,
                "checks": checks, "files": [Path(f).name for f in files]}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=_json_default),
                                       encoding="utf-8")
    return RunResult(status, out, checks, files, error)


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.bool_,)):
        return bool(o)
    return str(o)


# -- plot data ----------------------------------------------------------------------

def _read_csv(path: Path) -> list[dict]:
    if not path.exists():
        raise MissingResult(f"missing result file {path}")
    with path.open(encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def emit_plot_data(result_dir: str | Path) -> list[Path]:
    """Tidy tables under ``<result_dir>/plot`` for the experiment found there."""
    rd = Path(result_dir)
    man_path = rd / "manifest.json"
    if not man_path.exists():
        raise MissingResult(f"no manifest.json in {rd}")
    man = json.loads(man_path.read_text(encoding="utf-8"))
    kind = man.get("kind")
    plot = rd / "plot"
    out = []
    if kind == "cauchy":
        rows = _read_csv(rd / "trajectory.csv")
        out.append(write_rows(plot / "profile_t_x_u.csv", ["t", "x", "u"], [(r["t"], r["x"], r["u"]) for r in rows]))
    elif kind == "effective_hamiltonian":
        rows = _read_csv(rd / "hbar.csv")
        out.append(write_rows(plot / "p_hbar.csv", ["p", "H_bar", "lower", "upper"],
                              [(r["p"], r["H_bar"], r["lower"], r["upper"]) for r in rows]))
    elif kind == "flux_limiter":
        rows = _read_csv(rd / "rho_sweep.csv")
        out.append(write_rows(plot / "rho_lambda.csv", ["rho", "lambda", "lower", "upper"],
                              [(r["rho"], r["lambda"], r["lower"], r["upper"]) for r in rows]))
        prof = _read_csv(rd / "profile.csv")
        out.append(write_rows(plot / "profile_x_u.csv", ["x", "u"], [(r["x"], r["u"]) for r in prof]))
    elif kind == "epsilon_sweep":
        rows = _read_csv(rd / "convergence.csv")
        out.append(write_rows(plot / "eps_error.csv", ["eps", "sup_error"], [(r["eps"], r["sup_error"]) for r in rows]))
    elif kind == "traffic_checks":
        rows = _read_csv(rd / "summary.csv")
        out.append(write_rows(plot / "checks.csv", ["check", "computed", "lower", "upper", "pass"],
                              [(r["check"], r["computed"], r["lower"], r["upper"], r["pass"]) for r in rows]))
        if (rd / "ell_abar.csv").exists():
            rows = _read_csv(rd / "ell_abar.csv")
            out.append(write_rows(plot / "ell_abar.csv", ["ell", "A_bar"], [(r["ell"], r["A_bar"]) for r in rows]))
    else:
        raise MissingResult(f"manifest in {rd} has unknown kind {kind!r}")
    return out


# -- entry point ----------------------------------------------------------------------

def _default_out(kind: str, cfg_path: str) -> Path:
    root = Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))
    return root / f"{kind}-{Path(cfg_path).stem}"


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hjlab", description="Junction Hamilton-Jacobi experiments")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        sp = sub.add_parser(kind, help=f"run a {kind} experiment")
        sp.add_argument("--config", required=True, help="YAML or JSON experiment file")
        sp.add_argument("--out", help=f"output directory (default ${OUTPUT_ROOT_ENV}/<kind>-<config>)")
        sp.add_argument("--seed", type=int, help="seed for randomized checks")
        sp.add_argument("--jobs", type=int, default=None, help="parallel sub-runs")
        sp.add_argument("--tol-override", type=float, help="replace numerics.tol")
    pd = sub.add_parser("plot-data", help="emit tidy CSVs from a result directory")
    pd.add_argument("result_dir")
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "plot-data":
        try:
            for p in emit_plot_data(args.result_dir):
                print(p)
        except MissingResult as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_ERROR
        return EXIT_OK
    kind = args.command
    out = Path(args.out) if args.out else _default_out(kind, args.config)
    try:
        cfg = load_config(args.config)
        raw = cfg.as_dict()
        if args.tol_override is not None:
            raw["numerics"]["tol"] = args.tol_override
        if args.seed is not None:
            raw["seed"] = args.seed
        if args.jobs is not None:
            raw["jobs"] = args.jobs
        src = cfg.source
        cfg = validate_config(raw, kind)
        cfg.source = src
    except ConfigInvalid as exc:
        out.mkdir(parents=True, exist_ok=True)
        (out / "manifest.json").write_text(json.dumps({"kind": kind, "config_file": args.config, "status": EXIT_CONFIG,
                                                       "error": f"ConfigInvalid: {exc}", "field": exc.field,
                                                       "versions": _versions()}, indent=2, sort_keys=True),
                                           encoding="utf-8")
        print(f"error: invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    res = run(cfg, out)
    for c in res.checks:
        flag = "PASS" if c["pass"] else "FAIL"
        print(f"{flag} {c['check']}" + ("" if c.get("gating", True) else " (informational)"))
    if res.error:
        print(f"error: {res.error}", file=sys.stderr)
    print(f"results in {res.outdir}")
    return res.status


if __name__ == "__main__":
    sys.exit(main())
