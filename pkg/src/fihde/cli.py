"""Command-line front end.

    fihde solve|bracket|verify|hypotheses|convergence SCENARIO [options]

Every command writes ``<name>_<command>.json`` (and a CSV where there is a
curve or table) into the output directory and prints a one-line summary.

Exit codes: 0 success, 1 input error, 2 non-convergence, 3 monotonicity
violation, 4 verification failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .errors import DataError, FihdeError, MonotonicityError, PreconditionError, SolverError
from .fraccalc import GridFunction, interpolate
from .monotone import iterate_extremal, verify_lower_upper, verify_mixed_pair
from .problem import check_all
from .scenario import Scenario, load
from .solver import solve_fihie
from .tables import format_csv, read_csv

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NONCONVERGED = 2
EXIT_MONOTONICITY = 3
EXIT_VERIFY = 4

log = logging.getLogger("fihde")


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


class _Run:
    """Resolved scenario plus output location for one invocation."""

    def __init__(self, args):
        sc = load(args.scenario)
        if args.n is not None:
            sc = replace(sc, n=args.n)
        if args.tol is not None:
            sc = replace(sc, solver=replace(sc.solver, tol=args.tol))
        if args.kind is not None:
            sc = replace(sc, bracket=replace(sc.bracket, kind=args.kind))
        self.sc: Scenario = sc
        out = args.out or os.environ.get("FIHDE_OUT") or sc.out_dir
        self.out = Path(out)
        self.quiet = args.quiet

    def path(self, cmd: str, ext: str) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        return self.out / f"{self.sc.name}_{cmd}.{ext}"

    def write_json(self, cmd: str, payload: dict) -> Path:
        p = self.path(cmd, "json")
        body = {"schema": 1, "scenario": self.sc.name, "command": cmd, **payload}
        p.write_text(json.dumps(_clean(body), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return p

    def write_csv(self, cmd: str, columns: dict) -> Path:
        p = self.path(cmd, "csv")
        p.write_text(format_csv(columns), encoding="utf-8")
        return p

    def say(self, msg: str):
        if not self.quiet:
            print(msg)


def cmd_solve(run: _Run, args) -> int:
    sc = run.sc
    v, rep = solve_fihie(sc.problem, sc.solver, sc.n)
    run.write_csv("solve", {"s": v.grid.nodes, "v": v.values})
    run.write_json("solve", {"n": sc.n, "report": rep.to_json()})
    run.say(f"{sc.name}: {'converged' if rep.converged else 'NOT converged'} after {rep.outer_iters} "
            f"iterations, residual {rep.final_residual:.3e}, v(end) = {v.values[-1]!r}")
    return EXIT_OK if rep.converged else EXIT_NONCONVERGED


def cmd_bracket(run: _Run, args) -> int:
    sc = run.sc
    b = sc.bracket
    sigma0, rho0 = b.initial(sc.problem, sc.n)
    pre = verify_mixed_pair(sc.problem, sigma0, rho0, b.kind, b.tol_defect)
    if not pre.passes and not args.force:
        run.write_json("bracket", {"n": sc.n, "precondition": pre.to_json(), "error": "initial pair rejected"})
        print(f"error: initial pair is not a kind-{b.kind} lower/upper pair ({pre.witness})", file=sys.stderr)
        return EXIT_VERIFY
    rep = iterate_extremal(sc.problem, sigma0, rho0, b.kind, sc.solver, width_tol=b.width_tol,
                           max_steps=b.max_steps, force=args.force, tol_defect=b.tol_defect,
                           keep_every=b.keep_every)
    cols = {"s": sigma0.grid.nodes}
    for t, sig, _ in rep.iterates:
        cols[f"sigma_{t}"] = sig.values
    for t, _, rho in rep.iterates:
        cols[f"rho_{t}"] = rho.values
    run.write_csv("bracket", cols)
    payload = {"n": sc.n, "report": rep.to_json()}
    if rep.monotonicity_violations:
        t, node, mag, rel = rep.monotonicity_violations[0]
        payload["witness"] = {"t": t, "node": node, "s": float(sigma0.grid.nodes[node]) if node >= 0 else None,
                              "magnitude": mag, "relation": rel}
    run.write_json("bracket", payload)
    run.say(f"{sc.name}: kind {rep.kind}, {rep.steps} steps, width {rep.width_history[-1]:.3e}, "
            f"{len(rep.monotonicity_violations)} ordering violation(s)")
    if rep.monotonicity_violations:
        return EXIT_MONOTONICITY
    return EXIT_OK if rep.converged else EXIT_NONCONVERGED


def _load_candidate(path, grid) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as err:
        raise DataError(f"cannot read candidate {path}: {err.strerror}") from None
    cols = read_csv(text)
    s = cols.get("s")
    if s is None:
        raise DataError("candidate CSV needs an 's' column")
    if s.size != grid.n + 1 or not np.allclose(s, grid.nodes, rtol=0, atol=1e-12 * max(1.0, abs(grid.end))):
        raise DataError(f"candidate grid ({s.size} nodes) does not match the scenario grid (n={grid.n})")
    return cols


def cmd_verify(run: _Run, args) -> int:
    sc = run.sc
    p = sc.problem
    grid = p.grid(sc.n)
    role = args.role
    b = sc.bracket
    if args.candidate is not None:
        cols = _load_candidate(args.candidate, grid)
        if role == "mixed":
            missing = {"sigma", "rho"} - set(cols)
            if missing:
                raise DataError(f"mixed verification needs columns sigma and rho; missing {sorted(missing)}")
            sigma = GridFunction(grid, cols["sigma"], p.interp)
            rho = GridFunction(grid, cols["rho"], p.interp)
        else:
            names = [k for k in cols if k != "s"]
            key = "v" if "v" in cols else (names[0] if len(names) == 1 else None)
            if key is None:
                raise DataError("candidate CSV needs a 'v' column")
            cand = GridFunction(grid, cols[key], p.interp)
    else:
        sigma, rho = b.initial(p, sc.n)
        cand = sigma if role == "lower" else rho
    if role == "mixed":
        rep = verify_mixed_pair(p, sigma, rho, b.kind, b.tol_defect)
    else:
        rep = verify_lower_upper(p, cand, role, b.tol_defect)
    run.write_json("verify", {"n": sc.n, "role": role, "report": rep.to_json(with_defects=True)})
    run.say(f"{sc.name}: {role} {'passes' if rep.passes else 'FAILS'} "
            f"(worst violation {rep.worst_violation:.3e} in {rep.witness['inequality']})")
    return EXIT_OK if rep.passes else EXIT_VERIFY


def cmd_hypotheses(run: _Run, args) -> int:
    sc = run.sc
    bracket = None
    if sc.bracket.sigma0 is not None and sc.bracket.rho0 is not None:
        bracket = sc.bracket.initial(sc.problem, sc.n)
    rep = check_all(sc.problem, sc.sampling_box, bracket=bracket, kind=sc.bracket.kind,
                    tol_defect=sc.bracket.tol_defect)
    run.write_json("hypotheses", {"n": sc.n, "report": rep.to_json()})
    for r in rep.results:
        run.say(f"{r.name}: {'holds' if r.holds else 'FAILS'} (worst {r.worst_violation:.3e} at {r.witness})")
    return EXIT_OK if rep.all_hold else EXIT_VERIFY


def _restricted_gap(coarse: GridFunction, fine: GridFunction) -> float:
    if fine.grid.n % coarse.grid.n == 0:
        vals = fine.values[:: fine.grid.n // coarse.grid.n]
    else:
        vals = interpolate(fine, coarse.grid.nodes)
    return float(np.max(np.abs(coarse.values - vals)))


def convergence_study(sc: Scenario, grids) -> dict:
    """Solve on each grid; sup-norm gaps between neighbours and observed orders."""
    grids = sorted(set(int(n) for n in grids))
    rows = []
    sols = {}
    for n in grids:
        row = {"n": n, "status": 1, "outer_iters": -1, "final_residual": math.nan}
        try:
            v, rep = solve_fihie(sc.problem, sc.solver, n)
            row.update(status=1 if rep.converged else 0, outer_iters=rep.outer_iters,
                       final_residual=rep.final_residual)
            sols[n] = v
        except FihdeError as err:
            row.update(status=-1, error=str(err))
            log.warning("grid n=%d failed: %s", n, err)
        rows.append(row)
    for i, row in enumerate(rows):
        nxt = rows[i + 1]["n"] if i + 1 < len(rows) else None
        row["gap_to_next"] = (_restricted_gap(sols[row["n"]], sols[nxt])
                              if nxt is not None and row["n"] in sols and nxt in sols else math.nan)
    for i, row in enumerate(rows):
        order = math.nan
        if i + 2 < len(rows):
            d0, d1 = row["gap_to_next"], rows[i + 1]["gap_to_next"]
            ratio = rows[i + 1]["n"] / row["n"]
            if d0 > 0 and d1 > 0:
                order = math.log(d0 / d1) / math.log(ratio)
        row["observed_order"] = order
    gaps = [(r["n"], r["gap_to_next"]) for r in rows if r["gap_to_next"] > 0]
    overall = math.nan
    if len(gaps) >= 2:
        (n0, d0), (n1, d1) = gaps[0], gaps[-1]
        overall = math.log(d0 / d1) / math.log(n1 / n0)
    return {"grids": grids, "rows": rows, "overall_order": overall}


def cmd_convergence(run: _Run, args) -> int:
    sc = run.sc
    grids = args.grids if args.grids else sc.grids
    study = convergence_study(sc, grids)
    cols = {k: np.array([r[k] for r in study["rows"]], dtype=float if k not in ("n", "status", "outer_iters") else int)
            for k in ("n", "status", "outer_iters", "final_residual", "gap_to_next", "observed_order")}
    run.write_csv("convergence", cols)
    run.write_json("convergence", study)
    for r in study["rows"]:
        run.say(f"n={r['n']:>6}  status={r['status']:>2}  gap={r['gap_to_next']:.3e}  order={r['observed_order']:.3f}")
    run.say(f"overall observed order {study['overall_order']:.3f}")
    ok = all(r["status"] == 1 for r in study["rows"])
    return EXIT_OK if ok else EXIT_NONCONVERGED


COMMANDS = {
    "solve": cmd_solve,
    "bracket": cmd_bracket,
    "verify": cmd_verify,
    "hypotheses": cmd_hypotheses,
    "convergence": cmd_convergence,
}


def _grid_list(text: str):
    try:
        out = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not out or min(out) < 2:
        raise argparse.ArgumentTypeError("grid sizes must be integers >= 2")
    return out


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with the input-error code, not argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="fihde", description="Fractional iterative hybrid equations: solve, bracket, verify.")
    sub = ap.add_subparsers(dest="command", required=True)
    common = _Parser(add_help=False)
    common.add_argument("scenario", help="scenario TOML file")
    common.add_argument("--out", help="output directory (default: $FIHDE_OUT, then the scenario's [output] dir)")
    common.add_argument("--n", type=int, help="number of grid subintervals")
    common.add_argument("--tol", type=float, help="solver stopping tolerance")
    common.add_argument("--kind", type=str.upper, choices=("A", "B"), help="monotone scheme")
    common.add_argument("--quiet", action="store_true", help="no summary on stdout")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub.add_parser("solve", parents=[common], help="Picard solve of the integral equation")
    bp = sub.add_parser("bracket", parents=[common], help="monotone iteration from the scenario bracket")
    bp.add_argument("--force", action="store_true", help="iterate even if the initial pair is rejected")
    vp = sub.add_parser("verify", parents=[common], help="check lower/upper inequalities of a curve")
    vp.add_argument("--role", choices=("lower", "upper", "mixed"), default="mixed")
    vp.add_argument("--candidate", help="CSV with columns s,v (lower/upper) or s,sigma,rho (mixed)")
    sub.add_parser("hypotheses", parents=[common], help="sampled hypothesis checks")
    cp = sub.add_parser("convergence", parents=[common], help="grid refinement study")
    cp.add_argument("--grids", type=_grid_list, help="comma-separated grid sizes")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.n is not None and args.n < 2:
        print("error: --n must be >= 2", file=sys.stderr)
        return EXIT_INPUT
    try:
        run = _Run(args)
        return COMMANDS[args.command](run, args)
    except PreconditionError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_VERIFY
    except MonotonicityError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_MONOTONICITY
    except SolverError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except (FihdeError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
