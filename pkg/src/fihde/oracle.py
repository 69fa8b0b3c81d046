"""Brute-force reference computations and golden files.

Nothing here reuses the production quadrature tables.  The fractional
integral integrates the kernel against each linear piece separately, from
the closed-form moments of ``(t - x)**(alpha - 1)`` over one subinterval;
the Picard oracle composes with scipy's interpolators instead of the
in-house ones.

Golden files are CSV with a single ``# {json}`` provenance line on top.  The
header names a generator and its inputs, and :func:`regenerate` reruns that
generator and rewrites the file with the same header, so a faithful rerun
is byte-for-byte identical.

Usage::

    python -m fihde.oracle check  tests/golden/*.csv
    python -m fihde.oracle regen  tests/golden/*.csv
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import PchipInterpolator
from scipy.signal import fftconvolve

from .errors import ConfigError, OracleError
from .fraccalc import DomainPolicy, Interp
from .problem import ProblemSpec
from .tables import format_csv, read_csv

GOLDEN_SCHEMA = 1


@dataclass(frozen=True)
class OracleConfig:
    dense_n: int = 8192
    dense_tol: float = 1e-12
    max_iter: int = 2000

    def __post_init__(self):
        if self.dense_n < 2 or self.dense_tol <= 0 or self.max_iter < 1:
            raise ConfigError("oracle needs dense_n >= 2, dense_tol > 0, max_iter >= 1")

    def covers(self, n: int) -> bool:
        """Dense grid at least eight times finer and nested in the grid of size ``n``."""
        return self.dense_n >= 8 * n and self.dense_n % n == 0


# -- fractional integral -----------------------------------------------------------


def _moment_weights(alpha: float, n: int, h: float):
    """Weights of the linear pieces, built from first principles.

    For target node ``t_i`` and piece ``[t_j, t_j+1]`` with ``u0 = i - j``,
    ``u1 = i - j - 1`` (in units of ``h``):

        M0 = h^alpha (u0^alpha - u1^alpha) / alpha
        M1 = h^(alpha+1) (u0^(alpha+1) - u1^(alpha+1)) / (alpha + 1)     (moment of (t_i - x))

    and the integral of the kernel against the hat functions of the two ends
    is ``(M1 - u1 h M0)`` for the left node and ``(u0 h M0 - M1)`` for the right.
    Returned as functions of ``m = i - j - 1`` for convolution.
    """
    m = np.arange(n, dtype=float)
    u0, u1 = m + 1.0, m
    g = math.gamma(alpha)
    m0 = h**alpha * (u0**alpha - u1**alpha) / alpha
    m1 = h ** (alpha + 1) * (u0 ** (alpha + 1) - u1 ** (alpha + 1)) / (alpha + 1)
    left = (m1 - u1 * h * m0) / (h * g)
    right = (u0 * h * m0 - m1) / (h * g)
    return left, right


def oracle_rl_integral_samples(values: np.ndarray, alpha: float, a: float) -> np.ndarray:
    """``I^alpha`` at every node of ``n + 1`` equispaced samples on an interval of length ``a``."""
    if not 0 < alpha <= 1:
        raise OracleError(f"alpha must lie in (0, 1], got {alpha}")
    y = np.asarray(values, dtype=float)
    n = y.size - 1
    h = a / n
    left, right = _moment_weights(alpha, n, h)
    out = np.zeros(n + 1)
    # piece j contributes left[i-j-1]*y[j] + right[i-j-1]*y[j+1] to node i > j
    out[1:] = fftconvolve(y[:-1], left)[:n] + fftconvolve(y[1:], right)[:n]
    return out


def oracle_rl_integral(f, alpha: float, dense_n: int = 8192, s0: float = 0.0, a: float = 1.0):
    """``(nodes, I^alpha f)`` for a callable ``f`` sampled on ``dense_n`` subintervals."""
    s = s0 + np.arange(dense_n + 1) * (a / dense_n)
    return s, oracle_rl_integral_samples(np.asarray(f(s), dtype=float) * np.ones_like(s), alpha, a)


def oracle_rl_derivative_samples(values: np.ndarray, alpha: float, a: float) -> np.ndarray:
    """``d/ds I^(1-alpha)`` with second-order one-sided/central differences."""
    y = oracle_rl_integral_samples(values, 1.0 - alpha, a)
    h = a / (y.size - 1)
    d = np.empty_like(y)
    d[1:-1] = (y[2:] - y[:-2]) / (2 * h)
    d[0] = (-3 * y[0] + 4 * y[1] - y[2]) / (2 * h)
    d[-1] = (3 * y[-1] - 4 * y[-2] + y[-3]) / (2 * h)
    return d


# -- integral-equation solution ------------------------------------------------------


@dataclass
class OracleReport:
    iterations: int
    final_step: float
    dense_n: int
    dense_tol: float


def _composer(p: ProblemSpec, s: np.ndarray, v: np.ndarray):
    lo, hi = s[0], s[-1]

    def at(x):
        x = np.asarray(x, dtype=float)
        if p.domain_policy is DomainPolicy.Strict and (np.any(x < lo) or np.any(x > hi)):
            raise OracleError("iterate left the interval under the strict policy")
        x = np.clip(x, lo, hi)
        if p.interp is Interp.Linear:
            return np.interp(x, s, v)
        return PchipInterpolator(s, v)(x)

    return at


def oracle_solve(p: ProblemSpec, cfg: OracleConfig = OracleConfig()):
    """Plain (undamped) Picard iteration on the dense grid.

    Returns ``(nodes, values, report)``; raises :class:`OracleError` instead
    of returning an unconverged curve.
    """
    n = cfg.dense_n
    s = p.s0 + np.arange(n + 1) * (p.a / n)
    v = np.full(n + 1, float(p.v0))
    step = math.inf
    for k in range(1, cfg.max_iter + 1):
        at = _composer(p, s, v)
        w = at(v)
        c = p.v0 - p.psi(p.s0, p.v0, float(at(p.v0)))
        load = np.asarray(p.aleph(s, v, w), dtype=float) * np.ones_like(s)
        new = c + np.asarray(p.psi(s, v, w), dtype=float) + oracle_rl_integral_samples(load, p.alpha, p.a)
        step = float(np.max(np.abs(new - v)))
        v = new
        if not np.all(np.isfinite(v)):
            raise OracleError("dense Picard produced non-finite values")
        if step <= cfg.dense_tol:
            return s, v, OracleReport(k, step, n, cfg.dense_tol)
    raise OracleError(f"dense Picard did not reach {cfg.dense_tol:g} in {cfg.max_iter} steps (last step {step:.3e})")


def oracle_scalar_fixed_point(g, lo: float, hi: float, tol: float = 1e-12) -> float:
    """Root of ``x - g(x)`` on ``[lo, hi]`` by bisection."""
    f_lo, f_hi = lo - g(lo), hi - g(hi)
    if f_lo == 0:
        return float(lo)
    if f_hi == 0:
        return float(hi)
    if np.sign(f_lo) == np.sign(f_hi):
        raise OracleError(f"x - g(x) has no sign change on [{lo}, {hi}]")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        f_mid = mid - g(mid)
        if f_mid == 0:
            return mid
        if np.sign(f_mid) == np.sign(f_lo):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def oracle_classical(p: ProblemSpec, n: int, rtol: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
    """``v' = aleph(s, v)`` with an embedded Runge-Kutta pair (order 5 with order-4 control).

    Only meaningful when ``psi`` vanishes and ``aleph`` ignores ``w``.
    """
    s = p.s0 + np.arange(n + 1) * (p.a / n)
    sol = solve_ivp(lambda t, y: [p.aleph(t, y[0], 0.0)], (s[0], s[-1]), [p.v0],
                    method="RK45", t_eval=s, rtol=rtol, atol=rtol)
    if not sol.success:
        raise OracleError(f"classical integrator failed: {sol.message}")
    return s, sol.y[0]


# -- golden files ---------------------------------------------------------------------------


def write_golden(path, header: dict, columns: dict) -> None:
    header = dict(header, schema=GOLDEN_SCHEMA)
    text = "# " + json.dumps(header, sort_keys=True) + "\n" + format_csv(columns)
    Path(path).write_text(text, encoding="utf-8")


def read_golden(path) -> tuple[dict, dict]:
    text = Path(path).read_text(encoding="utf-8")
    first = text.split("\n", 1)[0]
    if not first.startswith("# "):
        raise ConfigError(f"{path}: missing provenance header")
    return json.loads(first[2:]), read_csv(text)


def _resolve(path: Path, header: dict) -> Path:
    return (path.parent / header["scenario"]).resolve()


def _gen_oracle_solve(sc, header):
    cfg = OracleConfig(header["dense_n"], header["dense_tol"])
    n = header["n"]
    if not cfg.covers(n):
        raise OracleError(f"dense_n={cfg.dense_n} does not nest a production grid of n={n}")
    s, v, _ = oracle_solve(sc.problem, cfg)
    stride = cfg.dense_n // n
    return {"s": s[::stride], "v": v[::stride]}


def _gen_bracket(sc, header):
    from .monotone import iterate_extremal
    from .solver import SolverConfig

    b = sc.bracket
    sig, rho = b.initial(sc.problem, header["n"])
    cfg = SolverConfig(tol=header["tol"], max_inner=sc.solver.max_inner, inner_tol=sc.solver.inner_tol)
    rep = iterate_extremal(sc.problem, sig, rho, header["bracket_kind"], cfg,
                           width_tol=b.width_tol, max_steps=b.max_steps, tol_defect=b.tol_defect)
    return {"t": np.arange(len(rep.width_history)), "width": np.array(rep.width_history)}


def _gen_mixed_defects(sc, header):
    """Differential defects of the initial bracket from the oracle derivative on the dense grid."""
    p = sc.problem
    cfg = OracleConfig(header["dense_n"])
    n = header["n"]
    if not cfg.covers(n):
        raise OracleError(f"dense_n={cfg.dense_n} does not nest a production grid of n={n}")
    sig, rho = sc.bracket.initial(p, cfg.dense_n)
    s = sig.grid.nodes
    out = {"s": s}
    pairs = {"sigma": (sig, sig, rho), "rho": (rho, rho, sig)}
    if header["bracket_kind"] == "B":
        pairs = {"sigma": (sig, rho, sig), "rho": (rho, sig, rho)}
    for name, (x, inc, dec) in pairs.items():
        ax = _composer(p, s, x.values)
        ai = _composer(p, s, inc.values)
        ad = _composer(p, s, dec.values)
        xw = ax(x.values)
        diff = x.values - p.psi(s, x.values, xw)
        load = p.aleph1(s, inc.values, ai(inc.values)) + p.aleph2(s, dec.values, ad(dec.values))
        out[name] = oracle_rl_derivative_samples(diff * np.ones_like(s), p.alpha, p.a) - load
    stride = cfg.dense_n // n
    return {k: v[::stride] for k, v in out.items()}


def _gen_fixed_point(sc, header):
    from .expr import Expression

    g = Expression.parse(header["g"])
    x = oracle_scalar_fixed_point(lambda x: g(0.0, x, 0.0), header["lo"], header["hi"])
    return {"x": np.array([x])}


GENERATORS = {
    "oracle_solve": _gen_oracle_solve,
    "bracket_widths": _gen_bracket,
    "mixed_defects": _gen_mixed_defects,
    "fixed_point": _gen_fixed_point,
}


def generate(kind: str, scenario_path, golden_path, **params) -> None:
    """Run a generator and write a fresh golden file with provenance."""
    from .scenario import file_digest

    golden_path = Path(golden_path)
    header = {"kind": kind, "generated": _dt.date.today().isoformat(), **params}
    if scenario_path is not None:
        header["scenario"] = Path(os.path.relpath(Path(scenario_path).resolve(), golden_path.parent.resolve())).as_posix()
        header["sha256"] = file_digest(scenario_path)
    write_golden(golden_path, header, _run(header, golden_path))


def _run(header: dict, golden_path: Path) -> dict:
    from .scenario import file_digest, load

    gen = GENERATORS.get(header["kind"])
    if gen is None:
        raise OracleError(f"unknown golden kind {header['kind']!r}")
    sc = None
    if "scenario" in header:
        sc_path = _resolve(golden_path, header)
        if file_digest(sc_path) != header["sha256"]:
            raise OracleError(f"{sc_path} changed since the golden file was generated")
        sc = load(sc_path)
    return gen(sc, header)


def regenerate_text(path) -> str:
    """File contents a rerun of the recorded generator would produce."""
    path = Path(path)
    header, _ = read_golden(path)
    first = path.read_text(encoding="utf-8").split("\n", 1)[0]
    return first + "\n" + format_csv(_run(header, path))


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="python -m fihde.oracle", description="check or rebuild golden files")
    ap.add_argument("action", choices=("check", "regen"))
    ap.add_argument("files", nargs="+")
    args = ap.parse_args(argv)
    status = 0
    for f in args.files:
        text = regenerate_text(f)
        same = text == Path(f).read_text(encoding="utf-8")
        if args.action == "regen":
            Path(f).write_text(text, encoding="utf-8")
            print(f"{f}: {'unchanged' if same else 'rewritten'}")
        else:
            print(f"{f}: {'identical' if same else 'DIFFERS'}")
            status |= 0 if same else 1
    return status


if __name__ == "__main__":
    sys.exit(main())
