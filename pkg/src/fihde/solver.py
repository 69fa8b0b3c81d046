"""Picard iteration on the hybrid integral equation.

A solution of the differential problem is a fixed point of

    G(v)(s) = c + psi(s, v(s), v(v(s))) + I^alpha[aleph(., v, v(v))](s),
    c = v0 - psi(s0, v0, v(v0)),

which is the sum of the hybrid part ``psi`` and the integral part ``c +
I^alpha aleph``.  Because ``v(v(s))`` couples every node to every other node,
the whole curve is updated at once rather than marched in ``s``.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, SolverError
from .fraccalc import GridFunction, rl_integral, self_compose
from .problem import ProblemSpec

log = logging.getLogger(__name__)

# Picard damping kicks in after this many steps that failed to contract.
_STALL_LIMIT = 10
_DAMPED_RELAXATION = 0.5


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-10
    max_outer: int = 500
    max_inner: int = 200
    inner_tol: float = 1e-13
    relaxation: float = 1.0

    def __post_init__(self):
        if not (self.tol > 0 and self.inner_tol > 0):
            raise ConfigError("tolerances must be positive")
        if self.max_outer < 1 or self.max_inner < 1:
            raise ConfigError("iteration caps must be >= 1")
        if not 0 < self.relaxation <= 1:
            raise ConfigError(f"relaxation must lie in (0, 1], got {self.relaxation}")


@dataclass
class SolveReport:
    converged: bool
    outer_iters: int
    residual_history: list = field(default_factory=list)
    final_residual: float = float("nan")
    escape_nodes: int = 0
    contraction_estimate: float = float("nan")
    relaxation: float = 1.0

    def to_json(self) -> dict:
        out = asdict(self)
        out["schema"] = 1
        return out


def _states(p: ProblemSpec, v: GridFunction):
    w, escaped = self_compose(v, p.domain_policy)
    return v.grid.nodes, v.values, w.values, escaped


def load_integral(p: ProblemSpec, v: GridFunction) -> GridFunction:
    """``I^alpha`` of ``aleph(s, v, v(v))`` along the curve ``v``."""
    s, vv, ww, _ = _states(p, v)
    return rl_integral(v.with_values(p.aleph(s, vv, ww)), p.alpha)


def fihie_rhs(p: ProblemSpec, v: GridFunction, forcing: GridFunction | None = None) -> GridFunction:
    """Apply the integral-equation map ``G`` to ``v``.

    ``forcing`` is the precomputed fractional integral of the load; it is
    computed from ``v`` when omitted.
    """
    s, vv, ww, _ = _states(p, v)
    if forcing is None:
        forcing = rl_integral(v.with_values(p.aleph(s, vv, ww)), p.alpha)
    c = p.initial_constant(v)
    return v.with_values(c + p.psi(s, vv, ww) + forcing.values)


def residual(p: ProblemSpec, v: GridFunction) -> float:
    """Sup-norm defect ``||v - G(v)||`` over the nodes."""
    return float(np.max(np.abs(v.values - fihie_rhs(p, v).values)))


def solve_fihie(p: ProblemSpec, cfg: SolverConfig, v_init: GridFunction | int):
    """Relaxed Picard iteration ``v <- (1 - lam) v + lam G(v)``.

    ``v_init`` may be a grid size, in which case the constant ``v0`` is the
    starting curve.  Returns ``(v, report)``; running out of iterations is
    reported through ``report.converged`` rather than raised.
    """
    if isinstance(v_init, (int, np.integer)):
        v_init = GridFunction.constant(p.grid(int(v_init)), p.v0, p.interp)
    v = v_init
    lam = cfg.relaxation
    history = []
    prev_step = None
    ratio = float("nan")
    stalls = 0
    converged = False
    k = 0
    for k in range(1, cfg.max_outer + 1):
        g = fihie_rhs(p, v)
        res = float(np.max(np.abs(g.values - v.values)))
        history.append(res)
        new = v.with_values((1.0 - lam) * v.values + lam * g.values)
        step = float(np.max(np.abs(new.values - v.values)))
        if prev_step is not None and prev_step > 0:
            ratio = step / prev_step
            stalls = stalls + 1 if ratio >= 1.0 else 0
            if stalls >= _STALL_LIMIT and lam > _DAMPED_RELAXATION:
                log.info("picard stalled for %d steps; relaxation %.2f -> %.2f", stalls, lam, _DAMPED_RELAXATION)
                lam = _DAMPED_RELAXATION
                stalls = 0
        prev_step = step
        v = new
        if step <= cfg.tol:
            converged = True
            break
    final = residual(p, v)
    history.append(final)
    _, escaped = self_compose(v, p.domain_policy)
    report = SolveReport(
        converged=converged,
        outer_iters=k,
        residual_history=history,
        final_residual=final,
        escape_nodes=int(escaped.size),
        contraction_estimate=ratio,
        relaxation=lam,
    )
    if not converged:
        log.warning("picard did not converge in %d steps (residual %.3e)", k, final)
    return v, report


def solve_implicit_pointwise(p: ProblemSpec, g: GridFunction, cfg: SolverConfig,
                             guess: GridFunction | None = None) -> GridFunction:
    """Solve ``w(s) = g(s) + psi(s, w(s), w(w(s)))`` by damped fixed-point iteration.

    When hypotheses a1 and a2 hold the map is a contraction, so the solution is unique.
    Raises :class:`SolverError` if ``inner_tol`` is not reached within
    ``max_inner`` sweeps.
    """
    w = g if guess is None else guess
    lam = cfg.relaxation
    s = g.grid.nodes
    diff = float("inf")
    for _ in range(cfg.max_inner):
        comp, _ = self_compose(w, p.domain_policy)
        target = g.values + p.psi(s, w.values, comp.values)
        new_vals = (1.0 - lam) * w.values + lam * target
        diff = float(np.max(np.abs(new_vals - w.values)))
        w = w.with_values(new_vals)
        if diff <= cfg.inner_tol:
            return w
    raise SolverError(f"implicit solve stalled after {cfg.max_inner} sweeps (step {diff:.3e})", diff)
