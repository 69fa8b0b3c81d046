"""Monotone iteration between a lower and an upper solution.

Two schemes are provided.  Both freeze the load at the previous pair and
solve an implicit hybrid equation for each new curve:

* kind ``A`` keeps each curve on its own side: the lower curve is driven by
  ``aleph1(sigma) + aleph2(rho)`` and the upper one by ``aleph1(rho) +
  aleph2(sigma)``.  The chain ``sigma_t <= sigma_{t+1} <= rho_{t+1} <= rho_t``
  must hold at every step.
* kind ``B`` crosses the increasing part: ``aleph1(rho) + aleph2(sigma)`` for
  sigma and ``aleph1(sigma) + aleph2(rho)`` for rho.  Each sequence then
  alternates around the solution: even iterates of sigma climb from below,
  odd ones descend from above, and rho does the opposite.

Lower/upper inequalities are evaluated with the discrete Riemann-Liouville
derivative at interior nodes.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, MonotonicityError, PreconditionError
from .fraccalc import GridFunction, rl_derivative, rl_integral, self_compose
from .problem import ProblemSpec
from .solver import SolverConfig, solve_implicit_pointwise

log = logging.getLogger(__name__)

KIND_B_INDEXING_NOTE = (
    "one cross-coupled step per index t; the four limits are read off the even "
    "and odd subsequences"
)
KIND_A_LIMIT_NOTE = "limit residuals use aleph1 + aleph2 exactly as in the update equations"


def _kind(kind) -> str:
    k = str(getattr(kind, "value", kind)).upper()
    if k not in ("A", "B"):
        raise ConfigError(f"iteration kind must be 'A' or 'B', got {kind!r}")
    return k


def _on_problem_grid(p: ProblemSpec, *fs: GridFunction):
    for f in fs:
        if f.grid != p.grid(f.grid.n) or f.grid != fs[0].grid:
            raise DataError("curves must share the problem grid")


def default_tol_order(cfg: SolverConfig, h: float) -> float:
    """Slack for pointwise orderings: ten times the solver tolerance plus an ``h**2`` floor."""
    return 10.0 * (cfg.tol + h * h)


# -- lower / upper verification ---------------------------------------------------


@dataclass
class Inequality:
    name: str
    worst_violation: float  # positive = violated by this much beyond tolerance
    node: int
    s: float
    passes: bool


@dataclass
class DefectReport:
    label: str
    tol_defect: float
    inequalities: list
    defects: dict = field(default_factory=dict)  # per-curve signed differential defects
    mixed_solution: bool = False

    @property
    def passes(self) -> bool:
        return all(q.passes for q in self.inequalities)

    @property
    def worst_violation(self) -> float:
        return max(q.worst_violation for q in self.inequalities)

    @property
    def witness(self) -> dict:
        q = max(self.inequalities, key=lambda q: q.worst_violation)
        return {"inequality": q.name, "node": q.node, "s": q.s}

    def __getitem__(self, name: str) -> Inequality:
        for q in self.inequalities:
            if q.name == name:
                return q
        raise KeyError(name)

    def to_json(self, with_defects: bool = False) -> dict:
        out = {
            "schema": 1,
            "label": self.label,
            "passes": self.passes,
            "worst_violation": self.worst_violation,
            "witness": self.witness,
            "tol_defect": self.tol_defect,
            "mixed_solution": self.mixed_solution,
            "inequalities": [vars(q) for q in self.inequalities],
        }
        if with_defects:
            out["defects"] = {k: v.tolist() for k, v in self.defects.items()}
        return out


def _hybrid_parts(p: ProblemSpec, f: GridFunction):
    comp, _ = self_compose(f, p.domain_policy)
    s = f.grid.nodes
    return s, f.values, comp.values


def differential_defect(p: ProblemSpec, f: GridFunction, load: np.ndarray) -> np.ndarray:
    """``D^alpha[f - psi(s, f, f(f))] - load`` at every node."""
    s, fv, fw = _hybrid_parts(p, f)
    x = f.with_values(fv - p.psi(s, fv, fw))
    return rl_derivative(x, p.alpha).values - load


def _load(p: ProblemSpec, inc: GridFunction, dec: GridFunction) -> np.ndarray:
    """``aleph1`` along ``inc`` plus ``aleph2`` along ``dec``."""
    s, iv, iw = _hybrid_parts(p, inc)
    _, dv, dw = _hybrid_parts(p, dec)
    return p.aleph1(s, iv, iw) + p.aleph2(s, dv, dw)


def _side_checks(name: str, d: np.ndarray, sign: float, start_gap: float, s: np.ndarray, tol: float):
    """Interior check of ``sign * d <= tol`` and endpoint check of ``start_gap <= 0``."""
    interior = sign * d[1:-1] - tol
    k = int(np.argmax(interior)) + 1
    worst = float(interior[k - 1])
    return [
        Inequality(f"{name}_differential", worst, k, float(s[k]), bool(worst <= 0)),
        Inequality(f"{name}_start", float(start_gap), 0, float(s[0]), bool(start_gap <= 0)),
    ]


def verify_lower_upper(p: ProblemSpec, candidate: GridFunction, role: str, tol_defect: float = 1e-6) -> DefectReport:
    """Check ``candidate`` as a lower solution (``D^alpha[...] <= aleph``, start ``<= v0``)
    or an upper solution (``>=``, start ``>= v0``)."""
    _on_problem_grid(p, candidate)
    role = role.lower()
    if role not in ("lower", "upper"):
        raise ConfigError(f"role must be 'lower' or 'upper', got {role!r}")
    d = differential_defect(p, candidate, _load(p, candidate, candidate))
    sign = 1.0 if role == "lower" else -1.0
    start_gap = sign * (candidate.values[0] - p.v0)
    checks = _side_checks(role, d, sign, start_gap, candidate.grid.nodes, tol_defect)
    return DefectReport(role, tol_defect, checks, {role: d})


def verify_mixed_pair(p: ProblemSpec, sigma: GridFunction, rho: GridFunction, kind="A",
                      tol_defect: float = 1e-6) -> DefectReport:
    """Coupled lower/upper inequalities of a pair, for either kind.

    The pair is flagged as a mixed *solution* when all four relations hold
    with equality up to ``tol_defect``.
    """
    _on_problem_grid(p, sigma, rho)
    k = _kind(kind)
    if k == "A":
        load_s, load_r = _load(p, sigma, rho), _load(p, rho, sigma)
    else:
        load_s, load_r = _load(p, rho, sigma), _load(p, sigma, rho)
    d_s = differential_defect(p, sigma, load_s)
    d_r = differential_defect(p, rho, load_r)
    s = sigma.grid.nodes
    checks = _side_checks("sigma", d_s, 1.0, sigma.values[0] - p.v0, s, tol_defect)
    checks += _side_checks("rho", d_r, -1.0, p.v0 - rho.values[0], s, tol_defect)
    equal = (
        np.all(np.abs(d_s[1:-1]) <= tol_defect)
        and np.all(np.abs(d_r[1:-1]) <= tol_defect)
        and abs(sigma.values[0] - p.v0) <= tol_defect
        and abs(rho.values[0] - p.v0) <= tol_defect
    )
    return DefectReport(f"mixed-{k}", tol_defect, checks, {"sigma": d_s, "rho": d_r}, bool(equal))


# -- monotone steps -----------------------------------------------------------------


@dataclass(frozen=True)
class BracketState:
    sigma: GridFunction
    rho: GridFunction
    t: int = 0
    width: float = float("nan")
    ordered: bool = True

    @classmethod
    def initial(cls, sigma: GridFunction, rho: GridFunction, tol_order: float = 0.0) -> "BracketState":
        width = sigma.sup_distance(rho)
        return cls(sigma, rho, 0, width, bool(np.all(sigma.values <= rho.values + tol_order)))


def _frozen_solve(p: ProblemSpec, prev: GridFunction, inc: GridFunction, dec: GridFunction,
                  cfg: SolverConfig) -> GridFunction:
    """Next iterate: ``x = c + psi(s, x, x(x)) + I^alpha[aleph1(inc) + aleph2(dec)]``."""
    forcing = rl_integral(prev.with_values(_load(p, inc, dec)), p.alpha)
    g = forcing.with_values(p.initial_constant(prev) + forcing.values)
    return solve_implicit_pointwise(p, g, cfg, guess=prev)


def _first_violation(lo: np.ndarray, hi: np.ndarray, tol: float):
    excess = lo - hi
    k = int(np.argmax(excess))
    return (k, float(excess[k])) if excess[k] > tol else None


def step_type_a(p: ProblemSpec, state: BracketState, cfg: SolverConfig,
                tol_order: float | None = None) -> BracketState:
    """One kind-A step; raises :class:`MonotonicityError` if the chain breaks."""
    if not state.ordered:
        raise MonotonicityError(state.t, -1, float("nan"), "sigma_t <= rho_t (input state)")
    sig, rho = state.sigma, state.rho
    if tol_order is None:
        tol_order = default_tol_order(cfg, sig.grid.h)
    sig_n = _frozen_solve(p, sig, sig, rho, cfg)
    rho_n = _frozen_solve(p, rho, rho, sig, cfg)
    t = state.t + 1
    for lo, hi, rel in (
        (sig, sig_n, "sigma_t <= sigma_t+1"),
        (sig_n, rho_n, "sigma_t+1 <= rho_t+1"),
        (rho_n, rho, "rho_t+1 <= rho_t"),
    ):
        hit = _first_violation(lo.values, hi.values, tol_order)
        if hit is not None:
            raise MonotonicityError(t, hit[0], hit[1], rel)
    return BracketState(sig_n, rho_n, t, sig_n.sup_distance(rho_n), True)


def step_type_b(p: ProblemSpec, state: BracketState, cfg: SolverConfig,
                tol_order: float | None = None) -> BracketState:
    """One kind-B (cross-coupled) step.  Orderings are checked by the driver."""
    sig, rho = state.sigma, state.rho
    if tol_order is None:
        tol_order = default_tol_order(cfg, sig.grid.h)
    sig_n = _frozen_solve(p, sig, rho, sig, cfg)
    rho_n = _frozen_solve(p, rho, sig, rho, cfg)
    t = state.t + 1
    # even steps: sigma below rho; odd steps: the two have swapped sides
    lo, hi = (sig_n, rho_n) if t % 2 == 0 else (rho_n, sig_n)
    ordered = bool(np.all(lo.values <= hi.values + tol_order))
    return BracketState(sig_n, rho_n, t, sig_n.sup_distance(rho_n), ordered)


# -- driver -----------------------------------------------------------------------------


@dataclass
class BracketReport:
    kind: str
    converged: bool
    steps: int
    width_history: list
    monotonicity_violations: list
    sigma: GridFunction
    rho: GridFunction
    tol_order: float
    iterates: list = field(default_factory=list)  # (t, sigma_t, rho_t), possibly thinned
    limits: dict = field(default_factory=dict)
    limit_residuals: dict = field(default_factory=dict)
    precondition: DefectReport | None = None
    aborted: bool = False
    interleave_precondition: bool | None = None  # kind B: sigma0 <= sigma2 and rho2 <= rho0
    notes: list = field(default_factory=list)

    @property
    def clean(self) -> bool:
        return not self.monotonicity_violations

    def to_json(self) -> dict:
        return {
            "schema": 1,
            "kind": self.kind,
            "converged": self.converged,
            "aborted": self.aborted,
            "steps": self.steps,
            "final_width": self.width_history[-1] if self.width_history else None,
            "width_history": self.width_history,
            "tol_order": self.tol_order,
            "monotonicity_violations": [
                {"t": t, "node": n, "magnitude": m, "relation": r} for t, n, m, r in self.monotonicity_violations
            ],
            "limit_residuals": self.limit_residuals,
            "interleave_precondition": self.interleave_precondition,
            "precondition": None if self.precondition is None else self.precondition.to_json(),
            "notes": self.notes,
        }


def limit_residual(p: ProblemSpec, x: GridFunction, inc: GridFunction, dec: GridFunction) -> float:
    """Integral-form residual of ``x = c + psi(x) + I^alpha[aleph1(inc) + aleph2(dec)]``."""
    s, xv, xw = _hybrid_parts(p, x)
    forcing = rl_integral(x.with_values(_load(p, inc, dec)), p.alpha)
    rhs = p.initial_constant(x) + p.psi(s, xv, xw) + forcing.values
    return float(np.max(np.abs(xv - rhs)))


def _interleave_violations(seq: list, t: int, tol: float, even_rises: bool):
    """Orderings a new member ``seq[t]`` must satisfy in an alternating sequence.

    With ``even_rises`` the even members climb while the odd ones descend, and
    every even member lies below every odd member.  Otherwise the roles swap.
    """
    cur = seq[t].values
    rising = (t % 2 == 0) == even_rises
    out = []
    if t >= 2:
        prev = seq[t - 2].values
        lo, hi = (prev, cur) if rising else (cur, prev)
        hit = _first_violation(lo, hi, tol)
        if hit:
            out.append((t, hit[0], hit[1], f"{'rising' if rising else 'falling'} subsequence at t={t}"))
    other = seq[t - 1].values
    lo, hi = (cur, other) if rising else (other, cur)
    hit = _first_violation(lo, hi, tol)
    if hit:
        out.append((t, hit[0], hit[1], f"lower subsequence below upper at t={t}"))
    return out


def iterate_extremal(p: ProblemSpec, sigma0: GridFunction, rho0: GridFunction, kind, cfg: SolverConfig,
                     width_tol: float = 1e-6, max_steps: int = 50, *, force: bool = False,
                     tol_defect: float = 1e-6, tol_order: float | None = None,
                     keep_every: int = 1) -> BracketReport:
    """Run the kind-A or kind-B scheme from ``(sigma0, rho0)``.

    The initial pair must pass :func:`verify_mixed_pair` unless ``force`` is
    set.  Kind A stops at the first broken ordering; kind B records
    interleaving violations and carries on.
    """
    _on_problem_grid(p, sigma0, rho0)
    k = _kind(kind)
    h = sigma0.grid.h
    if tol_order is None:
        tol_order = default_tol_order(cfg, h)
    pre = verify_mixed_pair(p, sigma0, rho0, k, tol_defect)
    if not pre.passes:
        msg = f"initial pair is not a kind-{k} lower/upper pair: {pre.witness}"
        if not force:
            raise PreconditionError(msg)
        warnings.warn(msg + " (continuing because force=True)", stacklevel=2)

    state = BracketState.initial(sigma0, rho0, tol_order)
    if k == "A" and not state.ordered:
        hit = _first_violation(sigma0.values, rho0.values, tol_order)
        if not force:
            raise PreconditionError(f"sigma0 > rho0 at node {hit[0]} by {hit[1]:.3e}")
    report = BracketReport(
        kind=k, converged=False, steps=0, width_history=[state.width], monotonicity_violations=[],
        sigma=sigma0, rho=rho0, tol_order=tol_order, iterates=[(0, sigma0, rho0)], precondition=pre,
        notes=[KIND_A_LIMIT_NOTE if k == "A" else KIND_B_INDEXING_NOTE],
    )
    if state.width <= width_tol or pre.mixed_solution:
        report.converged = True
        _finish(p, report, [sigma0], [rho0])
        return report

    sigmas, rhos = [sigma0], [rho0]
    step = step_type_a if k == "A" else step_type_b
    for _ in range(max_steps):
        try:
            state = step(p, state, cfg, tol_order)
        except MonotonicityError as err:
            report.monotonicity_violations.append((err.t, err.node, err.magnitude, err.relation))
            report.aborted = True
            log.warning("kind-A chain broken: %s", err)
            break
        t = state.t
        sigmas.append(state.sigma)
        rhos.append(state.rho)
        report.width_history.append(state.width)
        report.steps = t
        if t % keep_every == 0:
            report.iterates.append((t, state.sigma, state.rho))
        if k == "B":
            found = _interleave_violations(sigmas, t, tol_order, even_rises=True)
            found += _interleave_violations(rhos, t, tol_order, even_rises=False)
            for v in found:
                log.warning("kind-B interleaving: %s at node %d by %.3e", v[3], v[1], v[2])
            report.monotonicity_violations.extend(found)
            if t == 2:
                report.interleave_precondition = bool(
                    np.all(sigmas[0].values <= sigmas[2].values + tol_order)
                    and np.all(rhos[2].values <= rhos[0].values + tol_order)
                )
        if _converged(k, sigmas, rhos, width_tol):
            report.converged = True
            break
    if report.iterates[-1][0] != len(sigmas) - 1:
        report.iterates.append((len(sigmas) - 1, sigmas[-1], rhos[-1]))
    _finish(p, report, sigmas, rhos)
    return report


def _converged(k: str, sigmas: list, rhos: list, width_tol: float) -> bool:
    t = len(sigmas) - 1
    width = sigmas[t].sup_distance(rhos[t])
    if k == "A":
        return width <= width_tol
    step = max(sigmas[t].sup_distance(sigmas[t - 1]), rhos[t].sup_distance(rhos[t - 1]))
    if width <= width_tol and step <= width_tol:
        return True
    if t < 3:
        return False
    return max(
        sigmas[t].sup_distance(sigmas[t - 2]), sigmas[t - 1].sup_distance(sigmas[t - 3]),
        rhos[t].sup_distance(rhos[t - 2]), rhos[t - 1].sup_distance(rhos[t - 3]),
    ) <= width_tol


def _finish(p: ProblemSpec, report: BracketReport, sigmas: list, rhos: list):
    report.sigma, report.rho = sigmas[-1], rhos[-1]
    if report.kind == "A":
        sig, rho = sigmas[-1], rhos[-1]
        report.limits = {"sigma": sig, "rho": rho}
        report.limit_residuals = {
            "sigma": limit_residual(p, sig, sig, rho),
            "rho": limit_residual(p, rho, rho, sig),
        }
        return
    t = len(sigmas) - 1
    even, odd = (t, t - 1) if t % 2 == 0 else (t - 1, t)
    odd = max(odd, 0)
    sig, rho = sigmas[even], rhos[even]
    sig_d, rho_d = sigmas[odd], rhos[odd]
    report.limits = {"sigma": sig, "rho": rho, "sigma_diamond": sig_d, "rho_diamond": rho_d}
    # Fixed-point relations of the two-step map sigma_{t+1} = F(rho_t, sigma_t).
    report.limit_residuals = {
        "sigma": limit_residual(p, sig, rho_d, sig_d),
        "sigma_diamond": limit_residual(p, sig_d, rho, sig),
        "rho": limit_residual(p, rho, sig_d, rho_d),
        "rho_diamond": limit_residual(p, rho_d, sig, rho),
    }


def bracket_violation(lower: GridFunction, v: GridFunction, upper: GridFunction) -> float:
    """Largest amount by which ``v`` leaves ``[lower, upper]`` (negative when strictly inside)."""
    return float(max(np.max(lower.values - v.values), np.max(v.values - upper.values)))


# -- uniqueness ------------------------------------------------------------------------------


@dataclass
class UniquenessReport:
    conditions_hold: bool
    n1_worst: float
    n2_worst: float
    witness: dict
    width: float
    collapse_tol: float

    @property
    def collapsed(self) -> bool:
        return self.width <= self.collapse_tol

    @property
    def passes(self) -> bool:
        return self.conditions_hold and self.collapsed

    def to_json(self) -> dict:
        out = dict(vars(self))
        out.update(schema=1, collapsed=self.collapsed, passes=self.passes)
        return out


def check_uniqueness(p: ProblemSpec, sigma: GridFunction, rho: GridFunction, collapse_tol: float = 1e-6,
                     n_s: int = 9, n_v: int = 41, tol_check: float = 1e-12) -> UniquenessReport:
    """Sample the one-sided growth bounds on aleph1/aleph2 over the bracket range.

    For ``v1 >= v2`` both ``aleph_i(v1) - aleph_i(v2) <= N_i [(v1 - psi(v1)) - (v2 - psi(v2))]``
    are required; when they hold the bracket must have collapsed.
    """
    if p.n1 is None or p.n2 is None:
        raise ConfigError("uniqueness check needs both N1 and N2")
    _on_problem_grid(p, sigma, rho)
    lo = float(min(sigma.values.min(), rho.values.min()))
    hi = float(max(sigma.values.max(), rho.values.max()))
    width = sigma.sup_distance(rho)
    if hi <= lo:
        return UniquenessReport(True, 0.0, 0.0, {}, width, collapse_tol)
    s_ax = np.linspace(p.s0, p.s0 + p.a, n_s)
    v_ax = np.linspace(lo, hi, n_v)
    i, j = np.triu_indices(n_v, k=1)
    S, W, K = np.meshgrid(s_ax, v_ax, np.arange(i.size), indexing="ij")
    S, W, K = S.ravel(), W.ravel(), K.ravel()
    v_small, v_big = v_ax[i][K], v_ax[j][K]
    dx = (v_big - p.psi(S, v_big, W)) - (v_small - p.psi(S, v_small, W))
    c1 = p.aleph1(S, v_big, W) - p.aleph1(S, v_small, W) - p.n1 * dx - tol_check
    c2 = p.aleph2(S, v_big, W) - p.aleph2(S, v_small, W) - p.n2 * dx - tol_check
    k1, k2 = int(np.argmax(c1)), int(np.argmax(c2))
    kw = k1 if c1[k1] >= c2[k2] else k2
    witness = {"s": float(S[kw]), "v": float(v_big[kw]), "z": float(v_small[kw]), "w": float(W[kw])}
    holds = bool(c1[k1] <= 0 and c2[k2] <= 0)
    return UniquenessReport(holds, float(c1[k1]), float(c2[k2]), witness, width, collapse_tol)
