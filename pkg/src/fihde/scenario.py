"""Scenario files: TOML with one table per concern.

Parsing is complete before anything is computed and every unknown key is an
error.  :func:`dumps` writes the normalized form (all defaults filled in,
expressions in canonical spelling), so ``loads(dumps(sc)) == sc``.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomli
import tomli_w

from .errors import ConfigError
from .expr import ExprError, Expression
from .fraccalc import DomainPolicy, GridFunction, Interp
from .problem import ProblemSpec, SamplingBox
from .solver import SolverConfig

_PROBLEM_KEYS = {
    "alpha": float, "s0": float, "a": float, "v0": float,
    "psi": str, "aleph1": str, "aleph2": str,
    "ell": float, "M": float, "kappa": float, "N1": float, "N2": float,
    "domain_policy": str, "interp": str,
}
_PROBLEM_REQUIRED = ("alpha", "a", "v0", "psi", "aleph1", "ell", "M", "kappa")
_SOLVER_KEYS = {
    "n": int, "tol": float, "max_outer": int, "max_inner": int, "inner_tol": float, "relaxation": float,
}
_BRACKET_KEYS = {
    "kind": str, "sigma0": str, "rho0": str, "width_tol": float, "max_steps": int,
    "tol_defect": float, "keep_every": int,
}
_HYPOTHESES_KEYS = {
    "v_lo": float, "v_hi": float, "n_s": int, "n_v": int, "w_lo": float, "w_hi": float, "n_w": int,
}
_CONVERGENCE_KEYS = {"grids": list}
_OUTPUT_KEYS = {"dir": str}
_SECTIONS = {
    "problem": _PROBLEM_KEYS,
    "solver": _SOLVER_KEYS,
    "bracket": _BRACKET_KEYS,
    "hypotheses": _HYPOTHESES_KEYS,
    "convergence": _CONVERGENCE_KEYS,
    "output": _OUTPUT_KEYS,
}


@dataclass(frozen=True)
class BracketSpec:
    kind: str = "A"
    sigma0: Expression | None = None
    rho0: Expression | None = None
    width_tol: float = 1e-6
    max_steps: int = 50
    tol_defect: float = 1e-6
    keep_every: int = 1

    def initial(self, p: ProblemSpec, n: int) -> tuple[GridFunction, GridFunction]:
        if self.sigma0 is None or self.rho0 is None:
            raise ConfigError("[bracket] needs both sigma0 and rho0")
        g = p.grid(n)
        s = g.nodes
        curves = []
        for e in (self.sigma0, self.rho0):
            vals = np.broadcast_to(np.asarray(e(s, 0.0, 0.0), dtype=float), s.shape)
            curves.append(GridFunction(g, vals, p.interp))
        return curves[0], curves[1]


@dataclass(frozen=True)
class Scenario:
    name: str
    problem: ProblemSpec
    n: int = 512
    solver: SolverConfig = field(default_factory=SolverConfig)
    bracket: BracketSpec = field(default_factory=BracketSpec)
    box: SamplingBox | None = None
    grids: tuple = (256, 512, 1024, 2048)
    out_dir: str = "out"

    @property
    def sampling_box(self) -> SamplingBox:
        """Explicit ``[hypotheses]`` box, else ``v0 +- 1``."""
        if self.box is not None:
            return self.box
        return SamplingBox(self.problem.v0 - 1.0, self.problem.v0 + 1.0)


def _typed(section: str, key: str, val, kind):
    if kind is float and isinstance(val, int) and not isinstance(val, bool):
        return float(val)
    if kind is list and isinstance(val, list):
        if not val or not all(isinstance(x, int) and not isinstance(x, bool) and x >= 1 for x in val):
            raise ConfigError(f"[{section}] {key} must be a non-empty list of positive integers")
        return val
    if type(val) is not kind:
        raise ConfigError(f"[{section}] {key} must be {kind.__name__}, got {type(val).__name__}")
    return val


def _section(doc: dict, name: str) -> dict:
    raw = doc.get(name, {})
    if not isinstance(raw, dict):
        raise ConfigError(f"[{name}] must be a table")
    allowed = _SECTIONS[name]
    unknown = sorted(set(raw) - set(allowed))
    if unknown:
        raise ConfigError(f"[{name}] unknown key(s): {', '.join(unknown)}")
    return {k: _typed(name, k, v, allowed[k]) for k, v in raw.items()}


def _expr(section: str, key: str, text: str, allowed_vars: set | None = None) -> Expression:
    try:
        e = Expression.parse(text)
    except ExprError as err:
        raise ConfigError(f"[{section}] {key}: {err}") from err
    if allowed_vars is not None:
        from .expr import variables

        extra = variables(e.tree) - allowed_vars
        if extra:
            raise ConfigError(f"[{section}] {key} may only use {sorted(allowed_vars)}, found {sorted(extra)}")
    return e


def _enum(enum_cls, section: str, key: str, text: str):
    try:
        return enum_cls(text)
    except ValueError:
        choices = ", ".join(m.value for m in enum_cls)
        raise ConfigError(f"[{section}] {key} must be one of: {choices}") from None


def from_dict(doc: dict) -> Scenario:
    unknown = sorted(set(doc) - set(_SECTIONS) - {"name"})
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
    name = doc.get("name")
    if not isinstance(name, str) or not name:
        raise ConfigError("scenario needs a non-empty string 'name'")

    pr = _section(doc, "problem")
    missing = [k for k in _PROBLEM_REQUIRED if k not in pr]
    if missing:
        raise ConfigError(f"[problem] missing key(s): {', '.join(missing)}")
    problem = ProblemSpec(
        alpha=pr["alpha"], s0=pr.get("s0", 0.0), a=pr["a"], v0=pr["v0"],
        psi=_expr("problem", "psi", pr["psi"]),
        aleph1=_expr("problem", "aleph1", pr["aleph1"]),
        aleph2=_expr("problem", "aleph2", pr.get("aleph2", "0")),
        ell=pr["ell"], bigM=pr["M"], kappa=pr["kappa"], n1=pr.get("N1"), n2=pr.get("N2"),
        domain_policy=_enum(DomainPolicy, "problem", "domain_policy", pr.get("domain_policy", "clamp")),
        interp=_enum(Interp, "problem", "interp", pr.get("interp", "pchip")),
    )

    so = _section(doc, "solver")
    n = so.pop("n", 512)
    if n < 2:
        raise ConfigError("[solver] n must be >= 2")
    solver = SolverConfig(**so)

    br = _section(doc, "bracket")
    kind = br.pop("kind", "A").upper()
    if kind not in ("A", "B"):
        raise ConfigError("[bracket] kind must be 'A' or 'B'")
    for key in ("sigma0", "rho0"):
        if key in br:
            br[key] = _expr("bracket", key, br[key], {"s"})
    bracket = BracketSpec(kind=kind, **br)

    hy = _section(doc, "hypotheses")
    box = None
    if hy:
        if "v_lo" not in hy or "v_hi" not in hy:
            raise ConfigError("[hypotheses] needs v_lo and v_hi")
        box = SamplingBox(**hy)

    grids = tuple(_section(doc, "convergence").get("grids", (256, 512, 1024, 2048)))
    out_dir = _section(doc, "output").get("dir", "out")
    return Scenario(name, problem, n, solver, bracket, box, grids, out_dir)


def loads(text: str) -> Scenario:
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as err:
        raise ConfigError(f"scenario is not valid TOML: {err}") from err
    try:
        return from_dict(doc)
    except (TypeError, ValueError) as err:
        if isinstance(err, ConfigError):
            raise
        raise ConfigError(str(err)) from err


def load(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as err:
        raise ConfigError(f"cannot read scenario {path}: {err.strerror}") from err
    return loads(text)


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def to_dict(sc: Scenario) -> dict:
    p = sc.problem
    problem = {
        "alpha": p.alpha, "s0": p.s0, "a": p.a, "v0": p.v0,
        "psi": str(p.psi), "aleph1": str(p.aleph1), "aleph2": str(p.aleph2),
        "ell": p.ell, "M": p.bigM, "kappa": p.kappa,
        "domain_policy": p.domain_policy.value, "interp": p.interp.value,
    }
    if p.n1 is not None:
        problem["N1"] = p.n1
    if p.n2 is not None:
        problem["N2"] = p.n2
    c = sc.solver
    solver = {"n": sc.n, "tol": c.tol, "max_outer": c.max_outer, "max_inner": c.max_inner,
              "inner_tol": c.inner_tol, "relaxation": c.relaxation}
    b = sc.bracket
    bracket = {"kind": b.kind, "width_tol": b.width_tol, "max_steps": b.max_steps,
               "tol_defect": b.tol_defect, "keep_every": b.keep_every}
    if b.sigma0 is not None:
        bracket["sigma0"] = str(b.sigma0)
    if b.rho0 is not None:
        bracket["rho0"] = str(b.rho0)
    out = {"name": sc.name, "problem": problem, "solver": solver, "bracket": bracket}
    if sc.box is not None:
        out["hypotheses"] = {k: v for k, v in vars(sc.box).items() if v is not None}
    out["convergence"] = {"grids": list(sc.grids)}
    out["output"] = {"dir": sc.out_dir}
    return out


def dumps(sc: Scenario) -> str:
    return tomli_w.dumps(to_dict(sc))


def normalize(sc: Scenario) -> Scenario:
    """Canonical form: expressions re-parsed from their printed spelling."""
    return loads(dumps(sc))
