"""Problem definition and sampled checks of the standing hypotheses.

A check never proves anything: it evaluates the hypothesis on a fixed
lattice inside a sampling box and reports the worst violation it saw,
together with the point where it occurred.  Lattices are deterministic, so
repeated runs give identical reports.

The third slot ``w`` (the value of ``v(v(s))``) is handled in one of two
ways.  Without a candidate function it is an independent axis of the box and
both members of a pair share the same ``w``.  With a candidate ``tie`` the
slot follows the sampled state, ``w = tie(v)`` (clamped to the interval).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, DataError
from .expr import EvalError, Expression
from .fraccalc import DomainPolicy, Grid, GridFunction, Interp, gamma_fn


@dataclass(frozen=True)
class ProblemSpec:
    """``D^alpha[v - psi(s, v, v(v))] = aleph1 + aleph2`` on ``[s0, s0 + a]``, ``v(s0) = v0``."""

    alpha: float
    s0: float
    a: float
    v0: float
    psi: Expression
    aleph1: Expression
    aleph2: Expression
    ell: float
    bigM: float
    kappa: float
    n1: float | None = None
    n2: float | None = None
    domain_policy: DomainPolicy = DomainPolicy.Clamp
    interp: Interp = Interp.PchipMonotone

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not self.a > 0:
            raise ConfigError(f"interval length a must be positive, got {self.a}")
        for name in ("s0", "v0"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(f"{name} must be finite")
        if not (self.ell > 0 and self.bigM > 0):
            raise ConfigError("ell and M must be positive")
        if self.ell > self.bigM:
            raise ConfigError(f"need ell <= M, got ell={self.ell}, M={self.bigM}")
        if not self.kappa > 0:
            raise ConfigError(f"kappa must be positive, got {self.kappa}")
        for name in ("n1", "n2"):
            val = getattr(self, name)
            if val is not None and not val > 0:
                raise ConfigError(f"{name} must be positive when given, got {val}")

    @classmethod
    def from_strings(cls, *, psi: str, aleph1: str, aleph2: str = "0", **kw) -> "ProblemSpec":
        return cls(
            psi=Expression.parse(psi),
            aleph1=Expression.parse(aleph1),
            aleph2=Expression.parse(aleph2),
            **kw,
        )

    def grid(self, n: int) -> Grid:
        return Grid(self.s0, self.a, n)

    def aleph(self, s, v, w):
        return self.aleph1(s, v, w) + self.aleph2(s, v, w)

    def initial_constant(self, v: GridFunction) -> float:
        """``v0 - psi(s0, v0, v(v0))`` with ``v(v0)`` evaluated at the clamped ``v0``."""
        from .fraccalc import compose_at

        return self.v0 - self.psi(self.s0, self.v0, compose_at(v, self.v0, self.domain_policy))


@dataclass(frozen=True)
class SamplingBox:
    """Lattice on which hypotheses are sampled.

    The ``w`` axis defaults to the ``v`` range and resolution.
    """

    v_lo: float
    v_hi: float
    n_s: int = 9
    n_v: int = 41
    w_lo: float | None = None
    w_hi: float | None = None
    n_w: int | None = None

    def __post_init__(self):
        if not self.v_lo < self.v_hi:
            raise ConfigError(f"sampling box needs v_lo < v_hi, got [{self.v_lo}, {self.v_hi}]")
        if self.n_v < 2 or self.n_s < 1:
            raise ConfigError("sampling box needs n_v >= 2 and n_s >= 1")

    def s_axis(self, p: ProblemSpec) -> np.ndarray:
        if self.n_s == 1:
            return np.array([p.s0])
        return np.linspace(p.s0, p.s0 + p.a, self.n_s)

    def v_axis(self) -> np.ndarray:
        return np.linspace(self.v_lo, self.v_hi, self.n_v)

    def w_axis(self) -> np.ndarray:
        lo = self.v_lo if self.w_lo is None else self.w_lo
        hi = self.v_hi if self.w_hi is None else self.w_hi
        n = self.n_v if self.n_w is None else self.n_w
        return np.linspace(lo, hi, n)

    def refined(self) -> "SamplingBox":
        """Box whose lattice contains this one (every axis halved)."""
        return SamplingBox(
            self.v_lo, self.v_hi,
            n_s=2 * self.n_s - 1 if self.n_s > 1 else 1,
            n_v=2 * self.n_v - 1,
            w_lo=self.w_lo, w_hi=self.w_hi,
            n_w=None if self.n_w is None else 2 * self.n_w - 1,
        )


@dataclass
class HypothesisResult:
    name: str
    holds: bool
    worst_violation: float
    witness: dict
    details: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class HypothesisReport:
    box: SamplingBox
    results: list

    @property
    def all_hold(self) -> bool:
        return all(r.holds for r in self.results)

    def __getitem__(self, name: str) -> HypothesisResult:
        for r in self.results:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_json(self) -> dict:
        return {
            "schema": 1,
            "box": asdict(self.box),
            "all_hold": self.all_hold,
            "note": "verdicts hold on the sampled lattice only",
            "results": [r.to_json() for r in self.results],
        }


# -- sampling helpers -----------------------------------------------------------


def _tie_values(tie: GridFunction, v: np.ndarray) -> np.ndarray:
    return tie(tie.grid.clamp(v))


def _pair_lattice(p: ProblemSpec, box: SamplingBox, tie: GridFunction | None):
    """Arrays ``s, v1, v2, w1, w2`` over all pairs ``v1 < v2`` of the lattice."""
    s_ax = box.s_axis(p)
    v_ax = box.v_axis()
    i, j = np.triu_indices(v_ax.size, k=1)
    v1, v2 = v_ax[i], v_ax[j]
    if tie is not None:
        w1, w2 = _tie_values(tie, v1), _tie_values(tie, v2)
        S = np.repeat(s_ax, v1.size)
        return S, np.tile(v1, s_ax.size), np.tile(v2, s_ax.size), np.tile(w1, s_ax.size), np.tile(w2, s_ax.size)
    w_ax = box.w_axis()
    S, W, K = np.meshgrid(s_ax, w_ax, np.arange(v1.size), indexing="ij")
    S, W, K = S.ravel(), W.ravel(), K.ravel()
    return S, v1[K], v2[K], W, W


def _witness(idx, **arrays) -> dict:
    return {k: float(a[idx]) for k, a in arrays.items()}


def _guard(name, fn, S, V, W):
    try:
        return fn(S, V, W)
    except EvalError as exc:
        S, V, W = np.broadcast_arrays(S, V, W)
        for s, v, w in zip(S.ravel(), V.ravel(), W.ravel()):
            try:
                fn(float(s), float(v), float(w))
            except EvalError:
                raise EvalError(exc.node, f"{exc.reason} while checking {name} at (s={s:.6g}, v={v:.6g}, w={w:.6g})") from exc
        raise


# -- checkers -------------------------------------------------------------------


def check_a1(p: ProblemSpec, box: SamplingBox, tie: GridFunction | None = None) -> HypothesisResult:
    """``v -> v - psi(s, v, w)`` strictly increasing; reports the smallest gap."""
    S, v1, v2, w1, w2 = _pair_lattice(p, box, tie)
    x1 = v1 - _guard("a1", p.psi, S, v1, w1)
    x2 = v2 - _guard("a1", p.psi, S, v2, w2)
    gap = x2 - x1
    k = int(np.argmin(gap))
    worst = -float(gap[k])
    if worst == 0.0:
        # a flat pair is not strictly increasing
        worst = float(np.nextafter(0.0, 1.0))
    return HypothesisResult(
        "a1", worst <= 0, worst,
        _witness(k, s=S, v=v1, z=v2, w=w1),
        {"min_gap": float(gap[k]), "pairs": int(gap.size), "tied": tie is not None},
    )


def _a2_excess(p, S, v1, v2, w1, w2, tol):
    d = np.abs(v1 - v2)
    lhs = np.abs(_guard("a2", p.psi, S, v1, w1) - _guard("a2", p.psi, S, v2, w2))
    return lhs - p.ell * d / (p.bigM + d) - tol


def check_a2(p: ProblemSpec, box: SamplingBox, tie: GridFunction | None = None, tol_check: float = 1e-12) -> HypothesisResult:
    """``|psi(s,v,.) - psi(s,z,.)| <= ell |v-z| / (M + |v-z|)`` on sampled pairs."""
    S, v1, v2, w1, w2 = _pair_lattice(p, box, tie)
    excess = _a2_excess(p, S, v1, v2, w1, w2, tol_check)
    k = int(np.argmax(excess))
    worst = float(excess[k])
    holds = worst <= 0
    details = {"max_excess": worst, "pairs": int(excess.size), "tied": tie is not None}
    if tie is None:
        # Let the third slot differ inside a pair; the bound only sees |v - z|.
        w_ax = box.w_axis()
        wa, wb = np.meshgrid(w_ax, w_ax, indexing="ij")
        m = v1.size
        idx = np.arange(m)[:: max(1, m // 2000)]
        rows = []
        for a_, b_ in zip(wa.ravel(), wb.ravel()):
            rows.append(float(np.max(_a2_excess(p, S[idx], v1[idx], v2[idx], np.full(idx.size, a_), np.full(idx.size, b_), tol_check))))
        swept = max(rows)
        details["third_slot_max_excess"] = swept
        details["third_slot_changes_outcome"] = (swept <= 0) != holds
    return HypothesisResult("a2", holds, worst, _witness(k, s=S, v=v1, z=v2, w=w1), details)


def check_b1(p: ProblemSpec, box: SamplingBox, tie: GridFunction | None = None) -> HypothesisResult:
    """``|aleph1 + aleph2| <= kappa`` on the box."""
    s_ax, v_ax = box.s_axis(p), box.v_axis()
    if tie is not None:
        S, V = np.meshgrid(s_ax, v_ax, indexing="ij")
        W = _tie_values(tie, V)
    else:
        S, V, W = np.meshgrid(s_ax, v_ax, box.w_axis(), indexing="ij")
    S, V, W = S.ravel(), V.ravel(), np.asarray(W).ravel()
    mag = np.abs(_guard("b1", p.aleph, S, V, W))
    k = int(np.argmax(mag))
    worst = float(mag[k] - p.kappa)
    return HypothesisResult(
        "b1", worst <= 0, worst, _witness(k, s=S, v=V, z=W, w=W),
        {"max_abs_aleph": float(mag[k]), "kappa": p.kappa},
    )


def check_b2(p: ProblemSpec, box: SamplingBox, tie: GridFunction | None = None) -> HypothesisResult:
    """aleph1 non-decreasing and aleph2 non-increasing in ``v`` at fixed ``s``."""
    S, v1, v2, w1, w2 = _pair_lattice(p, box, tie)
    up = _guard("b2", p.aleph1, S, v1, w1) - _guard("b2", p.aleph1, S, v2, w2)
    down = _guard("b2", p.aleph2, S, v2, w2) - _guard("b2", p.aleph2, S, v1, w1)
    k1, k2 = int(np.argmax(up)), int(np.argmax(down))
    worst1, worst2 = float(up[k1]), float(down[k2])
    if worst1 >= worst2:
        k, worst = k1, worst1
    else:
        k, worst = k2, worst2
    return HypothesisResult(
        "b2", worst <= 0, worst, _witness(k, s=S, v=v1, z=v2, w=w1),
        {
            "aleph1_worst": worst1,
            "aleph1_witness": _witness(k1, s=S, v=v1, z=v2, w=w1),
            "aleph2_worst": worst2,
            "aleph2_witness": _witness(k2, s=S, v=v1, z=v2, w=w1),
        },
    )


def check_b3_b4(p: ProblemSpec, sigma0: GridFunction, rho0: GridFunction, kind: str = "A", tol_defect: float = 1e-6) -> HypothesisResult:
    """Initial pair is ordered and a mixed lower/upper pair of the given kind."""
    from .monotone import verify_mixed_pair

    if sigma0.grid != rho0.grid or sigma0.grid != p.grid(sigma0.grid.n):
        raise DataError("sigma0 and rho0 must live on the problem grid")
    gap = sigma0.values - rho0.values
    k = int(np.argmax(gap))
    order_violation = float(gap[k])
    rep = verify_mixed_pair(p, sigma0, rho0, kind, tol_defect=tol_defect)
    name = "b3" if kind.upper() == "A" else "b4"
    worst = max(order_violation, rep.worst_violation)
    order_witness = {"node": k, "s": float(sigma0.grid.nodes[k]), "v": float(sigma0.values[k]),
                     "z": float(rho0.values[k])}
    witness = order_witness if order_violation >= rep.worst_violation else rep.witness
    return HypothesisResult(
        name, bool(worst <= 0), float(worst), witness,
        {"ordering_violation": order_violation, "ordering_witness": order_witness, "mixed_pair": rep.to_json()},
    )


def psi_at_origin_sup(p: ProblemSpec, box: SamplingBox) -> float:
    """Sampled ``sup_s |psi(s, 0, 0)|``."""
    s = box.s_axis(p)
    return float(np.max(np.abs(p.psi(s, np.zeros_like(s), np.zeros_like(s)))))


def theoretical_radius(p: ProblemSpec, box: SamplingBox) -> float:
    """Radius of the ball in the existence argument.

    The integrable bound on aleph is taken to be the constant ``kappa``, so its
    contribution is ``kappa * a**alpha / Gamma(alpha + 1)``.
    """
    c = abs(p.v0 - p.psi(p.s0, p.v0, p.v0))
    return c + p.ell + psi_at_origin_sup(p, box) + p.kappa * p.a**p.alpha / gamma_fn(p.alpha + 1)


def check_all(p: ProblemSpec, box: SamplingBox, tie: GridFunction | None = None,
              bracket: tuple | None = None, kind: str = "A", tol_defect: float = 1e-6) -> HypothesisReport:
    """Run checks a1, a2, b1 and b2, plus b3/b4 when an initial bracket is given."""
    results = [check_a1(p, box, tie), check_a2(p, box, tie), check_b1(p, box, tie), check_b2(p, box, tie)]
    if bracket is not None:
        results.append(check_b3_b4(p, bracket[0], bracket[1], kind, tol_defect))
    return HypothesisReport(box, results)
