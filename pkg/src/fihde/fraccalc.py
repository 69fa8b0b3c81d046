"""Grid functions and Riemann-Liouville operators on uniform grids.

Everything the solvers manipulate is a :class:`GridFunction`: samples on the
nodes ``s_i = s0 + i*a/n`` plus an interpolation rule.  The fractional
integral uses product integration, i.e. the integrand is replaced by its
piecewise linear interpolant and the weakly singular kernel is integrated
exactly against it.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, DomainError, DomainEscapeError


class Interp(enum.Enum):
    """Interpolation rule attached to a :class:`GridFunction`."""

    Linear = "linear"
    PchipMonotone = "pchip"


class DomainPolicy(enum.Enum):
    """What to do when ``f(s)`` leaves the interval while evaluating ``f(f(s))``."""

    Strict = "strict"
    Clamp = "clamp"


@dataclass(frozen=True)
class Grid:
    s0: float
    a: float
    n: int

    def __post_init__(self):
        if not (math.isfinite(self.s0) and math.isfinite(self.a)):
            raise DomainError("grid bounds must be finite")
        if self.a <= 0:
            raise DomainError(f"interval length must be positive, got a={self.a}")
        if int(self.n) != self.n or self.n < 1:
            raise DomainError(f"need n >= 1 subintervals, got n={self.n}")
        object.__setattr__(self, "n", int(self.n))

    @property
    def h(self) -> float:
        return self.a / self.n

    @property
    def end(self) -> float:
        return self.s0 + self.a

    @property
    def nodes(self) -> np.ndarray:
        return self.s0 + np.arange(self.n + 1) * self.a / self.n

    def clamp(self, s):
        return np.clip(s, self.s0, self.end)


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Real function sampled on a :class:`Grid`.

    The value array is copied and made read-only on construction.
    """

    grid: Grid
    values: np.ndarray
    interp: Interp = Interp.PchipMonotone
    _slopes: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float, copy=True).reshape(-1)
        if vals.shape[0] != self.grid.n + 1:
            raise DataError(
                f"expected {self.grid.n + 1} values for n={self.grid.n}, got {vals.shape[0]}"
            )
        if not np.all(np.isfinite(vals)):
            bad = int(np.flatnonzero(~np.isfinite(vals))[0])
            raise DataError(f"non-finite value at node {bad}")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)
        if self.interp is Interp.PchipMonotone:
            slopes = _pchip_slopes(self.grid.h, vals)
            slopes.flags.writeable = False
            object.__setattr__(self, "_slopes", slopes)

    @classmethod
    def from_callable(cls, grid: Grid, fn, interp: Interp = Interp.PchipMonotone):
        return cls(grid, np.broadcast_to(fn(grid.nodes), (grid.n + 1,)), interp)

    @classmethod
    def constant(cls, grid: Grid, c: float, interp: Interp = Interp.PchipMonotone):
        return cls(grid, np.full(grid.n + 1, float(c)), interp)

    def with_values(self, values) -> "GridFunction":
        return GridFunction(self.grid, values, self.interp)

    def __call__(self, s):
        return interpolate(self, s)

    def sup_distance(self, other: "GridFunction") -> float:
        _check_same_grid(self, other)
        return float(np.max(np.abs(self.values - other.values)))


@dataclass(frozen=True)
class Kernel:
    """Riemann-Liouville kernel ``s**(g-1)/Gamma(g)`` for s > 0, zero otherwise."""

    gamma_order: float

    def __post_init__(self):
        if not 0 < self.gamma_order < 2:
            raise DomainError(f"kernel order must lie in (0, 2), got {self.gamma_order}")

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        pos = s > 0
        out = np.zeros_like(s)
        out[pos] = s[pos] ** (self.gamma_order - 1) / gamma_fn(self.gamma_order)
        return out if out.ndim else float(out)


def gamma_fn(x: float) -> float:
    """Euler Gamma function for positive finite arguments."""
    x = float(x)
    if not math.isfinite(x) or x <= 0:
        raise DomainError(f"gamma_fn requires finite x > 0, got {x}")
    return math.gamma(x)


def _check_same_grid(f: GridFunction, g: GridFunction):
    if f.grid != g.grid:
        raise DataError(f"grid mismatch: {f.grid} vs {g.grid}")


# -- interpolation -----------------------------------------------------------


def _pchip_slopes(h: float, y: np.ndarray) -> np.ndarray:
    # Fritsch-Butland harmonic-mean slopes with the three-point
    # shape-preserving end condition, specialised to uniform spacing.
    n = y.shape[0]
    d = np.zeros(n)
    if n < 2:
        return d
    delta = np.diff(y) / h
    if n == 2:
        d[:] = delta[0]
        return d
    dl, dr = delta[:-1], delta[1:]
    same_sign = (np.sign(dl) * np.sign(dr)) > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        hm = 2.0 / (1.0 / dl + 1.0 / dr)
    d[1:-1] = np.where(same_sign, hm, 0.0)
    d[0] = _pchip_edge(delta[0], delta[1])
    d[-1] = _pchip_edge(delta[-1], delta[-2])
    return d


def _pchip_edge(d0: float, d1: float) -> float:
    m = (3.0 * d0 - d1) / 2.0
    if np.sign(m) != np.sign(d0):
        return 0.0
    if np.sign(d0) != np.sign(d1) and abs(m) > abs(3.0 * d0):
        return 3.0 * d0
    return m


def _interp_unchecked(f: GridFunction, s: np.ndarray) -> np.ndarray:
    grid = f.grid
    y = f.values
    t = (s - grid.s0) / grid.h
    k = np.clip(np.floor(t).astype(np.intp), 0, grid.n - 1)
    u = t - k
    y0, y1 = y[k], y[k + 1]
    if f.interp is Interp.Linear:
        out = y0 + u * (y1 - y0)
    else:
        h = grid.h
        m0, m1 = f._slopes[k] * h, f._slopes[k + 1] * h
        u2 = u * u
        u3 = u2 * u
        out = (
            (2 * u3 - 3 * u2 + 1) * y0
            + (u3 - 2 * u2 + u) * m0
            + (-2 * u3 + 3 * u2) * y1
            + (u3 - u2) * m1
        )
    # Exact at nodes, independent of rounding in the Hermite basis.
    on_node = u == 0.0
    if np.any(on_node):
        out = np.where(on_node, y0, out)
    return out


def interpolate(f: GridFunction, s):
    """Evaluate ``f`` at ``s`` (scalar or array) inside the grid interval."""
    arr = np.asarray(s, dtype=float)
    grid = f.grid
    outside = (arr < grid.s0) | (arr > grid.end) | ~np.isfinite(arr)
    if np.any(outside):
        bad = arr[outside].reshape(-1)[0]
        raise DomainError(f"s={bad} outside [{grid.s0}, {grid.end}]")
    out = _interp_unchecked(f, arr.reshape(-1)).reshape(arr.shape)
    return out if out.ndim else float(out)


def self_compose(f: GridFunction, policy: DomainPolicy = DomainPolicy.Clamp):
    """Sample ``f(f(s_i))`` on the grid of ``f``.

    Returns ``(g, escaped)`` where ``escaped`` holds the indices of nodes whose
    inner value ``f(s_i)`` fell outside the interval.  Under ``Clamp`` those
    arguments are projected onto the interval; under ``Strict`` any escape
    raises :class:`DomainEscapeError`.
    """
    grid = f.grid
    inner = f.values
    escaped = np.flatnonzero((inner < grid.s0) | (inner > grid.end))
    if escaped.size and policy is DomainPolicy.Strict:
        raise DomainEscapeError(escaped.tolist(), inner[escaped].tolist(), grid)
    vals = _interp_unchecked(f, grid.clamp(inner))
    return GridFunction(grid, vals, f.interp), escaped


def compose_at(f: GridFunction, x, policy: DomainPolicy = DomainPolicy.Clamp) -> float:
    """``f(x)`` for a single argument, applying ``policy`` if ``x`` is off-grid."""
    grid = f.grid
    x = float(x)
    if not grid.s0 <= x <= grid.end:
        if policy is DomainPolicy.Strict:
            raise DomainEscapeError([], [x], grid)
        x = float(grid.clamp(x))
    return float(_interp_unchecked(f, np.array([x]))[0])


# -- Riemann-Liouville integral and derivative --------------------------------


def _even_binomial_tail(p: float, x: np.ndarray) -> np.ndarray:
    """``(1+x)**p + (1-x)**p - 2`` for ``|x| <= 1/2`` without cancellation."""
    out = np.zeros_like(x)
    x2 = x * x
    xp = np.ones_like(x)
    coef = 1.0
    for m in range(1, 40):
        # binom(p, 2m) from binom(p, 2m-2)
        coef *= (p - 2 * m + 2) * (p - 2 * m + 1) / ((2 * m - 1) * (2 * m))
        xp = xp * x2
        term = 2.0 * coef * xp
        out += term
        if np.all(np.abs(term) <= 1e-18 * np.abs(out)):
            break
    return out


def _binomial_tail(p: float, x: np.ndarray) -> np.ndarray:
    """``(1+x)**p - 1 - p*x`` for ``|x| <= 1/2`` without cancellation."""
    out = np.zeros_like(x)
    xp = x.copy()
    coef = p
    for m in range(2, 80):
        coef *= (p - m + 1) / m
        xp = xp * x
        term = coef * xp
        out += term
        if np.all(np.abs(term) <= 1e-18 * np.abs(out)):
            break
    return out


def product_weights(alpha: float, n: int):
    """Product-trapezoid weights for ``I^alpha`` on a uniform grid.

    Returns ``(start, conv)`` scaled by ``h**alpha / Gamma(alpha + 2)`` left
    out: ``start[i]`` multiplies ``f_0`` at node ``i`` and ``conv[k]`` multiplies
    ``f_{i-k}`` for ``1 <= i-k <= i``.
    """
    p = alpha + 1.0
    k = np.arange(n + 1, dtype=float)
    conv = np.empty(n + 1)
    conv[0] = 1.0
    if n >= 1:
        conv[1] = 2.0**p - 2.0
    if n >= 2:
        kk = k[2:]
        conv[2:] = kk**p * _even_binomial_tail(p, 1.0 / kk)

    start = np.zeros(n + 1)
    if n >= 1:
        start[1] = alpha
    if n >= 2:
        ii = k[2:]
        start[2:] = ii**p * _binomial_tail(p, -1.0 / ii)
    return start, conv


def rl_integral(f: GridFunction, alpha: float) -> GridFunction:
    """Riemann-Liouville integral of order ``alpha`` in (0, 1] at every node."""
    alpha = float(alpha)
    if not 0 < alpha <= 1:
        raise DomainError(f"integral order must lie in (0, 1], got {alpha}")
    n = f.grid.n
    y = f.values
    start, conv = product_weights(alpha, n)
    acc = np.zeros(n + 1)
    acc[1:] = np.convolve(y[1:], conv[:n])[:n] + start[1:] * y[0]
    scale = f.grid.h**alpha / gamma_fn(alpha + 2.0)
    return GridFunction(f.grid, scale * acc, f.interp)


def rl_derivative(f: GridFunction, alpha: float) -> GridFunction:
    """Riemann-Liouville derivative ``d/ds I^(1-alpha) f`` of order ``alpha`` in (0, 1).

    Central differences at interior nodes, second-order one-sided at the ends.
    """
    alpha = float(alpha)
    if not 0 < alpha < 1:
        raise DomainError(f"derivative order must lie in (0, 1), got {alpha}")
    if f.grid.n < 2:
        raise DomainError("rl_derivative needs n >= 2")
    g = rl_integral(f, 1.0 - alpha)
    return GridFunction(f.grid, np.gradient(g.values, f.grid.h, edge_order=2), f.interp)
