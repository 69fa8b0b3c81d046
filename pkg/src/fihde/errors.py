"""Exception hierarchy shared by all modules."""


class FihdeError(Exception):
    """Base class for every error raised by this package."""


class DomainError(FihdeError, ValueError):
    """An argument lies outside the domain of an operation."""


class DataError(FihdeError, ValueError):
    """Malformed numerical data: wrong length, non-finite values, grid mismatch."""


class DomainEscapeError(DomainError):
    """``f(s)`` left the interval while evaluating ``f(f(s))`` under the strict policy."""

    def __init__(self, nodes, values, grid):
        self.nodes = list(nodes)
        self.values = list(values)
        shown = ", ".join(f"{i}->{v:.6g}" for i, v in zip(self.nodes[:8], self.values))
        if not self.nodes:
            shown = ", ".join(f"{v:.6g}" for v in self.values)
        super().__init__(
            f"inner value outside [{grid.s0}, {grid.end}] at {len(self.values)} point(s): {shown}"
        )


class ConfigError(FihdeError, ValueError):
    """Invalid configuration of a problem or of a run."""


class SolverError(FihdeError, RuntimeError):
    """An inner iteration failed to converge."""

    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual


class MonotonicityError(FihdeError, RuntimeError):
    """A monotone iterate broke the ordering it is supposed to keep."""

    def __init__(self, t, node, magnitude, relation):
        self.t = t
        self.node = node
        self.magnitude = magnitude
        self.relation = relation
        super().__init__(
            f"step {t}: {relation} violated at node {node} by {magnitude:.3e}"
        )


class PreconditionError(FihdeError, RuntimeError):
    """The initial bracket does not satisfy the required lower/upper inequalities."""


class OracleError(FihdeError, RuntimeError):
    """Reference computation refused to produce a result."""
