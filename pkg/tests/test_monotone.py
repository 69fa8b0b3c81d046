import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import GOLDEN
from fihde.errors import ConfigError, DataError, MonotonicityError, PreconditionError
from fihde.fraccalc import GridFunction
from fihde.monotone import (
    BracketState, bracket_violation, check_uniqueness, default_tol_order, iterate_extremal,
    step_type_a, step_type_b, verify_lower_upper, verify_mixed_pair,
)
from fihde.oracle import read_golden
from fihde.problem import ProblemSpec
from fihde.solver import SolverConfig, solve_fihie

CFG = SolverConfig(tol=1e-12)


def P(psi="0", a1="0", a2="0", **kw):
    base = dict(alpha=0.5, s0=0.0, a=1.0, v0=0.0, ell=0.5, bigM=1.0, kappa=1.0)
    base.update(kw)
    return ProblemSpec.from_strings(psi=psi, aleph1=a1, aleph2=a2, **base)


def const(p, n, c):
    return GridFunction.constant(p.grid(n), c, p.interp)


# -- lower / upper verification --------------------------------------------------------------


def test_exact_solution_is_lower_and_upper():
    p = P(v0=0.0)
    c = const(p, 64, 0.0)
    for role in ("lower", "upper"):
        rep = verify_lower_upper(p, c, role)
        assert rep.passes and np.all(rep.defects[role] == 0.0)


def test_constant_under_unit_load_signs():
    p = P(a1="1", v0=1.0)
    cand = const(p, 1024, 1.0)
    s = cand.grid.nodes
    d = verify_lower_upper(p, cand, "lower").defects["lower"]
    exact = s[1:] ** -0.5 / math.gamma(0.5) - 1.0
    far = s[1:] >= 0.05
    assert np.max(np.abs(d[1:][far] - exact[far])) < 1e-3
    cross = (1 / math.gamma(0.5)) ** 2  # s where s^(-1/2)/Gamma(1/2) = 1
    assert np.all(d[1:-1][s[1:-1] < cross - 0.01] > 0) and np.all(d[1:-1][s[1:-1] > cross + 0.01] < 0)
    lower = verify_lower_upper(p, cand, "lower")
    upper = verify_lower_upper(p, cand, "upper")
    assert not lower.passes and lower.witness["s"] < cross
    assert not upper.passes and upper.witness["s"] > cross
    # the endpoint condition holds with equality for both roles
    assert lower["lower_start"].passes and upper["upper_start"].passes


def test_logistic_initial_curves(logistic):
    sig, rho = logistic.bracket.initial(logistic.problem, 4096)
    assert verify_lower_upper(logistic.problem, sig, "lower").passes
    assert verify_lower_upper(logistic.problem, rho, "upper").passes


def test_verify_input_errors():
    p = P()
    with pytest.raises(ConfigError):
        verify_lower_upper(p, const(p, 8, 0.0), "middle")
    with pytest.raises(DataError):
        verify_mixed_pair(p, const(p, 8, 0.0), const(p, 16, 0.0))
    with pytest.raises(ConfigError):
        verify_mixed_pair(p, const(p, 8, 0.0), const(p, 8, 0.0), kind="C")


def test_mixed_pair_exact_constant_is_mixed_solution():
    # x - psi vanishes identically, so the defect is exactly zero
    p = P(psi="0.3", v0=0.3)
    c = const(p, 32, 0.3)
    for kind in "AB":
        rep = verify_mixed_pair(p, c, c, kind)
        assert rep.passes and rep.mixed_solution
    # without the shift the constant has a nonzero fractional derivative
    q = P(v0=0.3)
    assert not verify_mixed_pair(q, c, c).mixed_solution


def test_kind_a_without_aleph2_reduces_to_single_checks():
    p = P(psi="0.1*sin(v)", a1="0.5*v", v0=0.5)
    g = p.grid(128)
    sig = GridFunction.from_callable(g, lambda s: 0.2 + 0.1 * s)
    rho = GridFunction.from_callable(g, lambda s: 2.0 - 0.1 * s)
    mixed = verify_mixed_pair(p, sig, rho, "A")
    lo = verify_lower_upper(p, sig, "lower")
    up = verify_lower_upper(p, rho, "upper")
    assert np.array_equal(mixed.defects["sigma"], lo.defects["lower"])
    assert np.array_equal(mixed.defects["rho"], up.defects["upper"])
    assert mixed["sigma_differential"].worst_violation == lo["lower_differential"].worst_violation
    assert mixed["rho_differential"].worst_violation == up["upper_differential"].worst_violation


@pytest.mark.parametrize("kind", "AB")
def test_logistic_mixed_defects_against_oracle(logistic, kind):
    header, cols = read_golden(GOLDEN / f"logistic_defects_{kind}.csv")
    sig, rho = logistic.bracket.initial(logistic.problem, header["n"])
    rep = verify_mixed_pair(logistic.problem, sig, rho, kind)
    assert rep.passes
    far = sig.grid.nodes >= 0.05
    for name in ("sigma", "rho"):
        assert np.max(np.abs(rep.defects[name][far] - cols[name][far])) <= 1e-3
    tol = rep.tol_defect
    assert rep["sigma_differential"].worst_violation == pytest.approx(np.max(cols["sigma"][1:-1]) - tol, abs=1e-6)
    assert rep["rho_differential"].worst_violation == pytest.approx(np.max(-cols["rho"][1:-1]) - tol, abs=1e-6)


# -- single steps ---------------------------------------------------------------------------------


def test_step_a_state_independent_collapses():
    p = P(a1="0.7", v0=0.2)
    st0 = BracketState.initial(const(p, 256, -1.0), const(p, 256, 2.0))
    st1 = step_type_a(p, st0, CFG)
    exact = 0.2 + 0.7 * st1.sigma.grid.nodes**0.5 / math.gamma(1.5)
    assert st1.t == 1 and st1.width == 0.0 and st1.ordered
    assert np.max(np.abs(st1.sigma.values - exact)) < 1e-13


def test_steps_preserve_collapse(logistic):
    p = logistic.problem
    v, _ = solve_fihie(p, CFG, 128)
    for step in (step_type_a, step_type_b):
        nxt = step(p, BracketState.initial(v, v), CFG)
        assert nxt.width == 0.0


def test_step_a_rejects_unordered_state():
    p = P()
    st0 = BracketState(const(p, 8, 1.0), const(p, 8, 0.0), 0, 1.0, False)
    with pytest.raises(MonotonicityError):
        step_type_a(p, st0, CFG)


def test_step_a_first_contraction(logistic):
    p = logistic.problem
    sig, rho = logistic.bracket.initial(p, 2048)
    st1 = step_type_a(p, BracketState.initial(sig, rho), CFG)
    ratio = st1.width / 0.95
    header, cols = read_golden(GOLDEN / "logistic_bracket_A_2048.csv")
    assert ratio <= 0.9
    assert ratio == pytest.approx(cols["width"][1] / cols["width"][0], abs=1e-12)


def test_step_b_without_aleph1_is_decoupled():
    p = P(psi="0.1*sin(v)", a2="-0.5*v", v0=0.5)
    g = p.grid(64)
    sig, rho = const(p, 64, 0.1), const(p, 64, 0.9)
    b = step_type_b(p, BracketState.initial(sig, rho), CFG)
    alone_s = step_type_b(p, BracketState.initial(sig, sig), CFG).sigma
    alone_r = step_type_b(p, BracketState.initial(rho, rho), CFG).rho
    assert np.array_equal(b.sigma.values, alone_s.values) and np.array_equal(b.rho.values, alone_r.values)
    assert g.n == 64


def test_step_b_symmetric_updates_coincide():
    p = P(a1="0.3*v", a2="0.3*v", v0=0.2)
    c = const(p, 64, 0.2)
    b = step_type_b(p, BracketState.initial(c, c), CFG)
    assert np.array_equal(b.sigma.values, b.rho.values)


def test_step_b_interleave_precondition(logistic):
    p = logistic.problem
    sig, rho = logistic.bracket.initial(p, 512)
    tol = default_tol_order(CFG, sig.grid.h)
    s1 = step_type_b(p, BracketState.initial(sig, rho), CFG)
    s2 = step_type_b(p, s1, CFG)
    assert np.all(sig.values <= s2.sigma.values + tol) and np.all(s2.rho.values <= rho.values + tol)


# -- driver -------------------------------------------------------------------------------------


def test_collapsed_bracket_returns_immediately():
    p = P(v0=0.0)
    c = const(p, 32, 0.0)
    rep = iterate_extremal(p, c, c, "A", CFG)
    assert rep.converged and rep.steps == 0 and rep.width_history == [0.0]


def test_state_independent_converges_in_one_step():
    p = P(a1="1", v0=0.0)
    rep = iterate_extremal(p, const(p, 64, -1.0), const(p, 64, 5.0), "A", CFG)
    assert rep.converged and rep.steps == 1 and rep.width_history[-1] == 0.0


def test_precondition_enforced():
    p = P(a1="1", v0=0.0)
    bad_sigma = const(p, 32, 1.0)  # starts above v0
    with pytest.raises(PreconditionError):
        iterate_extremal(p, bad_sigma, const(p, 32, 5.0), "A", CFG)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        rep = iterate_extremal(p, bad_sigma, const(p, 32, 5.0), "A", CFG, force=True)
    assert caught and not rep.precondition.passes


def test_logistic_kind_a(logistic):
    p = logistic.problem
    b = logistic.bracket
    sig, rho = b.initial(p, 512)
    rep = iterate_extremal(p, sig, rho, "A", CFG, width_tol=1e-6, max_steps=30)
    assert rep.converged and rep.clean and rep.steps <= 30
    w = rep.width_history
    assert all(w[i + 1] < w[i] for i in range(len(w) - 1))
    header, cols = read_golden(GOLDEN / "logistic_bracket_A.csv")
    assert len(cols["width"]) == len(w)
    assert np.max(np.abs(np.array(w) - cols["width"])) <= 1e-8
    floor = 10 * sig.grid.h**2
    assert max(rep.limit_residuals.values()) <= 1e-6 + floor
    v, srep = solve_fihie(p, CFG, GridFunction.from_callable(sig.grid, lambda s: 0.3 + 0.4 * s))
    assert srep.converged
    for t, s_t, r_t in rep.iterates:
        assert bracket_violation(s_t, v, r_t) <= rep.tol_order


def test_logistic_kind_b_interleaving(logistic):
    p = logistic.problem
    sig, rho = logistic.bracket.initial(p, 512)
    rep = iterate_extremal(p, sig, rho, "B", CFG, width_tol=1e-14, max_steps=8)
    assert rep.steps >= 6 and rep.clean and rep.interleave_precondition
    assert set(rep.limits) == {"sigma", "rho", "sigma_diamond", "rho_diamond"}
    header, cols = read_golden(GOLDEN / "logistic_bracket_B.csv")
    ref = iterate_extremal(p, sig, rho, "B", CFG, width_tol=1e-6, max_steps=50)
    assert np.max(np.abs(np.array(ref.width_history) - cols["width"])) <= 1e-8


def test_kind_a_abort_on_violation(tmp_path):
    from fihde.scenario import load
    from conftest import SCENARIOS

    sc = load(SCENARIOS / "failing_b2.toml")
    sig, rho = sc.bracket.initial(sc.problem, 128)
    rep = iterate_extremal(sc.problem, sig, rho, "A", sc.solver)
    assert rep.aborted and not rep.converged
    t, node, mag, rel = rep.monotonicity_violations[0]
    assert t == 1 and mag > rep.tol_order and "rho" in rel


def test_report_json(logistic):
    sig, rho = logistic.bracket.initial(logistic.problem, 128)
    rep = iterate_extremal(logistic.problem, sig, rho, "B", CFG)
    doc = rep.to_json()
    assert doc["schema"] == 1 and doc["kind"] == "B" and doc["notes"]


@settings(max_examples=12, deadline=None)
@given(st.floats(0.01, 0.07), st.floats(0.3, 0.6))
def test_kind_a_chain_property(r, v0):
    p = ProblemSpec.from_strings(alpha=0.8, s0=0.0, a=1.0, v0=v0, psi="0.5 - 0.3*v/(1 + v^2)",
                                 aleph1=f"{r}*v", aleph2=f"-{r}*v*w", ell=0.6, bigM=1.0, kappa=0.1)
    sig, rho = const(p, 64, 0.05), const(p, 64, 1.0)
    if not verify_mixed_pair(p, sig, rho, "A").passes:
        return
    rep = iterate_extremal(p, sig, rho, "A", CFG, max_steps=10)
    assert rep.clean
    tol = rep.tol_order
    its = rep.iterates
    for (_, s0_, r0_), (_, s1_, r1_) in zip(its, its[1:]):
        assert np.all(s0_.values <= s1_.values + tol) and np.all(s1_.values <= r1_.values + tol)
        assert np.all(r1_.values <= r0_.values + tol)


# -- uniqueness -------------------------------------------------------------------------------


def test_uniqueness_constant_loads():
    p = P(a1="0.4", a2="-0.1", n1=0.5, n2=0.5)
    rep = iterate_extremal(p, const(p, 64, -1.0), const(p, 64, 3.0), "A", CFG)
    u = check_uniqueness(p, rep.sigma, rep.rho)
    assert u.conditions_hold and u.collapsed and u.passes


def test_uniqueness_trivial_equal_pair():
    p = P(n1=1.0, n2=1.0)
    c = const(p, 16, 0.0)
    assert check_uniqueness(p, c, c).passes


def test_uniqueness_logistic(logistic):
    p = logistic.problem
    sig, rho = logistic.bracket.initial(p, 512)
    rep = iterate_extremal(p, sig, rho, "A", CFG)
    u = check_uniqueness(p, rep.sigma, rep.rho)
    assert u.conditions_hold and u.width <= 1e-6 and u.to_json()["passes"]


def test_uniqueness_reports_failing_condition():
    p = P(a1="3*v", n1=1.0, n2=1.0)
    g = p.grid(16)
    u = check_uniqueness(p, const(p, 16, 0.0), GridFunction.constant(g, 1.0))
    assert not u.conditions_hold and u.n1_worst > 0 and not u.passes


def test_uniqueness_needs_constants():
    p = P()
    with pytest.raises(ConfigError):
        check_uniqueness(p, const(p, 8, 0.0), const(p, 8, 0.0))
