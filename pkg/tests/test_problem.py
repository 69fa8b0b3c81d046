import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fihde.errors import ConfigError, DataError
from fihde.expr import EvalError
from fihde.fraccalc import Grid, GridFunction
from fihde.problem import (
    ProblemSpec, SamplingBox, check_a1, check_a2, check_all, check_b1, check_b2, check_b3_b4,
    psi_at_origin_sup, theoretical_radius,
)


def P(psi="0", a1="0", a2="0", **kw):
    base = dict(alpha=0.5, s0=0.0, a=1.0, v0=0.0, ell=0.5, bigM=1.0, kappa=1.0)
    base.update(kw)
    return ProblemSpec.from_strings(psi=psi, aleph1=a1, aleph2=a2, **base)


BOX = SamplingBox(0.0, 1.0)


@pytest.mark.parametrize("kw", [dict(alpha=0.0), dict(alpha=1.0), dict(a=0.0), dict(ell=2.0, bigM=1.0),
                                dict(kappa=0.0), dict(n1=-1.0), dict(v0=math.inf)])
def test_problem_validation(kw):
    with pytest.raises(ConfigError):
        P(**kw)


def test_box_validation_and_refinement():
    with pytest.raises(ConfigError):
        SamplingBox(1.0, 1.0)
    with pytest.raises(ConfigError):
        SamplingBox(0.0, 1.0, n_v=1)
    b = SamplingBox(0.0, 1.0, n_s=3, n_v=5).refined()
    assert (b.n_s, b.n_v) == (5, 9)
    assert set(SamplingBox(0.0, 1.0, n_v=5).v_axis()) <= set(b.v_axis())


# -- a1 -----------------------------------------------------------------------------------


def test_a1_identity_gap_is_spacing():
    r = check_a1(P(), BOX)
    assert r.holds and r.details["min_gap"] == pytest.approx(1 / 40)
    assert r.worst_violation == pytest.approx(-1 / 40)


def test_a1_fails_for_steep_psi():
    r = check_a1(P(psi="2*v"), BOX)
    assert not r.holds and r.worst_violation > 0
    v, z = r.witness["v"], r.witness["z"]
    assert (z - 2 * z) - (v - 2 * v) == pytest.approx(-r.worst_violation)


def test_a1_sine_holds_on_dense_pairs():
    r = check_a1(P(psi="0.3*sin(v)"), SamplingBox(-10.0, 10.0, n_v=150))
    assert r.holds and r.details["pairs"] >= 10_000
    # gap of the closest pair is at least 0.7 times its spacing
    assert r.details["min_gap"] >= 0.7 * 20 / 149 - 1e-12


def test_a1_flat_pair_is_not_strict():
    r = check_a1(P(psi="v"), BOX)
    assert not r.holds and r.worst_violation > 0


# -- a2 -----------------------------------------------------------------------------------


def test_a2_constant_psi_holds():
    assert check_a2(P(psi="3"), SamplingBox(-5.0, 5.0)).holds


def test_a2_linear_psi_fails_for_large_gaps():
    r = check_a2(P(psi="v", ell=1.0, bigM=1.0), SamplingBox(-5.0, 5.0))
    assert not r.holds
    d = abs(r.witness["v"] - r.witness["z"])
    assert d == pytest.approx(10.0)
    assert r.worst_violation == pytest.approx(d - d / (1 + d) - 1e-12)


def test_a2_saturating_psi_depends_on_box():
    p = P(psi="0.4*v/(1 + abs(v))", ell=0.4, bigM=1.0)
    # across zero the two branches separate faster than the bound allows: v = 1, z = -1 gives 0.4 > 0.2667
    across = check_a2(p, SamplingBox(-5.0, 5.0))
    assert not across.holds
    assert across.witness["v"] * across.witness["z"] < 0
    assert check_a2(p, SamplingBox(0.0, 5.0)).holds


def test_a2_third_slot_flag():
    p = P(psi="0.1*v + 0.3*w", ell=0.2, bigM=1.0)
    r = check_a2(p, SamplingBox(0.0, 1.0, n_v=11))
    assert r.holds
    assert r.details["third_slot_changes_outcome"] is True


def test_a2_with_tied_third_slot():
    tie = GridFunction.from_callable(Grid(0.0, 1.0, 32), lambda s: 0.5 * s)
    r = check_a2(P(psi="0.1*w", ell=0.2, bigM=1.0), SamplingBox(0.0, 1.0, n_v=11), tie=tie)
    assert r.holds and r.details["tied"]


# -- b1, b2 -------------------------------------------------------------------------------


def test_b1_examples():
    r = check_b1(P(a1="0.5"), BOX)
    assert r.holds and r.details["max_abs_aleph"] == 0.5
    r = check_b1(P(a1="v"), SamplingBox(-2.0, 2.0))
    assert not r.holds and r.details["max_abs_aleph"] == 2.0 and abs(r.witness["v"]) == 2.0
    r = check_b1(P(a1="tanh(v)", a2="0.2*cos(s)", kappa=1.2), SamplingBox(-10.0, 10.0, n_v=201))
    assert r.holds and r.details["max_abs_aleph"] < 1.2


def test_b2_examples():
    assert check_b2(P(a1="v", a2="-v"), SamplingBox(-2.0, 2.0)).holds
    r = check_b2(P(a1="-v"), SamplingBox(-2.0, 2.0))
    assert not r.holds and r.details["aleph1_worst"] > 0
    assert r.witness["v"] < r.witness["z"]
    assert check_b2(P(a1="v^3", a2="exp(-v)"), SamplingBox(-2.0, 2.0, n_v=101)).holds


def test_b2_reports_aleph2_side():
    r = check_b2(P(a1="v", a2="v"), BOX)
    assert not r.holds and r.details["aleph2_worst"] > 0 and r.details["aleph1_worst"] <= 0


# -- b3, b4 ------------------------------------------------------------------------------


def test_b3_exact_constant_solution():
    p = P(v0=0.0)
    c = GridFunction.constant(p.grid(64), 0.0)
    r = check_b3_b4(p, c, c, "A")
    assert r.holds
    mixed = r.details["mixed_pair"]
    assert mixed["mixed_solution"] and all(q["worst_violation"] <= 0 for q in mixed["inequalities"])


def test_b3_unordered_pair_fails_with_node():
    p = P()
    g = p.grid(16)
    sig = GridFunction.from_callable(g, lambda s: s - 0.5)
    rho = GridFunction.constant(g, 0.0)
    r = check_b3_b4(p, sig, rho, "A")
    assert not r.holds
    assert r.details["ordering_violation"] == pytest.approx(0.5)
    assert r.details["ordering_witness"]["node"] == 16


def test_b3_logistic(logistic):
    sig, rho = logistic.bracket.initial(logistic.problem, 4096)
    for kind in "AB":
        r = check_b3_b4(logistic.problem, sig, rho, kind)
        assert r.holds and r.name == ("b3" if kind == "A" else "b4")


def test_b3_grid_mismatch():
    p = P()
    with pytest.raises(DataError):
        check_b3_b4(p, GridFunction.constant(p.grid(8), 0.0), GridFunction.constant(p.grid(16), 0.0))


# -- aggregate behaviour -----------------------------------------------------------------


def test_report_invariants_and_json(logistic):
    sig, rho = logistic.bracket.initial(logistic.problem, 512)
    rep = check_all(logistic.problem, logistic.sampling_box, bracket=(sig, rho))
    assert rep.all_hold
    for r in rep.results:
        assert (r.worst_violation <= 0) == r.holds
    doc = json.loads(json.dumps(rep.to_json()))
    assert doc["schema"] == 1 and [r["name"] for r in doc["results"]] == ["a1", "a2", "b1", "b2", "b3"]


def test_checkers_deterministic():
    p = P(psi="0.2*sin(3*v)", a1="tanh(v)", a2="-0.3*w")
    box = SamplingBox(-1.0, 2.0, n_v=31)
    assert check_all(p, box).to_json() == check_all(p, box).to_json()


def test_witness_attains_worst():
    p = P(psi="2*v")
    r = check_a1(p, BOX)
    w = r.witness
    gap = (w["z"] - 2 * w["z"]) - (w["v"] - 2 * w["v"])
    assert -gap == pytest.approx(r.worst_violation)


@settings(max_examples=25, deadline=None)
@given(st.floats(-3, 3), st.floats(0.1, 3), st.integers(3, 15))
def test_refinement_never_turns_violation_into_pass(c, k, n_v):
    p = P(psi=f"{abs(c)}*sin({k}*v)", a1=f"{c}*v^2", ell=0.5, bigM=1.0, kappa=2.0)
    box = SamplingBox(-1.0, 1.0, n_s=3, n_v=n_v)
    fine = box.refined()
    for check in (check_a1, check_a2, check_b1, check_b2):
        coarse_r, fine_r = check(p, box), check(p, fine)
        assert fine_r.worst_violation >= coarse_r.worst_violation - 1e-15
        if not coarse_r.holds:
            assert not fine_r.holds


def test_evaluation_fault_carries_witness():
    with pytest.raises(EvalError, match="s="):
        check_a1(P(psi="log(v)"), SamplingBox(-1.0, 1.0))


def test_theoretical_radius():
    p = P(psi="0.1*v + 0.2", a1="1", v0=0.5, ell=0.1, bigM=1.0, kappa=1.0)
    box = SamplingBox(-1.0, 1.0)
    assert psi_at_origin_sup(p, box) == pytest.approx(0.2)
    expected = abs(0.5 - 0.25) + 0.1 + 0.2 + 1.0 / math.gamma(1.5)
    assert theoretical_radius(p, box) == pytest.approx(expected)
