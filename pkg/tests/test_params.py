import json
from fractions import Fraction as Fr

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kgscatter.params import (
    InfeasibleParams,
    Params,
    as_fraction,
    beta_interval,
    check_constraints,
    derive_exponents,
    feasible_gamma_interval,
    fraction_json,
    report_to_json,
    theoretical_decay,
)


def test_as_fraction_is_exact():
    assert as_fraction("1.3") == Fr(13, 10)
    assert as_fraction(1.3) == Fr(13, 10)
    assert as_fraction("9/5") == Fr(9, 5)
    assert as_fraction(3) == Fr(3)
    with pytest.raises(TypeError):
        as_fraction(True)


def test_params_validation():
    with pytest.raises(ValueError):
        Params(0, Fr(1), Fr(1))
    with pytest.raises(ValueError):
        Params(3, Fr(-1), Fr(1))
    p = Params(3, "1.3", 1.8)
    assert p.gamma == Fr(13, 10) and p.beta == Fr(9, 5)


def test_golden_case():
    rep = check_constraints(Params(3, Fr(13, 10), Fr(9, 5)))
    assert rep.feasible and rep.region_feasible and rep.delta_positive
    d = rep.derived
    expected = dict(
        q=Fr(75, 34), mu=Fr(7, 60), r=Fr(100, 7), p=Fr(100, 33), s=Fr(100, 43),
        p1=Fr(45, 16), p3=Fr(50, 7), s3=Fr(200, 93), p4=Fr(45, 16),
        alpha=Fr(17, 20), alpha3=Fr(9, 5), delta=Fr(4, 25),
    )
    for k, v in expected.items():
        assert getattr(d, k) == v, k
    assert all(c.satisfied for c in rep.exponent_checks)


def test_dimension_two_is_vacuous():
    iv = feasible_gamma_interval(2)
    assert iv.empty
    assert iv.upper == Fr(1)
    rep = check_constraints(Params(2, Fr(13, 10), Fr(9, 5)))
    assert not rep.feasible
    assert "empty gamma interval" in [c.name for c in rep.violations]
    with pytest.raises(InfeasibleParams):
        derive_exponents(Params(2, Fr(13, 10), Fr(9, 5)))


@pytest.mark.parametrize(
    "n, lower, upper",
    [(3, Fr(1), Fr(7, 5)), (4, Fr(1), Fr(5, 3)), (6, Fr(1), Fr(7, 4)), (1, Fr(1), Fr(1, 3))],
)
def test_gamma_interval(n, lower, upper):
    iv = feasible_gamma_interval(n)
    assert (iv.lower, iv.upper) == (lower, upper)


def test_decay_formula_edges():
    assert theoretical_decay(3, Fr(9, 5)) == Fr(4, 25)
    assert theoretical_decay(3, Fr(5, 3)) == 0
    assert theoretical_decay(2, Fr(1)) == -1
    assert theoretical_decay(4, 2) == Fr(2, 3)


def test_delta_nonpositive_region_point_is_infeasible():
    # satisfies the (gamma, beta) region but not the derived q bound
    rep = check_constraints(Params(3, Fr(139, 100), Fr(3, 2)))
    assert rep.region_feasible
    assert not rep.delta_positive
    assert not rep.feasible
    assert any(c.name == "q < 2n/(n+2(1-gamma))" for c in rep.violations)


def test_report_json_roundtrip():
    rep = check_constraints(Params(3, Fr(13, 10), Fr(9, 5)))
    doc = json.loads(json.dumps(report_to_json(rep)))
    assert doc["derived"]["q"] == {"exact": "75/34", "approx": 75 / 34}
    assert doc["delta"]["exact"] == "4/25"
    assert doc["feasible"] is True
    assert fraction_json(None) == {"exact": "inf", "approx": None}


def test_constraint_describe():
    rep = check_constraints(Params(2, Fr(13, 10), Fr(9, 5)))
    text = [c.describe() for c in rep.violations]
    assert any(t.startswith("empty gamma interval") for t in text)


# --- property suite -----------------------------------------------------------

def _region(n, g, b):
    # independent float restatement of the admissible region
    gf, bf = float(g), float(b)
    return (
        1 < gf < min(2 * (n + 1) / (n + 2), (3 * n - 2) / (n + 2))
        and (n + 2) * (gf + 1) / (4 * n) + 0.5 < bf < (n + 2) * (gf + 1) / (2 * n)
    )


lattice = st.tuples(
    st.integers(min_value=3, max_value=8),
    st.integers(min_value=1, max_value=199),
    st.integers(min_value=1, max_value=199),
)


def _point(n, i, j):
    iv = feasible_gamma_interval(n)
    g = iv.lower + (iv.upper - iv.lower) * Fr(i, 200)
    lo, hi = beta_interval(n, g)
    return g, lo + (hi - lo) * Fr(j, 200)


@settings(max_examples=300, deadline=None)
@given(lattice)
def test_region_verdict_matches_float_oracle(pt):
    n, i, j = pt
    g, b = _point(n, i, j)
    rep = check_constraints(Params(n, g, b))
    assert rep.region_feasible == _region(n, g, b)


@settings(max_examples=300, deadline=None)
@given(lattice)
def test_derived_chain_identities(pt):
    n, i, j = pt
    g, b = _point(n, i, j)
    rep = check_constraints(Params(n, g, b))
    # the q upper bound is equivalent to positive decay inside the region
    assert rep.feasible == (rep.region_feasible and rep.delta_positive)
    if not rep.feasible:
        return
    d = rep.derived
    assert 1 / d.q == 2 * b / (n + 2) + Fr(1, 2) - (g + 1) / n
    assert 2 / d.r == n * (Fr(1, 2) - 1 / d.q)
    assert d.mu == Fr(1, 2) * (1 + Fr(n, 2)) * (1 - 2 / d.q)
    assert d.delta == Fr(2 * n) * b / (n + 2) - 2
    assert 1 / d.q + 1 / d.q_conj == 1 and 1 / d.r + 1 / d.r_conj == 1
    assert 2 < d.q < Fr(2 * n) / (n + 2 - 2 * g)
    assert 0 < d.mu <= Fr(1, 2)
    # scaling relations behind the trilinear bounds
    assert 3 / d.p1 == Fr(3, 2) - g / n
    assert 1 / d.s + 1 / d.r == Fr(1, 2)
    assert 1 / d.s3 + 1 / (2 * d.r) == Fr(1, 2)
    assert all(c.satisfied for c in rep.exponent_checks)


@settings(max_examples=200, deadline=None)
@given(st.integers(min_value=1, max_value=12), st.fractions(min_value=0, max_value=4))
def test_decay_is_affine_in_beta(n, b):
    assert theoretical_decay(n, b + 1) - theoretical_decay(n, b) == Fr(2 * n, n + 2)
