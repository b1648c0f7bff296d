import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from activereg.design import (
    BasisFamily,
    DesignSpec,
    Model,
    as_deviation,
    check_conditions,
    equispaced,
    eta_s,
    gram_matrix,
    make_model,
    r_phi,
    rbar_bound,
)
from activereg.errors import ConditionViolated, UnsupportedFamily

TRIG = BasisFamily("trigonometric")


def test_histogram_gram_has_one_sqrt2_per_row():
    design = equispaced(4, BasisFamily("histogram", resolution=2))
    g = gram_matrix(design, (1, 2))
    assert np.all(np.count_nonzero(g, axis=1) == 1)
    np.testing.assert_allclose(g[g != 0], math.sqrt(2))


def test_constant_first_trig_function():
    design = equispaced(7, TRIG, layout="midpoint")
    np.testing.assert_array_equal(gram_matrix(design, (1,)), np.ones((7, 1)))


def test_trig_discrete_orthonormality():
    design = equispaced(8, TRIG)
    g = gram_matrix(design, range(1, 5))
    np.testing.assert_allclose(g.T @ g / 8, np.eye(4), atol=1e-10)


@pytest.mark.parametrize("n", [64, 128, 256])
def test_as_deviation_vanishes_on_equispaced_trig(n):
    design = equispaced(n, TRIG)
    assert check_conditions(design, make_model(design, range(1, 5))).as_deviation <= 1e-10


@pytest.mark.parametrize("kind,res", [("histogram", 8), ("piecewise-polynomial", 4)])
def test_orthonormality_localized(kind, res):
    basis = BasisFamily(kind, resolution=res, degree=1)
    design = equispaced(256, basis, layout="midpoint")
    if kind == "histogram":
        assert as_deviation(design, range(1, 9)) <= 1e-10
    else:
        # midpoint rule is exact on each piece for the constant and linear Legendre products up to O(h^2)
        assert as_deviation(design, range(1, 9)) <= 1e-3


def test_conditions_aq_and_ab():
    design = equispaced(16, TRIG)
    check_conditions(design, make_model(design, range(1, 4)))  # Q = max q passes
    bad_q = DesignSpec(design.points, design.q_values * 2, Q=1.0, basis=TRIG)
    with pytest.raises(ConditionViolated) as err:
        check_conditions(bad_q, make_model(design, range(1, 4)))
    assert err.value.tag == "AQ"
    with pytest.raises(ConditionViolated) as err:
        check_conditions(design, Model(index_set=(1, 2), c_m=0.0))
    assert err.value.tag == "AB"


def test_alpha_fit_on_midpoint_histogram_ladder():
    # midpoint trig grids are exact too; use a density-1 polynomial basis whose deviation decays
    basis = BasisFamily("polynomial")
    ladder = [equispaced(n, basis, layout="midpoint") for n in (32, 64, 128, 256)]
    model = make_model(ladder[-1], range(1, 4))
    cond = check_conditions(ladder[-1], model, ladder=ladder)
    # midpoint rule error is O(n^-2): alpha close to 1
    assert cond.alpha_hat == pytest.approx(1.0, abs=0.1)
    assert cond.c1_hat <= cond.c2_hat


def test_rbar_examples():
    assert rbar_bound(TRIG, 8) == 4.0
    assert rbar_bound(BasisFamily("histogram", resolution=3), 3) == 1.0
    assert rbar_bound(BasisFamily("piecewise-polynomial", resolution=2, degree=2), 6) == 5.0
    assert rbar_bound(BasisFamily("polynomial"), 5) == 5.0


def test_unknown_family():
    with pytest.raises(UnsupportedFamily):
        BasisFamily("wavelet")


def test_eta_examples():
    hist = equispaced(16, BasisFamily("histogram", resolution=4), layout="midpoint")
    assert eta_s(hist, range(1, 5)) == pytest.approx(1.0)
    assert eta_s(equispaced(5, TRIG), (1,)) == pytest.approx(1.0)
    v = eta_s(equispaced(16, TRIG), (1, 2))
    assert 1.0 <= v <= math.sqrt(2)


FAMILY_CASES = [BasisFamily("trigonometric"), BasisFamily("polynomial"),
                BasisFamily("histogram", resolution=8),
                BasisFamily("piecewise-polynomial", resolution=2, degree=3)]


def _full_space(kind: str, d: int) -> BasisFamily | None:
    """Family whose first d functions span the space the r-bar constant refers to."""
    if kind == "histogram":
        return BasisFamily("histogram", resolution=d)
    if kind == "piecewise-polynomial":
        return BasisFamily(kind, resolution=d // 4, degree=3) if d % 4 == 0 else None
    return BasisFamily(kind)


@pytest.mark.parametrize("kind", ["trigonometric", "polynomial", "histogram", "piecewise-polynomial"])
def test_eta_below_rbar_bound(kind):
    for d in range(1, 33):
        basis = _full_space(kind, d)
        if basis is None:
            continue
        design = equispaced(256, basis, layout="midpoint")
        assert eta_s(design, range(1, d + 1)) <= rbar_bound(basis, d) * (1 + 1e-12)


@pytest.mark.parametrize("basis", FAMILY_CASES, ids=lambda b: b.kind)
def test_bracket_against_brute_force_rbar(basis):
    design = equispaced(256, basis, layout="midpoint")
    for d in range(1, 9):
        idx = range(1, d + 1)
        e = eta_s(design, idx)
        assert e <= r_phi(design, idx) * (1 + 1e-12) <= e * math.sqrt(d) * (1 + 1e-12)


@given(st.integers(2, 64), st.sampled_from(["left", "midpoint"]))
def test_gram_deterministic(n, layout):
    design = equispaced(n, TRIG, layout=layout)
    a = gram_matrix(design, range(1, 6))
    b = gram_matrix(design, range(1, 6))
    assert a.tobytes() == b.tobytes()


def test_make_model_cm_is_sup_on_design():
    design = equispaced(64, TRIG)
    m = make_model(design, range(1, 6))
    assert m.c_m == pytest.approx(math.sqrt(2))
    assert m.dim == 5 and m.label == "d5"
