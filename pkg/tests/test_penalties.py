"""Penalty formulas against an independent high-precision evaluation."""

import math

import mpmath as mp
import pytest
from hypothesis import given, strategies as st

from activereg import penalties as pen
from activereg.design import Model
from activereg.errors import MissingBiasProxy, ValidationError

mp.mp.dps = 40
SQ2 = math.sqrt(2)


def model(d, c=SQ2, label=None):
    return Model(index_set=tuple(range(1, d + 1)), c_m=c, label=label or f"d{d}")


def cfg(**kw):
    base = dict(delta=0.05, gamma=0.2, r_moment=2.0, d_of_r=1.0, sigma2=1.0, Q=1.0, alpha=1.0, C_bias=1.0)
    base.update(kw)
    return pen.PenaltyConfig(**base)


def mp_beta(c, d, k, n, Q, p, delta, log_arg):
    return (mp.mpf(c) * (mp.sqrt(17) + 1) / 2 * mp.sqrt(mp.mpf(d) * Q / (mp.mpf(n) * p))
            * mp.sqrt(2 * mp.log(log_arg)))


def test_beta_tilde_oracle():
    c = cfg()
    want = mp_beta(SQ2, 4, 1, 256, 1, mp.mpf("0.25"), mp.mpf("0.05"),
                   mp.mpf(2) ** mp.mpf("1.75") * 4 * 1 * 2 / mp.mpf("0.05"))
    assert pen.beta_tilde(model(4), 1, 256, c, 0.25) == pytest.approx(float(want), rel=1e-13)


def test_beta_tilde_clamp_and_scaling():
    assert pen.clamped_log(0.5) == 0.0
    assert pen.clamped_log(1.0) == 0.0
    assert pen.beta_tilde(model(1), 1, 256, unchecked(delta=20.0), 0.25) == 0.0
    big = cfg(delta=0.99)
    b1 = pen.beta_tilde(model(4), 1, 256, big, 0.25)
    b2 = pen.beta_tilde(model(4), 1, 512, big, 0.25)
    assert b2 / b1 == pytest.approx(1 / math.sqrt(2), rel=1e-12)


def test_pen1_tilde():
    m = model(4)
    assert pen.pen1_tilde(m, 1, 256, cfg(bias_proxy={"d4": 0.0}), 0.25) == 0.0
    c = cfg(bias_proxy={"d4": 0.1})
    b = mp.mpf(pen.beta_tilde(m, 1, 256, c, 0.25))
    want = mp.mpf("0.1") * (b * (1 + mp.sqrt(b))) ** 2
    assert pen.pen1_tilde(m, 1, 256, c, 0.25) == pytest.approx(float(want), rel=1e-13)
    with pytest.raises(MissingBiasProxy):
        pen.pen1_tilde(m, 1, 256, cfg(), 0.25)


def test_pen1_tilde_unit_beta():
    # choose n so that beta-tilde = 1 exactly: pen1 = bias * (1 * 2)^2
    m, c = model(4), cfg(bias_proxy={4: 1.0})
    b256 = pen.beta_tilde(m, 1, 256, c, 0.25)
    n = 256 * b256 ** 2
    assert pen.beta_tilde(m, 1, n, c, 0.25) == pytest.approx(1.0, rel=1e-12)
    assert pen.pen1_tilde(m, 1, n, c, 0.25) == pytest.approx(4.0, rel=1e-11)


def test_pen2_tilde_example():
    c = cfg(delta=2 / math.e)
    kraft = pen.KraftWeights(1.0, 2.0, table={(4, 1): 0.0})
    assert pen.pen2_tilde(model(4), 1, 256, c, kraft) == pytest.approx(11 / 256, rel=1e-12)
    assert pen.pen2_tilde(model(4), 1, 256, cfg(sigma2=0.0), kraft) == 0.0
    a = pen.pen2_tilde(model(4), 1, 256, c, kraft)
    assert pen.pen2_tilde(model(4), 1, 128, c, kraft) / a == pytest.approx(2.0, rel=1e-12)


def test_pen0_example():
    c = cfg(C_bias=1.0, delta=0.06)
    want = 2 * math.sqrt(math.log(200) / 400)
    assert pen.pen0(model(1), 1, 200, c, 0.5) == pytest.approx(want, rel=1e-12)
    assert pen.pen0(model(1), 1, 200, cfg(C_bias=0.0), 0.5) == 0.0
    assert pen.pen0(model(1), 1, 800, c, 0.5) / pen.pen0(model(1), 1, 200, c, 0.5) == pytest.approx(0.5)


def test_pen1_ms_oracle():
    c = cfg(C_bias=1.0)
    log_arg = 3 * mp.mpf(2) ** mp.mpf("1.75") * 16 * 5 * 1 * 2 / mp.mpf("0.05")
    b = mp_beta(SQ2, 4, 1, 256, 1, mp.mpf("0.25"), mp.mpf("0.05"), log_arg)
    want = 1 * 1 * b ** 2 * (1 + mp.sqrt(b)) ** 2
    assert pen.pen1_ms(model(4), 1, 256, c, 0.25) == pytest.approx(float(want), rel=1e-12)
    assert pen.pen1_ms(model(4), 1, 256, cfg(C_bias=0.0), 0.25) == 0.0


def test_beta_ms_dominates_beta_tilde():
    for d in (1, 2, 4, 8, 16):
        for k in (1, 2, 5, 10):
            for delta in (0.01, 0.1, 0.5):
                c = cfg(delta=delta)
                assert pen.beta_ms(model(d), k, 256, c, 0.3) >= pen.beta_tilde(model(d), k, 256, c, 0.3)


def unchecked(**kw):
    """Config with out-of-range values, for formula arithmetic checks only."""
    c = cfg()
    for key, val in kw.items():
        setattr(c, key, val)
    return c


def test_pen2_ms_example_and_monotone():
    c = unchecked(delta=6 / math.e)
    kraft = pen.KraftWeights(1.0, 2.0, table={(4, 1): 0.0})
    assert pen.pen2_ms(model(4), 1, 256, c, kraft) == pytest.approx(11 / 256, rel=1e-12)
    assert pen.pen2_ms(model(4), 1, 256, cfg(sigma2=0.0), kraft) == 0.0
    vals = [pen.pen2_ms(model(4), 1, n, cfg(), pen.KraftWeights(1.0, 2.0)) for n in (16, 64, 256, 1024)]
    assert all(a >= b for a, b in zip(vals, vals[1:]))


def test_pen_combined_coefficients():
    c = unchecked(gamma=1.0, C_bias=0.7)
    kraft = pen.KraftWeights(1.0, 2.0)
    m, n = model(4), 256
    p0, p1, p2 = pen.pen0(m, 1, n, c, 1.0), pen.pen1_ms(m, 1, n, c, 1.0), pen.pen2_ms(m, 1, n, c, kraft)
    want = 2 * p0 + 2 * p1 + 4 * p2 + 2 * (2 * n ** -2.0 * 0.7) ** 2
    assert pen.pen_combined(m, 1, n, c, 1.0, kraft) == pytest.approx(want, rel=1e-13)
    zero = cfg(sigma2=0.0, C_bias=0.0)
    assert pen.pen_combined(m, 1, n, zero, 0.5, kraft) == 0.0


def test_pen_combined_decreasing_in_pmin():
    kraft = pen.KraftWeights(1.0, 2.0)
    for d in (2, 8):
        vals = [pen.pen_combined(model(d), 2, 256, cfg(), p, kraft) for p in (0.1, 0.2, 0.4, 0.8, 1.0)]
        assert all(a > b for a, b in zip(vals, vals[1:]))


def test_kraft():
    kw = pen.KraftWeights(1.0, 2.0)
    assert kw.summand(1, 1) == pytest.approx(1 / 36, rel=1e-12)
    assert kw.kraft_sum(range(1, 17), range(1, 17)) < 0.25
    assert all(kw.L(d, k) >= 0 for d in range(1, 20) for k in range(1, 20))
    assert pen.default_kraft(16, 16, cfg()).kraft_sum(range(1, 17), range(1, 17)) < 1
    with pytest.raises(ValidationError):
        pen.KraftWeights(1.0, 2.0, table={(1, 1): 0.0}).check([1], [1])


def test_delta0_oracle():
    m = model(4)
    c = cfg(delta=0.1, sigma2=1.0)
    b = mp.mpf(SQ2) * (mp.sqrt(17) + 1) / 2 * mp.sqrt(mp.mpf(4) / 64) * mp.sqrt(
        2 * mp.log(mp.mpf(2) ** mp.mpf("1.75") * 4 / mp.mpf("0.1")))
    want = 2 * (2 * mp.mpf(5) / 64 + mp.log(20) ** 2 / 64) + 2 * (b * (1 + b)) ** 2 * 4
    assert pen.delta0(64, m, c, 1.0, B=2.0) == pytest.approx(float(want), rel=1e-12)
    assert pen.delta0(64, m, cfg(sigma2=0.0), 1.0, B=0.0) == 0.0
    vals = [pen.delta0(64, m, c, 1.0, B=b) for b in (0.0, 0.5, 1.0, 2.0)]
    assert all(a < b for a, b in zip(vals, vals[1:]))


def test_delta_j_oracle():
    c = cfg(delta=0.1, sigma2=1.0)
    N = mp.mpf(100)
    lg = mp.log(4 * N * (N + 1) / mp.mpf("0.1"))
    want = (mp.sqrt(2 * 5 / N + lg ** 2 / N) + mp.sqrt(lg * 16 * 1 * 1 / N)
            + 4 * mp.sqrt(4 * 5 * mp.log(512) / N))
    assert pen.delta_j(36, 64, 4, 1.0, 0.1, c, 512) == pytest.approx(float(want), rel=1e-12)


def test_delta_j_term_isolation_and_decay():
    c = cfg(sigma2=0.0)
    only = 4 * math.sqrt(4 * 5 * math.log(512) / 100)
    assert pen.delta_j(36, 64, 4, 0.0, 0.1, c, 512) == pytest.approx(only, rel=1e-12)
    vals = [pen.delta_j(j, 64, 4, 1.0, 0.1, cfg(), 10 ** 7) for j in (10 ** 2, 10 ** 4, 10 ** 6)]
    assert vals[0] > vals[1] > vals[2]
    assert vals[2] < 0.1 * vals[0]


@given(st.floats(1e-4, 0.5), st.integers(1, 64), st.integers(1, 50))
def test_clamp_inactive_on_config_grid(delta, d, k):
    assert pen.TWO_7_4 * d * k * (k + 1) / delta > 1
    assert 6 * d * (d + 1) / delta > 1
    assert 2 / delta > 1


@given(st.integers(1, 32), st.integers(1, 20), st.integers(8, 4096), st.floats(0.05, 1.0),
       st.floats(0.0, 4.0), st.floats(0.0, 3.0))
def test_penalties_nonnegative_finite(d, k, n, p, s2, C):
    c = cfg(sigma2=s2, C_bias=C, bias_proxy={f"d{d}": 0.3})
    kraft = pen.KraftWeights(1.0, 2.0)
    m = model(d)
    vals = [pen.pen1_tilde(m, k, n, c, p), pen.pen2_tilde(m, k, n, c, kraft), pen.pen0(m, k, n, c, p),
            pen.pen1_ms(m, k, n, c, p), pen.pen2_ms(m, k, n, c, kraft), pen.pen_combined(m, k, n, c, p, kraft)]
    assert all(math.isfinite(v) and v >= 0 for v in vals)


def test_config_validation():
    with pytest.raises(ValidationError) as err:
        cfg(gamma=1.5)
    assert err.value.field == "gamma" and err.value.constraint == "in (0,1)"
    with pytest.raises(ValidationError):
        cfg(r_moment=1.0)
