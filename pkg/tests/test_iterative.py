import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from activereg import penalties as pen
from activereg.design import BasisFamily, equispaced, gram_matrix, make_model, rbar_bound
from activereg.errors import Exhausted
from activereg.iterative import (
    HypothesisEllipsoid,
    IterativeConfig,
    disagreement_at,
    effective_sample_bound,
    init,
    label_source,
    run,
    step,
)
from activereg.rng import stream

TRIG = BasisFamily("trigonometric")


def brute_force_width(e: HypothesisEllipsoid, phi, rng, samples=100_000):
    """Max |<phi, b - b'>| over boundary points found by rejection sampling of directions."""
    d = e.center.size
    kept = []
    while sum(len(k) for k in kept) < samples:
        z = rng.uniform(-1.0, 1.0, size=(2 * samples, d))
        r = np.linalg.norm(z, axis=1)
        kept.append(z[(r <= 1.0) & (r > 0)] / r[(r <= 1.0) & (r > 0), None])
    z = np.concatenate(kept)[:samples]
    chol = np.linalg.cholesky(e.shape)
    pts = e.center + math.sqrt(e.radius) * np.linalg.solve(chol.T, z.T).T
    vals = pts @ phi
    return vals.max() - vals.min()


def test_width_examples():
    e = HypothesisEllipsoid.build(np.zeros(3), np.eye(3), 1.0, 0)
    assert e.width(np.array([1.0, 0, 0])) == pytest.approx(2.0)
    assert HypothesisEllipsoid.build(np.zeros(3), np.eye(3), 0.0, 0).width(np.ones(3)) == 0.0


@pytest.mark.parametrize("d", [1, 2, 3, 4])
def test_closed_form_width_vs_brute_force(d):
    rng = np.random.default_rng(100 + d)
    m = rng.standard_normal((d, d))
    e = HypothesisEllipsoid.build(rng.standard_normal(d), m @ m.T + 0.5 * np.eye(d), 0.7, 0)
    phi = rng.standard_normal(d)
    closed = float(e.width(phi))
    brute = brute_force_width(e, phi, rng)
    assert 0.99 * closed <= brute <= closed * (1 + 1e-12)


def _problem(n=128, d=4, sigma=0.0):
    design = equispaced(n, TRIG)
    m0 = make_model(design, range(1, d + 1))
    beta = np.array([0.5, 0.3, -0.2, 0.1])[:d]
    x0 = gram_matrix(design, m0) @ beta
    y = x0 + sigma * stream(1, "noise").standard_normal(n)
    return design, m0, x0, y


def test_init_noiseless_recovers_truth():
    design, m0, x0, y = _problem()
    cfg = IterativeConfig(n0=16, m0=m0, B_au=1.0)
    state = init(design, label_source(y), cfg, pen.PenaltyConfig(sigma2=0.0), stream(2, "it"))
    fitted = gram_matrix(design, m0) @ state.beta_hat
    np.testing.assert_allclose(fitted[state.sampled], x0[state.sampled], atol=1e-9)
    assert state.labels_used == 16 and len(state.remaining) == design.n - 16


def test_collapsed_init_never_samples():
    design, m0, x0, y = _problem()
    cfg = IterativeConfig(n0=16, m0=m0, B_au=1.0, T=50, delta0_override=0.0)
    state, _ = run(design, label_source(y), cfg, pen.PenaltyConfig(sigma2=0.0), stream(3, "it"))
    assert state.ellipsoids[0].radius == 0.0
    assert all(p == 0.0 for p in state.p_trace)
    assert state.labels_used == 16


def test_run_deterministic_and_T_zero():
    design, m0, x0, y = _problem(sigma=0.5)
    pcfg = pen.PenaltyConfig(sigma2=0.25)
    cfg = IterativeConfig(n0=16, m0=m0, B_au=1.0, T=40)
    a, ea = run(design, label_source(y), cfg, pcfg, stream(5, "it"))
    b, eb = run(design, label_source(y), cfg, pcfg, stream(5, "it"))
    assert a.p_trace == b.p_trace and a.w_trace == b.w_trace
    np.testing.assert_array_equal(ea.coefficients, eb.coefficients)
    s0, _ = run(design, label_source(y), IterativeConfig(n0=16, m0=m0, B_au=1.0, T=0), pcfg, stream(5, "it"))
    assert s0.j == 0 and len(s0.ellipsoids) == 1


def test_step_branches_and_exhaustion():
    design, m0, x0, y = _problem(n=20)
    pcfg = pen.PenaltyConfig(sigma2=0.0)
    state = init(design, label_source(y), IterativeConfig(n0=16, m0=m0, B_au=1.0), pcfg, stream(6, "it"))
    cfg = IterativeConfig(n0=16, m0=m0, B_au=1.0)
    before = state.labels_used
    step(state, design, label_source(y), cfg, pcfg, stream(6, "st"))
    # Delta_0 is large, so the width exceeds 1 and p = 1: a label is consumed
    assert state.p_trace[-1] == 1.0 and state.labels_used == before + 1
    while state.remaining:
        step(state, design, label_source(y), cfg, pcfg, stream(6, "st", state.j))
    with pytest.raises(Exhausted):
        step(state, design, label_source(y), cfg, pcfg, stream(6, "end"))


def test_nesting_surrogate_and_state_invariants():
    design, m0, x0, y = _problem(n=96, sigma=0.5)
    pcfg = pen.PenaltyConfig(sigma2=0.25)
    cfg = IterativeConfig(n0=16, m0=m0, B_au=1.0, T=60)
    phi = gram_matrix(design, m0)
    state = init(design, label_source(y), cfg, pcfg, stream(7, "it"))
    prev_w = np.array([disagreement_at(i, state) for i in range(design.n)])
    prev_B = state.B_j
    for _ in range(60):
        step(state, design, label_source(y), cfg, pcfg, stream(7, "st", state.j), phi_all=phi)
        w = np.array([disagreement_at(i, state) for i in range(design.n)])
        assert np.all(w <= prev_w + 1e-12)
        assert state.B_j <= prev_B + 1e-12
        assert state.labels_used <= len(state.sampled)
        prev_w, prev_B = w, state.B_j
    assert len(set(state.sampled)) == len(state.sampled)


def test_noiseless_refits_keep_center():
    design, m0, x0, y = _problem(n=256)
    pcfg = pen.PenaltyConfig(sigma2=0.0)
    cfg = IterativeConfig(n0=32, m0=m0, B_au=1.0, T=100)
    state, est = run(design, label_source(y), cfg, pcfg, stream(8, "it"))
    np.testing.assert_allclose(gram_matrix(design, m0) @ est.coefficients, x0, atol=1e-9)
    # slack shrinks along the run
    assert state.deltas[-1] < state.deltas[1]


def test_effective_sample_bound_histogram_formula():
    basis = BasisFamily("histogram", resolution=4)
    design = equispaced(64, basis, layout="midpoint")
    m0 = make_model(design, range(1, 5))
    y = np.repeat([0.1, 0.2, 0.3, 0.4], 16)
    cfg = IterativeConfig(n0=32, m0=m0, B_au=1.0, T=20)
    state, _ = run(design, label_source(y), cfg, pen.PenaltyConfig(sigma2=0.1), stream(9, "it"))
    L = 0.1
    want = 2 * math.sqrt(2) * (math.sqrt(L) * 20 * 2 + 2 * sum(math.sqrt(x) for x in state.deltas[1:]))
    assert rbar_bound(basis, 4) == 1.0
    assert effective_sample_bound(state, design, m0, L, cfg) == pytest.approx(want, rel=1e-12)
    state.deltas = [0.0] * len(state.deltas)
    assert effective_sample_bound(state, design, m0, 0.0, cfg) == 0.0


@given(st.integers(1, 4), st.integers(0, 2 ** 32 - 1))
def test_ellipsoid_samples_are_inside(d, seed):
    rng = np.random.default_rng(seed)
    m = rng.standard_normal((d, d))
    e = HypothesisEllipsoid.build(rng.standard_normal(d), m @ m.T + np.eye(d), float(rng.uniform(0.1, 3)), 0)
    assert np.all(e.contains(e.sample(rng, 200)))
