"""Disagreement-based sequential sampling over a fixed linear model.

The hypothesis set after step j is the level set
{beta : L_j(beta) <= L_j(x_hat_j) + Delta_j} of the quadratic empirical loss,
which is exactly an ellipsoid in coefficient space. A candidate point is
labeled with probability equal to the (capped) width of the hypothesis set at
that point. Nesting of successive sets is enforced through the minimum width
over the whole ellipsoid history, which over-approximates the width of their
intersection.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import penalties as pen
from .design import DesignSpec, Model, gram_matrix, rbar_bound
from .errors import Exhausted, NotEnoughSamples, NotPositiveDefinite
from .estimator import Estimate
from .linalg import spd_solve

log = logging.getLogger(__name__)

HORIZONS = ("design", "step", "stop")


@dataclass(frozen=True)
class HypothesisEllipsoid:
    center: np.ndarray
    shape: np.ndarray
    radius: float
    step: int
    shape_inv: np.ndarray = field(repr=False, default=None)

    @classmethod
    def build(cls, center, shape, radius, step) -> "HypothesisEllipsoid":
        d = shape.shape[0]
        inv = spd_solve(shape, np.eye(d)).solution
        return cls(center=np.asarray(center, dtype=float), shape=shape, radius=max(float(radius), 0.0),
                   step=step, shape_inv=0.5 * (inv + inv.T))

    def quad(self, beta) -> np.ndarray:
        """(beta - center)^T shape (beta - center); ``beta`` may be a stack of rows."""
        diff = np.asarray(beta, dtype=float) - self.center
        return np.einsum("...i,ij,...j->...", diff, self.shape, diff)

    def contains(self, beta, slack: float = 1e-9) -> np.ndarray:
        return self.quad(beta) <= self.radius * (1.0 + slack) + slack

    def width(self, phi) -> np.ndarray:
        """max |<phi, b - b'>| over b, b' in the ellipsoid: 2 sqrt(radius phi^T shape^-1 phi)."""
        phi = np.asarray(phi, dtype=float)
        s = np.einsum("...i,ij,...j->...", phi, self.shape_inv, phi)
        return 2.0 * np.sqrt(self.radius * np.maximum(s, 0.0))

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """Uniform draws from the solid ellipsoid."""
        d = self.center.size
        z = rng.standard_normal((count, d))
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        z *= rng.random((count, 1)) ** (1.0 / d)
        # shape = C C^T  =>  beta = center + sqrt(radius) C^{-T} z
        chol = np.linalg.cholesky(self.shape)
        return self.center + math.sqrt(self.radius) * np.linalg.solve(chol.T, z.T).T


@dataclass(frozen=True)
class IterativeConfig:
    n0: int
    m0: Model
    B_au: float
    T: int | None = None
    dim_schedule: tuple | None = None
    # union-bound log in the slack: "design" uses n(n+1), "step" the running (n0+j)(n0+j+1),
    # "stop" the known stop time T(T+1)
    horizon: str = "design"
    plugin_sigma2: bool = False
    delta0_override: float | None = None

    def __post_init__(self):
        if self.n0 < self.m0.dim:
            raise ValueError("n0 must be at least the model dimension")
        if self.horizon not in HORIZONS:
            raise ValueError(f"horizon must be one of {HORIZONS}")
        if self.dim_schedule is not None and any(
                b > a for a, b in zip(self.dim_schedule, self.dim_schedule[1:])):
            raise ValueError("dim_schedule must be nonincreasing")

    def d_at(self, j: int) -> int:
        if not self.dim_schedule:
            return self.m0.dim
        return int(self.dim_schedule[min(j, len(self.dim_schedule) - 1)])


@dataclass
class StepRecord:
    j: int
    candidate: int
    p: float
    w: int
    delta: float
    B: float
    labels_used: int
    beta_hat: np.ndarray
    # L_j(beta) = beta^T A beta - 2 beta^T b + c over the n0 + j consumed points
    lj: tuple
    ellipsoid: int  # index into the ellipsoid history of S_j


@dataclass
class IterativeState:
    j: int
    sampled: list
    remaining: list
    ellipsoids: list
    B_j: float
    deltas: list
    labels_used: int
    p_trace: list
    w_trace: list
    records: list
    beta_hat: np.ndarray
    min_width: np.ndarray
    sigma2: float
    sigma2_plugin: float | None = None
    # running sums over consumed points, importance-weighted
    gram_sum: np.ndarray = None
    rhs_sum: np.ndarray = None
    yy_sum: float = 0.0

    @property
    def ellipsoid(self) -> HypothesisEllipsoid:
        return self.ellipsoids[-1]

    def trace_rows(self) -> list[dict]:
        return [{"j": r.j, "candidate": r.candidate, "p_j": r.p, "w_j": r.w, "delta_j": r.delta,
                 "B_j": r.B, "labels_used": r.labels_used} for r in self.records]


LabelSource = Callable[[int], float]


def _lj(state: IterativeState, N: int) -> tuple:
    return (state.gram_sum / N, state.rhs_sum / N, state.yy_sum / N)


def _absorb(state, ellipsoid: HypothesisEllipsoid, phi_all: np.ndarray):
    state.ellipsoids.append(ellipsoid)
    np.minimum(state.min_width, ellipsoid.width(phi_all), out=state.min_width)
    state.B_j = float(np.max(np.minimum(state.min_width, 1.0)))


def init(design: DesignSpec, y_oracle: LabelSource, cfg: IterativeConfig, pcfg: pen.PenaltyConfig,
         rng: np.random.Generator, phi_all: np.ndarray | None = None) -> IterativeState:
    """Label a uniform random initial block of n0 points and build S_0."""
    n = design.n
    if cfg.n0 > n:
        raise ValueError("n0 exceeds the design size")
    if phi_all is None:
        phi_all = gram_matrix(design, cfg.m0)
    order = rng.permutation(n)
    initial = [int(i) for i in order[:cfg.n0]]
    remaining = sorted(int(i) for i in order[cfg.n0:])
    phi = phi_all[initial]
    q = design.q_values[initial]
    y = np.array([y_oracle(i) for i in initial])
    gram_sum = (phi.T * q) @ phi
    rhs_sum = (phi.T * q) @ y
    yy_sum = float(np.sum(q * y * y))
    a0 = gram_sum / cfg.n0
    try:
        beta0 = spd_solve(a0, rhs_sum / cfg.n0).solution
    except NotPositiveDefinite as exc:
        raise NotEnoughSamples("initial sample does not determine the model") from exc

    sigma2 = pcfg.sigma2
    plugin = None
    if cfg.n0 > cfg.m0.dim:
        resid = y - phi @ beta0
        plugin = float(np.sum(q * resid * resid) / (cfg.n0 - cfg.m0.dim))
        log.info("plug-in noise variance from initial residuals: %.6g (configured %.6g)", plugin, sigma2)
        if cfg.plugin_sigma2:
            sigma2 = plugin
    run_cfg = pcfg if sigma2 == pcfg.sigma2 else _with_sigma2(pcfg, sigma2)
    if cfg.delta0_override is not None:
        d0 = float(cfg.delta0_override)
    else:
        d0 = pen.delta0(cfg.n0, cfg.m0, run_cfg, p_min=1.0, B=cfg.B_au)

    state = IterativeState(
        j=0, sampled=list(initial), remaining=remaining, ellipsoids=[], B_j=0.0, deltas=[d0],
        labels_used=cfg.n0, p_trace=[], w_trace=[], records=[], beta_hat=beta0,
        min_width=np.full(n, np.inf), sigma2=sigma2, sigma2_plugin=plugin,
        gram_sum=gram_sum, rhs_sum=rhs_sum, yy_sum=yy_sum,
    )
    _absorb(state, HypothesisEllipsoid.build(beta0, a0, d0, 0), phi_all)
    state.records.append(StepRecord(j=0, candidate=-1, p=1.0, w=1, delta=d0, B=state.B_j,
                                    labels_used=cfg.n0, beta_hat=beta0.copy(), lj=_lj(state, cfg.n0),
                                    ellipsoid=0))
    return state


def _with_sigma2(pcfg: pen.PenaltyConfig, sigma2: float) -> pen.PenaltyConfig:
    from dataclasses import replace
    return replace(pcfg, sigma2=sigma2)


def disagreement_at(point_index: int, state: IterativeState) -> float:
    """Uncapped width of the current hypothesis set at a design point
    (minimum over the ellipsoid history)."""
    if not state.ellipsoids:
        raise ValueError("no hypothesis set yet")
    return float(state.min_width[point_index])


def step_delta(state: IterativeState, cfg: IterativeConfig, pcfg: pen.PenaltyConfig, n: int, j: int) -> float:
    horizon = None
    if cfg.horizon == "design":
        horizon = n
    elif cfg.horizon == "stop":
        horizon = cfg.T if cfg.T else n
    run_cfg = pcfg if state.sigma2 == pcfg.sigma2 else _with_sigma2(pcfg, state.sigma2)
    return pen.delta_j(j, cfg.n0, cfg.d_at(j), state.B_j, pcfg.delta, run_cfg, n, horizon=horizon)


def step(state: IterativeState, design: DesignSpec, y_oracle: LabelSource, cfg: IterativeConfig,
         pcfg: pen.PenaltyConfig, rng: np.random.Generator, phi_all: np.ndarray | None = None) -> IterativeState:
    """Consume one candidate point; query its label with probability p_j."""
    if not state.remaining:
        raise Exhausted("every design point has been consumed")
    if phi_all is None:
        phi_all = gram_matrix(design, cfg.m0)
    n = design.n
    j = state.j + 1
    cand = state.remaining.pop(int(rng.integers(len(state.remaining))))
    p = min(disagreement_at(cand, state), 1.0)
    w = int(rng.random() < p)
    delta = step_delta(state, cfg, pcfg, n, j)
    B_used = state.B_j
    N = cfg.n0 + j
    state.j = j
    state.sampled.append(cand)
    state.deltas.append(delta)
    state.p_trace.append(p)
    state.w_trace.append(w)
    if w:
        state.labels_used += 1
        y = float(y_oracle(cand))
        phi = phi_all[cand]
        scale = design.q_values[cand] / p
        state.gram_sum = state.gram_sum + scale * np.outer(phi, phi)
        state.rhs_sum = state.rhs_sum + scale * y * phi
        state.yy_sum += scale * y * y
        a, b, _ = _lj(state, N)
        beta_u = spd_solve(a, b).solution
        prev = state.ellipsoid
        beta = beta_u
        qf = float(prev.quad(beta_u))
        if qf > prev.radius:
            beta = prev.center + (beta_u - prev.center) * math.sqrt(prev.radius / qf) if qf > 0 else prev.center
        diff = beta - beta_u
        gap = float(diff @ a @ diff)
        state.beta_hat = beta
        _absorb(state, HypothesisEllipsoid.build(beta_u, a, delta + gap, j), phi_all)
    state.records.append(StepRecord(j=j, candidate=cand, p=p, w=w, delta=delta, B=B_used,
                                    labels_used=state.labels_used, beta_hat=state.beta_hat.copy(),
                                    lj=_lj(state, N), ellipsoid=len(state.ellipsoids) - 1))
    return state


def run(design: DesignSpec, y_oracle: LabelSource, cfg: IterativeConfig, pcfg: pen.PenaltyConfig,
        rng: np.random.Generator) -> tuple[IterativeState, Estimate]:
    """Initialize, then step until the stop time T or until no candidates remain."""
    if cfg.T is not None and cfg.T > design.n:
        raise ValueError("T must not exceed n")
    phi_all = gram_matrix(design, cfg.m0)
    state = init(design, y_oracle, cfg, pcfg, rng, phi_all=phi_all)
    limit = design.n - cfg.n0 if cfg.T is None else cfg.T
    while state.j < limit and state.remaining:
        step(state, design, y_oracle, cfg, pcfg, rng, phi_all=phi_all)
    est = Estimate(coefficients=state.beta_hat.copy(), fitted=phi_all @ state.beta_hat,
                   active_count=state.labels_used, model_dim=cfg.m0.dim)
    return state, est


def effective_sample_bound(state: IterativeState, design: DesignSpec, model: Model, loss_star: float,
                           cfg: IterativeConfig | None = None) -> float:
    """Upper bound on the expected number of queried labels over steps 1..T."""
    rbar = rbar_bound(design.basis, model.dim)
    dims = [cfg.d_at(j) if cfg else model.dim for j in range(1, state.j + 1)]
    deltas = state.deltas[1:state.j + 1]
    s1 = sum(math.sqrt(d) for d in dims)
    s2 = sum(math.sqrt(d * dl) for d, dl in zip(dims, deltas))
    return 2.0 * math.sqrt(2.0) * rbar * (math.sqrt(loss_star) * s1 + s2)


def quadratic_loss_coeffs(design: DesignSpec, phi_all: np.ndarray, x0, sigma2: float) -> tuple:
    """L(beta) = beta^T A beta - 2 beta^T b + c for the population loss over all design points."""
    q = design.q_values
    n = design.n
    x0 = np.asarray(x0, dtype=float)
    a = (phi_all.T * q) @ phi_all / n
    b = (phi_all.T * q) @ x0 / n
    c = float(np.sum(q * (x0 * x0 + sigma2)) / n)
    return a, b, c


def eval_quadratic(coeffs: tuple, beta) -> np.ndarray:
    a, b, c = coeffs
    beta = np.asarray(beta, dtype=float)
    return np.einsum("...i,ij,...j->...", beta, a, beta) - 2.0 * beta @ b + c


def population_minimizer(design: DesignSpec, phi_all: np.ndarray, x0) -> np.ndarray:
    a, b, _ = quadratic_loss_coeffs(design, phi_all, x0, 0.0)
    return spd_solve(a, b).solution


def label_source(y: Sequence[float]) -> LabelSource:
    y = np.asarray(y, dtype=float)
    return lambda i: float(y[i])
