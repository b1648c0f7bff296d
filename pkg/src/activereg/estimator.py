"""Importance-weighted least squares on a fixed design.

Each design point i is queried with probability p_i; the observed terms are
reweighted by q_i w_i / p_i so the subsampled loss is unbiased for the full
q-weighted loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .design import DesignSpec, Model, gram_matrix
from .errors import NotEnoughSamples, NotPositiveDefinite
from .linalg import spd_solve

NOISE_KINDS = ("gaussian", "bounded-symmetric")


@dataclass(frozen=True)
class SamplingScheme:
    k: int
    probs: np.ndarray
    p_min: float
    name: str = ""

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        object.__setattr__(self, "probs", probs)
        if self.k < 1:
            raise ValueError("scheme index k must be >= 1")
        if not self.p_min > 0:
            raise ValueError("p_min must be positive")
        if np.any(probs > 1.0) or np.any(probs < self.p_min * (1 - 1e-12)):
            raise ValueError(f"scheme {self.k}: probabilities must lie in [p_min, 1]")

    @classmethod
    def from_probs(cls, k: int, probs, name: str = "") -> "SamplingScheme":
        probs = np.asarray(probs, dtype=float)
        return cls(k=k, probs=probs, p_min=float(probs.min()), name=name)


@dataclass(frozen=True)
class WeightDraw:
    uniforms: np.ndarray
    weights: np.ndarray

    @property
    def active_count(self) -> int:
        return int(self.weights.sum())


@dataclass(frozen=True)
class Estimate:
    coefficients: np.ndarray
    fitted: np.ndarray
    active_count: int
    model_dim: int


@dataclass(frozen=True)
class NoiseSpec:
    sigma2: float
    kind: str = "gaussian"

    def __post_init__(self):
        if self.sigma2 < 0:
            raise ValueError("sigma2 must be >= 0")
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"noise kind must be one of {NOISE_KINDS}")

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        sigma = np.sqrt(self.sigma2)
        if self.kind == "gaussian":
            return sigma * rng.standard_normal(size)
        a = sigma * np.sqrt(3.0)
        return rng.uniform(-a, a, size)


def empirical_norm_sq(v, r_weights) -> float:
    """(1/n) sum r_i v_i^2, the squared empirical r-norm."""
    v = np.asarray(v, dtype=float)
    r = np.asarray(r_weights, dtype=float)
    if v.shape != r.shape:
        raise ValueError("vector and weights must have equal length")
    return float(np.sum(r * v * v) / v.size)


def draw_from_uniforms(probs, u) -> WeightDraw:
    u = np.asarray(u, dtype=float)
    return WeightDraw(uniforms=u, weights=(u < np.asarray(probs)).astype(float))


def draw_weights(scheme: SamplingScheme, rng: np.random.Generator) -> WeightDraw:
    """Bernoulli(p_i) weights as w_i = 1{u_i < p_i}."""
    return draw_from_uniforms(scheme.probs, rng.random(scheme.probs.size))


def importance_weights(design: DesignSpec, probs, weights) -> np.ndarray:
    """Diagonal of D_{w,q,p}: q_i w_i / p_i (0 where w_i = 0)."""
    probs = np.asarray(probs, dtype=float)
    weights = np.asarray(weights, dtype=float)
    out = np.zeros_like(probs)
    on = weights > 0
    out[on] = design.q_values[on] * weights[on] / probs[on]
    return out


def solve_weighted(g: np.ndarray, d: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Coefficients solving (G^T D G) b = G^T D y; ``y`` may hold several columns."""
    n = g.shape[0]
    a = (g.T * d) @ g / n
    rhs = (g.T * d) @ y / n
    try:
        return spd_solve(a, rhs).solution
    except NotPositiveDefinite as exc:
        raise NotEnoughSamples(
            f"weighted Gram matrix is singular with {int(np.count_nonzero(d))} active samples",
            min_pivot=exc.min_pivot,
        ) from exc


def fit_weighted(design: DesignSpec, model: Model, y, scheme: SamplingScheme, draw: WeightDraw,
                 g: np.ndarray | None = None) -> Estimate:
    """Importance-weighted least-squares estimate R_{m,p} y over the model span."""
    y = np.asarray(y, dtype=float)
    if y.shape != (design.n,) or scheme.probs.shape != (design.n,):
        raise ValueError("y and probabilities must match the design size")
    if g is None:
        g = gram_matrix(design, model)
    d = importance_weights(design, scheme.probs, draw.weights)
    beta = solve_weighted(g, d, y)
    return Estimate(coefficients=beta, fitted=g @ beta, active_count=draw.active_count, model_dim=model.dim)


def fit_full(design: DesignSpec, model: Model, y, g: np.ndarray | None = None) -> Estimate:
    """Plain q-weighted least squares on all points (the projector R_m)."""
    if g is None:
        g = gram_matrix(design, model)
    beta = solve_weighted(g, design.q_values, np.asarray(y, dtype=float))
    return Estimate(coefficients=beta, fitted=g @ beta, active_count=design.n, model_dim=model.dim)


def loss_empirical(x_fitted, y, design: DesignSpec, scheme: SamplingScheme, draw: WeightDraw) -> float:
    """L_n(x, y, p) = (1/n) sum q_i (w_i / p_i) (x_i - y_i)^2."""
    r = np.asarray(x_fitted, dtype=float) - np.asarray(y, dtype=float)
    return empirical_norm_sq(r, importance_weights(design, scheme.probs, draw.weights))


def loss_true(x_fitted, x0, design: DesignSpec, sigma2: float) -> float:
    """L(x) = (1/n) sum q_i [(x - x0)^2(t_i) + sigma^2]."""
    r = np.asarray(x_fitted, dtype=float) - np.asarray(x0, dtype=float)
    return float(np.mean(design.q_values * (r * r + sigma2)))
