"""Batch selection of a sampling scheme and a model.

Schemes are chosen from penalties alone (no labels needed); the model is then
picked by penalized importance-weighted empirical loss.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import penalties as pen
from .design import DesignSpec, Model, gram_matrix
from .errors import AllModelsFailed, GammaOutOfRange, NotEnoughSamples
from .estimator import (
    Estimate,
    SamplingScheme,
    draw_weights,
    fit_full,
    fit_weighted,
    loss_empirical,
    loss_true,
)
from .rng import stream

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CandidateCollection:
    schemes: tuple[SamplingScheme, ...]

    def __post_init__(self):
        schemes = tuple(self.schemes)
        object.__setattr__(self, "schemes", schemes)
        if not schemes:
            raise ValueError("candidate collection is empty")
        if [s.k for s in schemes] != list(range(1, len(schemes) + 1)):
            raise ValueError("scheme indices must run 1..K in order")

    def __len__(self):
        return len(self.schemes)

    def __iter__(self):
        return iter(self.schemes)

    def __getitem__(self, k: int) -> SamplingScheme:
        return self.schemes[k - 1]


@dataclass
class BatchResult:
    chosen_k_per_model: dict
    chosen_m: int
    estimate: Estimate
    penalized_loss: float
    expected_effective_samples: float
    per_model: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "chosen_k_per_model": {str(k): v for k, v in self.chosen_k_per_model.items()},
            "chosen_m": self.chosen_m,
            "coefficients": [float(c) for c in self.estimate.coefficients],
            "active_count": self.estimate.active_count,
            "model_dim": self.estimate.model_dim,
            "penalized_loss": self.penalized_loss,
            "expected_effective_samples": self.expected_effective_samples,
            "per_model": self.per_model,
        }


# --- scheme generators -----------------------------------------------------

def constant_scheme(k: int, n: int, p: float) -> SamplingScheme:
    return SamplingScheme(k=k, probs=np.full(n, float(p)), p_min=float(p), name=f"constant({p:g})")


def proportional_scheme(k: int, proxy, p_min: float) -> SamplingScheme:
    """p_i = p_min + (1 - p_min) |proxy_i| / max |proxy|."""
    a = np.abs(np.asarray(proxy, dtype=float))
    top = a.max()
    probs = np.full(a.size, 1.0) if top == 0 else p_min + (1.0 - p_min) * a / top
    return SamplingScheme(k=k, probs=probs, p_min=float(p_min), name=f"proportional({p_min:g})")


def thresholded_scheme(k: int, proxy, eta: float, low: float, high: float = 1.0) -> SamplingScheme:
    """p_i = high where |proxy_i| > eta, else low."""
    a = np.abs(np.asarray(proxy, dtype=float))
    probs = np.where(a > eta, high, low)
    return SamplingScheme(k=k, probs=probs, p_min=float(min(low, high)),
                          name=f"thresholded({eta:g},{low:g},{high:g})")


# --- selection -------------------------------------------------------------

def _argmin_first(values: Sequence[float]) -> int:
    best = 0
    for i, v in enumerate(values):
        if v < values[best]:
            best = i
    return best


def fixed_m_penalties(model: Model, collection: CandidateCollection, n: int, cfg: pen.PenaltyConfig,
                      kraft: pen.KraftWeights) -> list[float]:
    return [pen.pen_tilde(model, s.k, n, cfg, s.p_min, kraft) for s in collection]


def select_sampling_fixed_m(model: Model, collection: CandidateCollection, n: int,
                            cfg: pen.PenaltyConfig, kraft: pen.KraftWeights) -> int:
    """Index k minimizing (1 + gamma) pen1~ + (1 + 1/gamma) pen2~; lowest k on ties."""
    return collection.schemes[_argmin_first(fixed_m_penalties(model, collection, n, cfg, kraft))].k


def combined_penalties(model: Model, collection: CandidateCollection, n: int, cfg: pen.PenaltyConfig,
                       kraft: pen.KraftWeights) -> list[float]:
    return [pen.pen_combined(model, s.k, n, cfg, s.p_min, kraft) for s in collection]


def select_sampling_per_model(model: Model, collection: CandidateCollection, n: int,
                              cfg: pen.PenaltyConfig, kraft: pen.KraftWeights) -> int:
    return collection.schemes[_argmin_first(combined_penalties(model, collection, n, cfg, kraft))].k


def select_model(models: Sequence[Model], collection: CandidateCollection, design: DesignSpec, y,
                 cfg: pen.PenaltyConfig, kraft: pen.KraftWeights, seed: int, replication: int = 0,
                 grams: Sequence[np.ndarray] | None = None) -> BatchResult:
    """Pick k(m) per model, fit once per model, return the penalized-loss minimizer.

    Model i draws its weights from the stream ("batch-weights", replication, i).
    Models whose weighted Gram matrix is singular are skipped.
    """
    y = np.asarray(y, dtype=float)
    n = design.n
    chosen_k = {}
    rows = []
    best = None
    for i, model in enumerate(models):
        k = select_sampling_per_model(model, collection, n, cfg, kraft)
        scheme = collection[k]
        chosen_k[i] = k
        draw = draw_weights(scheme, stream(seed, "batch-weights", replication, i))
        g = None if grams is None else grams[i]
        try:
            est = fit_weighted(design, model, y, scheme, draw, g=g)
        except NotEnoughSamples as exc:
            log.info("model %d (dim %d) skipped: %s", i, model.dim, exc)
            rows.append({"model": i, "dim": model.dim, "k": k, "status": "failed", "reason": str(exc)})
            continue
        penalty = pen.pen_combined(model, k, n, cfg, scheme.p_min, kraft)
        total = loss_empirical(est.fitted, y, design, scheme, draw) + penalty
        rows.append({"model": i, "dim": model.dim, "k": k, "status": "ok",
                     "penalty": penalty, "penalized_loss": total})
        if best is None or total < best[0]:
            best = (total, i, est, scheme)
    if best is None:
        raise AllModelsFailed("no model could be fitted with the selected schemes")
    total, i, est, scheme = best
    return BatchResult(chosen_k_per_model=chosen_k, chosen_m=i, estimate=est, penalized_loss=float(total),
                       expected_effective_samples=float(scheme.probs.sum()), per_model=rows)


def selection_oracle_factor(gamma: float) -> float:
    if not 0 < gamma < 0.25:
        raise GammaOutOfRange(f"gamma={gamma} must lie in (0, 1/4) for the oracle inequality")
    return (1.0 + gamma) / (1.0 - 4.0 * gamma)


def oracle_gap(result: BatchResult, x0, design: DesignSpec, models: Sequence[Model],
               collection: CandidateCollection, cfg: pen.PenaltyConfig, kraft: pen.KraftWeights) -> dict:
    """Both sides of the model-selection oracle inequality for a batch result."""
    factor = selection_oracle_factor(cfg.gamma)
    x0 = np.asarray(x0, dtype=float)
    lhs = loss_true(result.estimate.fitted, x0, design, cfg.sigma2)
    terms = []
    for model in models:
        xm = fit_full(design, model, x0, g=gram_matrix(design, model)).fitted
        terms.append(loss_true(xm, x0, design, cfg.sigma2)
                     + min(combined_penalties(model, collection, design.n, cfg, kraft)))
    rhs = factor * min(terms)
    return {"lhs": lhs, "rhs": rhs, "factor": factor, "holds": bool(lhs <= rhs)}
