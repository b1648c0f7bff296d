"""Simulation scenarios: a design, a truth, noise, models, schemes and constants.

The three reference scenarios used by the bound suite live here so the tests,
the CLI and the scripts all build exactly the same objects.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import penalties as pen
from .batch import CandidateCollection, constant_scheme, proportional_scheme, thresholded_scheme
from .config import (
    DesignBlock,
    IterativeBlock,
    NoiseBlock,
    PenaltyBlock,
    RunBlock,
    ScenarioConfig,
    SchemeSpec,
    TruthBlock,
    validate_config,
)
from .design import BasisFamily, DesignSpec, equispaced, gram_matrix, load_design_csv, make_model
from .errors import ValidationError
from .estimator import NoiseSpec, SamplingScheme, empirical_norm_sq, fit_full
from .io import read_csv_columns
from .iterative import IterativeConfig


@dataclass
class Scenario:
    name: str
    design: DesignSpec
    x0: np.ndarray
    noise: NoiseSpec
    models: list
    collection: CandidateCollection
    pcfg: pen.PenaltyConfig
    seed: int = 20240601
    iterative: IterativeConfig | None = None
    W: int = 200
    grams: list = field(default_factory=list, repr=False)
    projections: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float)
        self.refresh()

    def refresh(self):
        self.grams = [gram_matrix(self.design, m) for m in self.models]
        self.projections = [fit_full(self.design, m, self.x0, g=g).fitted for m, g in zip(self.models, self.grams)]
        self.kraft = pen.KraftWeights(self.pcfg.d_of_r, self.pcfg.r_moment)
        self.kraft.check([m.dim for m in self.models], range(1, len(self.collection) + 1))

    @property
    def n(self) -> int:
        return self.design.n

    def bias(self, i: int) -> float:
        """||x0 - x_m||^2_{n,q} for the i-th model."""
        return empirical_norm_sq(self.x0 - self.projections[i], self.design.q_values)

    def sup_bias(self) -> float:
        return max(float(np.max(np.abs(self.x0 - p))) for p in self.projections)

    def with_pcfg(self, **changes) -> "Scenario":
        return replace(self, pcfg=replace(self.pcfg, **changes))


def truth_from_coefficients(design: DesignSpec, coefficients: dict | Sequence[float]) -> np.ndarray:
    """x0 on the design points from basis coefficients {index: value} (1-based)."""
    if not isinstance(coefficients, dict):
        coefficients = {j + 1: c for j, c in enumerate(coefficients)}
    x0 = np.zeros(design.n)
    for j, c in coefficients.items():
        x0 += c * design.basis.evaluate(int(j), design.points)
    return x0


def build_scenario(cfg: ScenarioConfig, base_dir=".") -> Scenario:
    """Instantiate design, truth, models, schemes and constants from a config.

    Relative CSV paths resolve against ``base_dir`` (normally the config's folder).
    """
    validate_config(cfg)
    base = Path(base_dir)
    d = cfg.design
    basis = BasisFamily(d.family, resolution=d.resolution, degree=d.degree)
    if d.csv is not None:
        design = load_design_csv(base / d.csv, basis, Q=d.Q)
    else:
        design = equispaced(d.n, basis, layout=d.layout, q=d.density)
        if d.Q is not None:
            design = replace(design, Q=d.Q)
    if cfg.truth.csv is not None:
        cols = read_csv_columns(base / cfg.truth.csv, ("x0",))
        x0 = cols["x0"]
        if x0.size != design.n:
            raise ValidationError("truth.csv", f"expected {design.n} rows, found {x0.size}")
    else:
        x0 = truth_from_coefficients(design, dict(cfg.truth.coefficients))
    models = [make_model(design, idx, label=name) for name, idx in cfg.models]
    by_name = {m.label: m for m in models}
    proxy = None
    if cfg.proxy_model is not None:
        proxy = x0 - fit_full(design, by_name[cfg.proxy_model], x0).fitted
    schemes = tuple(_build_scheme(k, s, design, proxy, base) for k, s in enumerate(cfg.schemes, start=1))
    noise = NoiseSpec(cfg.noise.sigma2, kind=cfg.noise.kind)
    p = cfg.penalty
    pcfg = pen.PenaltyConfig(delta=p.delta, gamma=p.gamma, r_moment=p.r_moment, d_of_r=p.d_of_r,
                             sigma2=noise.sigma2 if p.sigma2 is None else p.sigma2,
                             Q=design.Q if p.Q is None else p.Q, alpha=p.alpha,
                             C_bias=0.0 if p.C_bias is None else p.C_bias, c_design=p.c_design,
                             bias_proxy=dict(p.bias_proxy or ()))
    it = None
    if cfg.iterative is not None:
        b = cfg.iterative
        it = IterativeConfig(n0=b.n0, m0=by_name[b.m0], B_au=b.B_au, T=b.T, dim_schedule=b.dim_schedule,
                             horizon=b.horizon, plugin_sigma2=b.plugin_sigma2,
                             delta0_override=b.delta0_override)
    sc = Scenario(name=cfg.run.name, design=design, x0=x0, noise=noise, models=models,
                  collection=CandidateCollection(schemes), pcfg=pcfg, seed=cfg.run.seed, iterative=it,
                  W=cfg.run.W)
    changes = {}
    if p.bias_proxy is None:
        changes["bias_proxy"] = {m.label: sc.bias(i) for i, m in enumerate(sc.models)}
    if p.C_bias is None:
        changes["C_bias"] = sc.sup_bias()
    if changes:
        sc.pcfg = replace(sc.pcfg, **changes)
    return sc


def _build_scheme(k: int, s: SchemeSpec, design: DesignSpec, proxy, base: Path) -> SamplingScheme:
    n = design.n
    if s.kind == "constant":
        return constant_scheme(k, n, s.args[0])
    if s.kind == "proportional":
        return proportional_scheme(k, proxy, s.args[0])
    if s.kind == "thresholded":
        eta = float(np.median(np.abs(proxy))) if s.args[0] == "median" else s.args[0]
        return thresholded_scheme(k, proxy, eta=eta, low=s.args[1], high=s.args[2])
    if s.kind == "vector":
        probs = np.asarray(s.args, dtype=float)
    else:
        probs = read_csv_columns(base / s.args[0], ("p",))["p"]
    if probs.size != n:
        raise ValidationError(f"schemes.{s.name}", f"needs {n} probabilities, found {probs.size}")
    return SamplingScheme.from_probs(k, probs, name=s.name)


def standard_schemes(p_min: float) -> tuple:
    """Four candidate schemes sharing the floor ``p_min``."""
    return (SchemeSpec("k1", "constant", (p_min,)),
            SchemeSpec("k2", "proportional", (p_min,)),
            SchemeSpec("k3", "thresholded", ("median", p_min, 1.0)),
            SchemeSpec("k4", "constant", (min(1.0, 2.0 * p_min),)))


def _penalty() -> PenaltyBlock:
    return PenaltyBlock(delta=0.1, gamma=0.2, r_moment=2.0, d_of_r=1.0, alpha=1.0)


# A: one model (trig, d = 8), bias exactly 0.05 from two out-of-model terms.
A_COEFFS = {1: 1.0, 2: 0.8, 3: -0.5, 4: 0.4, 5: 0.3, 6: -0.2, 7: 0.15, 8: 0.1, 9: 0.2, 12: 0.1}


def config_a(seed: int = 20240601) -> ScenarioConfig:
    return ScenarioConfig(
        run=RunBlock(seed=seed, name="A"), design=DesignBlock(n=256),
        truth=TruthBlock(coefficients=tuple(A_COEFFS.items())), noise=NoiseBlock(sigma2=0.25),
        models=(("d8", tuple(range(1, 9))),), schemes=standard_schemes(0.25), proxy_model="d8",
        penalty=_penalty())


# B: three nested trig models, polynomially decaying coefficients.
def b_coefficients(count: int = 40) -> dict:
    return {j: 1.2 * (-1) ** j * j ** -1.5 for j in range(1, count + 1)}


def config_b(seed: int = 20240602) -> ScenarioConfig:
    return ScenarioConfig(
        run=RunBlock(seed=seed, name="B"), design=DesignBlock(n=256),
        truth=TruthBlock(coefficients=tuple(b_coefficients().items())), noise=NoiseBlock(sigma2=0.25),
        models=tuple((f"d{d}", tuple(range(1, d + 1))) for d in (4, 8, 16)),
        schemes=standard_schemes(0.25), proxy_model="d8", penalty=_penalty())


# C: iterative sampling, trig d0 = 4 on n = 512.
C_COEFFS = {1: 0.5, 2: 0.4, 3: -0.3, 4: 0.2, 5: 0.05, 7: -0.05}


def config_c(seed: int = 20240603) -> ScenarioConfig:
    return ScenarioConfig(
        run=RunBlock(seed=seed, name="C"), design=DesignBlock(n=512),
        truth=TruthBlock(coefficients=tuple(C_COEFFS.items())), noise=NoiseBlock(sigma2=0.25),
        models=(("d4", (1, 2, 3, 4)),), schemes=(SchemeSpec("k1", "constant", (1.0,)),),
        penalty=_penalty(), iterative=IterativeBlock(n0=64, m0="d4", B_au=1.0, T=448))


CONFIGS = {"A": config_a, "B": config_b, "C": config_c}


def scenario_a(seed: int = 20240601) -> Scenario:
    return build_scenario(config_a(seed))


def scenario_b(seed: int = 20240602) -> Scenario:
    return build_scenario(config_b(seed))


def scenario_c(seed: int = 20240603) -> Scenario:
    return build_scenario(config_c(seed))


SCENARIOS = {"A": scenario_a, "B": scenario_b, "C": scenario_c}
