"""Penalties and slack radii for sampling-scheme and model selection.

Every function here is a closed-form, deterministic evaluation. Whenever a
``log(x / delta)`` argument would be <= 1 the log is clamped to 0, so the
functions stay total for nonsensical confidence levels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

from .errors import MissingBiasProxy, ValidationError

SQRT17_PLUS_1 = math.sqrt(17.0) + 1.0
TWO_7_4 = 2.0 ** 1.75


def clamped_log(x: float) -> float:
    return math.log(x) if x > 1.0 else 0.0


@dataclass
class PenaltyConfig:
    delta: float = 0.1
    gamma: float = 0.2
    r_moment: float = 2.0
    d_of_r: float = 1.0
    sigma2: float = 0.25
    Q: float = 1.0
    alpha: float = 1.0
    C_bias: float = 1.0
    c_design: float = 1.0
    # model label (or dimension) -> stand-in for ||x0 - x_m||^2_{n,q}
    bias_proxy: dict = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    def validate(self):
        checks = [
            ("delta", 0 < self.delta < 1, "in (0,1)"),
            ("gamma", 0 < self.gamma < 1, "in (0,1)"),
            ("r_moment", self.r_moment > 1, "> 1"),
            ("d_of_r", self.d_of_r > 0, "> 0"),
            ("sigma2", self.sigma2 >= 0, ">= 0"),
            ("Q", self.Q > 0, "> 0"),
            ("alpha", self.alpha > 0, "> 0"),
            ("C_bias", self.C_bias >= 0, ">= 0"),
            ("c_design", self.c_design >= 0, ">= 0"),
        ]
        for name, ok, constraint in checks:
            if not ok:
                raise ValidationError(name, constraint)
        for key, val in self.bias_proxy.items():
            if not val >= 0:
                raise ValidationError(f"bias_proxy[{key}]", ">= 0")

    def bias_for(self, model) -> float:
        for key in (model.label, model.dim):
            if key in self.bias_proxy:
                return float(self.bias_proxy[key])
        raise MissingBiasProxy(f"no bias proxy for model {model.label or model.dim}")


class KraftWeights:
    """Slack weights L(d_m, k) for the union bound over models and schemes.

    The default choice makes exp(-sqrt(d r L (d_m + 1))) equal to
    1 / ((d_m + 1)(d_m + 2)(k + 1)(k + 2)), whose double sum over distinct
    dimensions and k >= 1 stays below 1/4. An explicit ``table`` keyed by
    ``(dim, k)`` overrides the default.
    """

    def __init__(self, d_of_r: float, r_moment: float, table: dict | None = None):
        self.d_of_r = d_of_r
        self.r_moment = r_moment
        self.table = dict(table or {})

    def L(self, dim: int, k: int) -> float:
        if (dim, k) in self.table:
            return float(self.table[(dim, k)])
        s = math.log((dim + 1) * (dim + 2)) + math.log((k + 1) * (k + 2))
        return s * s / (self.d_of_r * self.r_moment * (dim + 1))

    def summand(self, dim: int, k: int) -> float:
        return math.exp(-math.sqrt(self.d_of_r * self.r_moment * self.L(dim, k) * (dim + 1)))

    def kraft_sum(self, dims: Iterable[int], ks: Iterable[int]) -> float:
        ks = list(ks)
        return sum(self.summand(dm, k) for dm in set(dims) for k in ks)

    def check(self, dims: Iterable[int], ks: Iterable[int]) -> float:
        total = self.kraft_sum(dims, ks)
        if not total < 1.0:
            raise ValidationError("kraft", f"sum {total:.6g} is not < 1")
        return total


def default_kraft(max_dim: int, max_k: int, cfg: PenaltyConfig) -> KraftWeights:
    kw = KraftWeights(cfg.d_of_r, cfg.r_moment)
    kw.check(range(1, max_dim + 1), range(1, max_k + 1))
    return kw


def beta_tilde(model, k: int, n: int, cfg: PenaltyConfig, p_min: float) -> float:
    """Matrix-deviation radius for a fixed model and the k-th scheme."""
    dm = model.dim
    log_term = clamped_log(TWO_7_4 * dm * k * (k + 1) / cfg.delta)
    return (model.c_m * SQRT17_PLUS_1 / 2.0 * math.sqrt(dm * cfg.Q / (n * p_min))
            * math.sqrt(2.0 * log_term))


def pen1_tilde(model, k: int, n: int, cfg: PenaltyConfig, p_min: float) -> float:
    b = beta_tilde(model, k, n, cfg, p_min)
    return cfg.bias_for(model) * (b * (1.0 + math.sqrt(b))) ** 2


def pen2_tilde(model, k: int, n: int, cfg: PenaltyConfig, kraft: KraftWeights) -> float:
    dm = model.dim
    lk = kraft.L(dm, k)
    log_term = clamped_log(2.0 / cfg.delta)
    return (cfg.sigma2 * cfg.r_moment * cfg.Q * (1.0 + lk) * (dm + 1) / n
            + cfg.sigma2 * cfg.Q * log_term ** 2 / (cfg.d_of_r * n))


def pen_tilde(model, k: int, n: int, cfg: PenaltyConfig, p_min: float, kraft: KraftWeights) -> float:
    """Fixed-model selection criterion (1 + gamma) pen1 + (1 + 1/gamma) pen2."""
    g = cfg.gamma
    return ((1.0 + g) * pen1_tilde(model, k, n, cfg, p_min)
            + (1.0 + 1.0 / g) * pen2_tilde(model, k, n, cfg, kraft))


def pen0(model, k: int, n: int, cfg: PenaltyConfig, p_k_min: float) -> float:
    dm = model.dim
    log_term = clamped_log(6.0 * dm * (dm + 1) / cfg.delta)
    return cfg.Q * cfg.C_bias ** 2 / p_k_min * math.sqrt(log_term / (2.0 * n))


def beta_ms(model, k: int, n: int, cfg: PenaltyConfig, p_k_min: float) -> float:
    """Model-selection version of the deviation radius (wider union bound)."""
    dm = model.dim
    log_term = clamped_log(3.0 * TWO_7_4 * dm * dm * (dm + 1) * k * (k + 1) / cfg.delta)
    return (model.c_m * SQRT17_PLUS_1 / 2.0 * math.sqrt(dm * cfg.Q / (n * p_k_min))
            * math.sqrt(2.0 * log_term))


def pen1_ms(model, k: int, n: int, cfg: PenaltyConfig, p_k_min: float) -> float:
    b = beta_ms(model, k, n, cfg, p_k_min)
    return cfg.Q * cfg.C_bias * b * b * (1.0 + math.sqrt(b)) ** 2


def pen2_ms(model, k: int, n: int, cfg: PenaltyConfig, kraft: KraftWeights) -> float:
    dm = model.dim
    lmk = kraft.L(dm, k)
    log_term = clamped_log(6.0 / cfg.delta)
    return cfg.Q * cfg.sigma2 * (cfg.r_moment * (1.0 + lmk) * (dm + 1) / n
                                 + log_term ** 2 / (cfg.d_of_r * n))


def design_deviation_term(n: int, cfg: PenaltyConfig, p_min: float, alpha: float | None = None) -> float:
    a = cfg.alpha if alpha is None else alpha
    return 2.0 * ((cfg.c_design + 1.0) * n ** (-(1.0 + a)) * cfg.Q * cfg.C_bias / p_min) ** 2


def pen_combined(model, k: int, n: int, cfg: PenaltyConfig, p_min: float, kraft: KraftWeights,
                 alpha: float | None = None) -> float:
    """Combined model-selection penalty pen(m, P_k, delta, gamma, n)."""
    g = cfg.gamma
    return (2.0 * pen0(model, k, n, cfg, p_min)
            + (1.0 / p_min + 1.0 / g) * pen1_ms(model, k, n, cfg, p_min)
            + (1.0 / p_min ** 2 * (2.0 / g + 1.0) + 1.0 / g) * pen2_ms(model, k, n, cfg, kraft)
            + design_deviation_term(n, cfg, p_min, alpha))


def beta_tilde_init(model, n0: int, cfg: PenaltyConfig, p_min: float = 1.0) -> float:
    """Deviation radius used to seed the iterative procedure (no scheme index)."""
    d0 = model.dim
    log_term = clamped_log(TWO_7_4 * d0 / cfg.delta)
    return (model.c_m * SQRT17_PLUS_1 / 2.0 * math.sqrt(d0 * cfg.Q / (n0 * p_min))
            * math.sqrt(2.0 * log_term))


def delta0(n0: int, model, cfg: PenaltyConfig, p_min: float, B: float) -> float:
    """Initial slack: noise part with r = gamma = 2 plus the bias part bounded by B^2."""
    d0 = model.dim
    b = beta_tilde_init(model, n0, cfg, p_min)
    lg = clamped_log(2.0 / cfg.delta)
    return (2.0 * cfg.sigma2 * cfg.Q * (2.0 * (d0 + 1) / n0 + lg ** 2 / n0)
            + 2.0 * (b * (1.0 + b)) ** 2 * B * B)


def delta_j(j: int, n0: int, d_j: int, B_j: float, delta: float, cfg: PenaltyConfig, n: int,
            horizon: int | None = None) -> float:
    """Slack at iteration j.

    ``horizon`` replaces the running index n0 + j inside the union-bound log
    by a fixed stop time T when one is known in advance.
    """
    N = n0 + j
    h = N if horizon is None else horizon
    lg = clamped_log(4.0 * h * (h + 1) / delta)
    noise = math.sqrt(cfg.sigma2 * cfg.Q * (2.0 * (d_j + 1) / N + lg ** 2 / N))
    bounded = math.sqrt(lg * 16.0 * B_j ** 2 * min(2.0 * B_j, 1.0) ** 2 * cfg.Q ** 2 / N)
    complexity = 4.0 * math.sqrt(4.0 * (d_j + 1) * math.log(n) / N)
    return noise + bounded + complexity
