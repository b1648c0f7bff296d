"""Monte Carlo checks of the probability bounds behind the procedures.

Each check simulates a scenario many times on independent derived streams,
counts how often the bounded quantity exceeds its bound, and compares the
frequency with the nominal level. The default verdict passes only when the
Wilson 95% upper limit of the frequency is at or below the nominal level.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import partial
from typing import Callable

import numpy as np

from . import penalties as pen
from .batch import oracle_gap, select_model, select_sampling_fixed_m
from .design import gram_matrix
from .errors import NotEnoughSamples
from .estimator import (
    draw_from_uniforms,
    draw_weights,
    empirical_norm_sq,
    fit_weighted,
    importance_weights,
    loss_true,
    solve_weighted,
)
from .iterative import (
    HypothesisEllipsoid,
    effective_sample_bound,
    eval_quadratic,
    label_source,
    population_minimizer,
    quadratic_loss_coeffs,
    run as run_iterative,
)
from .linalg import spectral_norm
from .rng import stream
from .scenarios import Scenario

TAU = (math.sqrt(17.0) + 1.0) / 4.0
# a statistic counts as an exceedance only beyond floating-point noise
ROUNDOFF = 1e-12
BOUND_IDS = ("L1_pen1", "L3_pen2", "L4_noise_tail", "L7_pen0", "L2_moment", "L2_tail",
             "L6_delta1", "L6_delta2", "T1", "T2", "T3")


def wilson_interval(successes: int, trials: int, z: float = 1.959963984540054) -> tuple[float, float]:
    if trials <= 0:
        return 0.0, 1.0
    p = successes / trials
    z2 = z * z
    denom = 1.0 + z2 / trials
    centre = (p + z2 / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z2 / (4 * trials * trials)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


@dataclass
class BoundEntry:
    bound_id: str
    label: str
    exceedances: int
    replications: int
    nominal: float
    rule: str = "wilson"  # "wilson" | "all" (no exceedance allowed) | "frequency" | "value"
    observed: float | None = None  # for rule == "value": statistic compared with nominal
    extra: dict = field(default_factory=dict)
    wall_time: float = 0.0
    stats: list = field(default_factory=list, repr=False)

    @property
    def frequency(self) -> float:
        return self.exceedances / self.replications if self.replications else 0.0

    @property
    def wilson(self) -> tuple[float, float]:
        return wilson_interval(self.exceedances, self.replications)

    @property
    def passed(self) -> bool:
        if self.rule == "wilson":
            return self.wilson[1] <= self.nominal
        if self.rule == "all":
            return self.exceedances == 0
        if self.rule == "frequency":
            return self.frequency <= self.nominal
        return self.observed is not None and self.observed <= self.nominal

    def to_dict(self) -> dict:
        lo, hi = self.wilson
        out = {"bound_id": self.bound_id, "label": self.label, "replications": self.replications,
               "exceedances": self.exceedances, "frequency": self.frequency, "wilson_low": lo,
               "wilson_high": hi, "nominal": self.nominal, "rule": self.rule, "passed": self.passed}
        if self.observed is not None:
            out["observed"] = self.observed
        if self.rule == "wilson" and wilson_interval(0, self.replications)[1] > self.nominal:
            # even zero exceedances could not pass at this replication count
            out["underpowered"] = True
        if self.extra:
            out["extra"] = self.extra
        return out

    def line(self) -> str:
        lo, hi = self.wilson
        verdict = "PASS" if self.passed else "FAIL"
        if self.rule == "value":
            return f"{verdict} {self.label}: observed {self.observed:.4g} vs bound {self.nominal:.4g}"
        return (f"{verdict} {self.label}: {self.exceedances}/{self.replications} = {self.frequency:.4f} "
                f"(Wilson 95% [{lo:.4f}, {hi:.4f}]) vs nominal {self.nominal:.4g} [{self.rule}]")


@dataclass
class ValidationReport:
    """Checks grouped by bound id; a bound passes when all of its checks pass.

    Wall times are kept out of ``to_dict`` so the serialized report is
    byte-identical across runs; see ``wall_times``.
    """

    entries: list = field(default_factory=list)

    def bound_ids(self) -> list:
        seen = []
        for e in self.entries:
            if e.bound_id not in seen:
                seen.append(e.bound_id)
        return seen

    def passed(self, bound_id: str | None = None) -> bool:
        return all(e.passed for e in self.entries if bound_id is None or e.bound_id == bound_id)

    def to_dict(self) -> dict:
        bounds = [{"bound_id": b, "passed": self.passed(b),
                   "checks": [e.to_dict() for e in self.entries if e.bound_id == b]}
                  for b in self.bound_ids()]
        return {"bounds": bounds, "all_passed": self.passed()}

    def wall_times(self) -> dict:
        return {b: next(e.wall_time for e in self.entries if e.bound_id == b) for b in self.bound_ids()}

    def lines(self) -> list:
        return [e.line() for e in self.entries]


@dataclass
class BoundCheckSpec:
    bound_id: str
    scenario: Scenario
    replications: int = 1000
    delta: float | None = None
    seed: int | None = None
    workers: int = 1
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.bound_id not in BOUND_IDS:
            raise ValueError(f"unknown bound id {self.bound_id!r}")
        if self.replications < 100:
            raise ValueError("at least 100 replications are required")
        if self.delta is not None and self.delta != self.scenario.pcfg.delta:
            self.scenario = self.scenario.with_pcfg(delta=self.delta)
            self.scenario.refresh()
        if self.seed is None:
            self.seed = self.scenario.seed

    @property
    def cfg(self) -> pen.PenaltyConfig:
        return self.scenario.pcfg


def map_replications(fn: Callable[[int], object], count: int, workers: int = 1) -> list:
    """Evaluate ``fn`` on 0..count-1, in order, optionally across processes."""
    reps = range(count)
    if workers <= 1:
        return [fn(r) for r in reps]
    chunk = max(1, count // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, reps, chunksize=chunk))


def _timed(fn):
    def wrapper(spec: BoundCheckSpec) -> list:
        start = time.perf_counter()
        entries = fn(spec)
        elapsed = time.perf_counter() - start
        for e in entries:
            e.wall_time = elapsed
        return entries
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


# --- shared helpers ---------------------------------------------------------

def expected_projection(sc: Scenario, model_i: int, scheme, v, W: int, seed: int) -> np.ndarray:
    """Monte Carlo estimate of E[R_{m,p}] v from W weight draws (common random numbers)."""
    g = sc.grams[model_i]
    acc = np.zeros(sc.n)
    used = 0
    for w in range(W):
        draw = draw_from_uniforms(scheme.probs, stream(seed, "expected-R", w).random(sc.n))
        d = importance_weights(sc.design, scheme.probs, draw.weights)
        try:
            acc += g @ solve_weighted(g, d, v)
        except NotEnoughSamples:
            continue
        used += 1
    if used == 0:
        raise NotEnoughSamples("no auxiliary draw produced a nonsingular fit")
    return acc / used


def _project(sc: Scenario, model_i: int, probs, weights, v) -> np.ndarray:
    g = sc.grams[model_i]
    return g @ solve_weighted(g, importance_weights(sc.design, probs, weights), v)


# --- random-projector deviation of the bias ---------------------------------

def _rep_pen1(sc, ctx, r):
    u = stream(ctx["seed"], "L1", r).random(sc.n)
    v = sc.x0 - sc.projections[0]
    worst = -np.inf
    for s, er, p1 in zip(sc.collection, ctx["ER"], ctx["pen1"]):
        w = (u < s.probs).astype(float)
        try:
            dev = empirical_norm_sq(_project(sc, 0, s.probs, w, v) - er, sc.design.q_values)
        except NotEnoughSamples:
            return np.inf
        worst = max(worst, dev - p1)
    return worst


@_timed
def check_pen1_bound(spec: BoundCheckSpec) -> list:
    """sup over schemes of ||(R_{m,p} - E R_{m,p})(x0 - x_m)||^2 - pen1~ exceeds 0 w.p. <= delta/2."""
    sc, cfg = spec.scenario, spec.cfg
    model = sc.models[0]
    v = sc.x0 - sc.projections[0]
    W = spec.options.get("W", sc.W)
    er = [expected_projection(sc, 0, s, v, W, spec.seed) for s in sc.collection]
    pens = [pen.pen1_tilde(model, s.k, sc.n, cfg, s.p_min) for s in sc.collection]
    if spec.options.get("zero_penalty"):
        pens = [0.0] * len(pens)
    ctx = {"seed": spec.seed, "ER": er, "pen1": pens}
    stats = map_replications(partial(_rep_pen1, sc, ctx), spec.replications, spec.workers)
    exceed = sum(1 for s in stats if s > ROUNDOFF)
    return [BoundEntry("L1_pen1", "L1_pen1", exceed, spec.replications, cfg.delta / 2, stats=stats,
                       extra={"pen1": pens, "bias": sc.bias(0), "W": W})]


# --- projected noise --------------------------------------------------------

def _rep_pen2(sc, ctx, r):
    rng = stream(ctx["seed"], "L3", r)
    eps = sc.noise.sample(rng, sc.n)
    u = rng.random(sc.n)
    worst = -np.inf
    for s, p2 in zip(sc.collection, ctx["pen2"]):
        w = (u < s.probs).astype(float)
        try:
            val = empirical_norm_sq(_project(sc, 0, s.probs, w, eps), sc.design.q_values)
        except NotEnoughSamples:
            return np.inf
        worst = max(worst, val - p2)
    return worst


@_timed
def check_pen2_bound(spec: BoundCheckSpec) -> list:
    """sup over schemes of ||R_{m,p} eps||^2_{n,q} - pen2~ exceeds 0 w.p. <= delta/2."""
    sc = spec.scenario
    opts = spec.options
    cfg = spec.cfg
    if "d_of_r" in opts or "r_moment" in opts:
        cfg = replace(cfg, d_of_r=opts.get("d_of_r", cfg.d_of_r), r_moment=opts.get("r_moment", cfg.r_moment))
    kraft = pen.KraftWeights(cfg.d_of_r, cfg.r_moment)
    if opts.get("zero_kraft"):
        kraft.table = {(m.dim, s.k): 0.0 for m in sc.models for s in sc.collection}
    model = sc.models[0]
    pens = [pen.pen2_tilde(model, s.k, sc.n, cfg, kraft) for s in sc.collection]
    if opts.get("zero_penalty"):
        pens = [0.0] * len(pens)
    ctx = {"seed": spec.seed, "pen2": pens}
    stats = map_replications(partial(_rep_pen2, sc, ctx), spec.replications, spec.workers)
    exceed = sum(1 for s in stats if s > ROUNDOFF)
    per_scheme = {}
    if opts.get("per_scheme", True):
        per_scheme = _per_scheme_pen2(sc, pens, spec)
    return [BoundEntry("L3_pen2", "L3_pen2", exceed, spec.replications, cfg.delta / 2, stats=stats,
                       extra={"pen2": pens, "d_of_r": cfg.d_of_r, "r_moment": cfg.r_moment,
                              "per_scheme_frequency": per_scheme})]


def _per_scheme_pen2(sc, pens, spec) -> list:
    counts = [0] * len(pens)
    for r in range(spec.replications):
        rng = stream(spec.seed, "L3", r)
        eps = sc.noise.sample(rng, sc.n)
        u = rng.random(sc.n)
        for i, (s, p2) in enumerate(zip(sc.collection, pens)):
            w = (u < s.probs).astype(float)
            try:
                val = empirical_norm_sq(_project(sc, 0, s.probs, w, eps), sc.design.q_values)
            except NotEnoughSamples:
                val = np.inf
            counts[i] += val > p2
    return [c / spec.replications for c in counts]


# --- quadratic-form tail ----------------------------------------------------

def noise_tail_matrix(sc: Scenario, model_i: int = 0) -> np.ndarray:
    """A with eta^2(A) = ||R_m eps||^2_{n,q}: A = n^{-1/2} D_q^{1/2} R_m."""
    g = sc.grams[model_i]
    q = sc.design.q_values
    rm = g @ solve_weighted(g, q, np.diag(q))
    return np.sqrt(q)[:, None] * rm / math.sqrt(sc.n)


@_timed
def check_noise_tail(spec: BoundCheckSpec) -> list:
    """Empirical tail of eta^2(A) against the exponential bound at u in {rho, 10 rho, 50 rho}."""
    sc, cfg = spec.scenario, spec.cfg
    opts = spec.options
    A = opts.get("matrix")
    if A is None:
        A = noise_tail_matrix(sc)
    A = np.asarray(A, dtype=float)
    ata = A.T @ A
    tr = float(np.trace(ata))
    rho = spectral_norm(A) ** 2
    L = opts.get("L", pen.KraftWeights(cfg.d_of_r, cfg.r_moment).L(sc.models[0].dim, 1))
    r, d, s2 = cfg.r_moment, cfg.d_of_r, sc.noise.sigma2
    multipliers = opts.get("u_multipliers", (1.0, 10.0, 50.0))
    chunk = 2000
    etas = []
    for start in range(0, spec.replications, chunk):
        idx = range(start, min(start + chunk, spec.replications))
        eps = np.stack([sc.noise.sample(stream(spec.seed, "L4", i), A.shape[1]) for i in idx])
        etas.append(np.sum((eps @ A.T) ** 2, axis=1))
    eta2 = np.concatenate(etas) if etas else np.zeros(0)
    entries = []
    for mult in multipliers:
        u = mult * rho
        if rho == 0:
            threshold, nominal = 0.0, 1.0
            exceed = 0
        else:
            threshold = s2 * (tr + rho) * r * (1 + L) + s2 * u
            nominal = math.exp(-math.sqrt(d * (u / rho + r * L * (tr / rho + 1))))
            exceed = int(np.sum(eta2 >= threshold)) if s2 > 0 else 0
        entries.append(BoundEntry("L4_noise_tail", f"L4_noise_tail[u={mult:g}rho]", exceed, spec.replications,
                                  nominal, extra={"threshold": threshold, "trace": tr, "rho": rho, "L": L}))
    return entries


# --- weighted Gram deviation ------------------------------------------------

def _gram_deviation(sc, ctx, r):
    u = stream(ctx["seed"], "L2", r).random(sc.n)
    g = sc.grams[0]
    out = []
    for s, expect, scale in zip(sc.collection, ctx["E"], ctx["scale"]):
        d = importance_weights(sc.design, s.probs, (u < s.probs).astype(float))
        ata = (g.T * d) @ g
        out.append(spectral_norm((ata - expect) / scale))
    return out


def _gram_context(spec):
    sc, cfg = spec.scenario, spec.cfg
    g = sc.grams[0]
    model = sc.models[0]
    m, n = model.dim, sc.n
    expect = (g.T * sc.design.q_values) @ g  # E[A^T A] is exact: E[w/p] = 1
    lam = spectral_norm(expect) / n
    ks = [max(1.0, model.c_m * math.sqrt(cfg.Q / s.p_min)) for s in sc.collection]
    return {"seed": spec.seed, "E": [expect] * len(ks), "scale": [n * lam] * len(ks), "K": ks,
            "Lambda": lam, "m": m, "n": n}


def sigma_rmn(K: float, lam: float, m: int, n: int, r: float) -> float:
    return (2 * K / math.sqrt(n * lam) * math.sqrt(m / n)) ** r * 2 ** 0.75 * m * r ** (r / 2) * math.exp(-r / 2)


@_timed
def check_matrix_deviation(spec: BoundCheckSpec) -> list:
    """Moment and tail bounds for ||(A^T A - E A^T A) / (n Lambda)|| with A = D_{pqw}^{1/2} G_m."""
    sc = spec.scenario
    ctx = _gram_context(spec)
    devs = np.array(map_replications(partial(_gram_deviation, sc, ctx), spec.replications, spec.workers))
    if devs.size == 0:
        devs = np.zeros((0, len(sc.collection)))
    m, n, lam = ctx["m"], ctx["n"], ctx["Lambda"]
    want = spec.options.get("parts", ("moment", "tail"))
    entries = []
    for col, s in enumerate(sc.collection):
        K = ctx["K"][col]
        x = devs[:, col]
        if "moment" in want:
            for r in spec.options.get("moments", (2, 4)):
                observed = float(np.mean(x ** r) ** (1.0 / r))
                bound = TAU * sigma_rmn(K, lam, m, n, r)
                entries.append(BoundEntry("L2_moment", f"L2_moment[k={s.k},r={r}]", 0, spec.replications,
                                          bound, rule="value", observed=observed,
                                          extra={"K": K, "Lambda": lam}))
        if "tail" in want:
            for u in spec.options.get("u_grid", (math.sqrt(2.0), 2.0, 3.0)):
                thr = 2 * TAU * K / math.sqrt(lam) * math.sqrt(m / n) * u
                nominal = min(1.0, m * 2 ** 0.75 * math.exp(-u * u / 2))
                entries.append(BoundEntry("L2_tail", f"L2_tail[k={s.k},u={u:.4g}]", int(np.sum(x > thr)),
                                          spec.replications, nominal,
                                          extra={"threshold": thr, "K": K, "max_deviation": float(x.max(initial=0))}))
    return entries


# --- reweighted bias norm ---------------------------------------------------

def _rep_pen0(sc, ctx, r):
    u = stream(ctx["seed"], "L7", r).random(sc.n)
    q = sc.design.q_values
    worst = -np.inf
    for i, proj in enumerate(sc.projections):
        b2 = (sc.x0 - proj) ** 2
        for s, p0 in zip(sc.collection, ctx["pen0"][i]):
            w = (u < s.probs).astype(float)
            stat = float(np.mean(q * (w / s.probs - 1.0) * b2))
            worst = max(worst, stat - p0)
    return worst


@_timed
def check_pen0_bound(spec: BoundCheckSpec) -> list:
    """sup over models and schemes of ||x0-x_m||^2_{qw/p} - ||x0-x_m||^2_q - pen0 exceeds 0 w.p. <= delta/6."""
    sc, cfg = spec.scenario, spec.cfg
    pens = [[pen.pen0(m, s.k, sc.n, cfg, s.p_min) for s in sc.collection] for m in sc.models]
    if spec.options.get("zero_penalty"):
        pens = [[0.0] * len(row) for row in pens]
    ctx = {"seed": spec.seed, "pen0": pens}
    stats = map_replications(partial(_rep_pen0, sc, ctx), spec.replications, spec.workers)
    exceed = sum(1 for s in stats if s > ROUNDOFF)
    return [BoundEntry("L7_pen0", "L7_pen0", exceed, spec.replications, cfg.delta / 6, stats=stats,
                       extra={"pen0": pens, "C": cfg.C_bias})]


# --- loss-difference fluctuations -------------------------------------------

def _rep_delta(sc, ctx, r):
    cfg = ctx["cfg"]
    rng = stream(ctx["seed"], "L6", r)
    eps = sc.noise.sample(rng, sc.n)
    u = rng.random(sc.n)
    y = sc.x0 + eps
    q = sc.design.q_values
    s2 = sc.noise.sigma2
    worst1 = worst2 = -np.inf
    for ki, s in enumerate(sc.collection):
        w = (u < s.probs).astype(float)
        ratio = w / s.probs
        pm = s.p_min
        fits = []
        for i in range(len(sc.models)):
            try:
                fits.append(_project(sc, i, s.probs, w, y))
            except NotEnoughSamples:
                return (np.inf, np.inf)
        for i, xi in enumerate(sc.projections):
            for i2, xi2 in enumerate(sc.projections):
                d1 = -2.0 * np.mean(q * ratio * eps * (xi - xi2))
                b1 = (1.0 / (cfg.gamma * pm ** 2) * (ctx["pen2"][i][ki] ** 2 + ctx["pen2"][i2][ki] ** 2)
                      + cfg.gamma * (ctx["bias"][i] + ctx["bias"][i2]))
                worst1 = max(worst1, d1 - b1)
                xh = fits[i]
                d2 = (np.mean(q * (ratio - 1.0) * ((xh - sc.x0) ** 2 + s2))
                      - np.mean(q * (ratio - 1.0) * ((xi2 - sc.x0) ** 2 + s2)))
                b2 = (2 * ctx["pen0"][i][ki] + (1 / pm + 1 / cfg.gamma) * ctx["pen1"][i][ki]
                      + 2 * ctx["pen0"][i2][ki] + (1 / pm) * ctx["pen1"][i2][ki]
                      + 3 * cfg.gamma * ctx["bias"][i]
                      + (1 / pm ** 2 * (1 / cfg.gamma + 1) + 1 / cfg.gamma) * ctx["pen2"][i2][ki]
                      + pen.design_deviation_term(sc.n, cfg, pm))
                worst2 = max(worst2, d2 - b2)
    return (worst1, worst2)


def _delta_context(spec):
    sc = spec.scenario
    cfg = spec.cfg
    if "gamma" in spec.options:
        cfg = replace(cfg, gamma=spec.options["gamma"])
    kraft = pen.KraftWeights(cfg.d_of_r, cfg.r_moment)
    grid = [(m, s) for m in sc.models for s in sc.collection]
    K = len(sc.collection)

    def table(f):
        vals = [f(m, s) for m, s in grid]
        return [vals[i * K:(i + 1) * K] for i in range(len(sc.models))]

    return {
        "seed": spec.seed, "cfg": cfg,
        "pen0": table(lambda m, s: pen.pen0(m, s.k, sc.n, cfg, s.p_min)),
        "pen1": table(lambda m, s: pen.pen1_ms(m, s.k, sc.n, cfg, s.p_min)),
        "pen2": table(lambda m, s: pen.pen2_ms(m, s.k, sc.n, cfg, kraft)),
        "bias": [sc.bias(i) for i in range(len(sc.models))],
    }


@_timed
def check_delta_bounds(spec: BoundCheckSpec) -> list:
    """Both loss-fluctuation statements, with x = x_m and x' = x_{m'} (q-projections of x0)."""
    sc = spec.scenario
    ctx = _delta_context(spec)
    stats = map_replications(partial(_rep_delta, sc, ctx), spec.replications, spec.workers)
    e1 = sum(1 for a, _ in stats if a > ROUNDOFF)
    e2 = sum(1 for _, b in stats if b > ROUNDOFF)
    delta = ctx["cfg"].delta
    extra = {"gamma": ctx["cfg"].gamma}
    return [BoundEntry("L6_delta1", "L6_delta1", e1, spec.replications, delta / 3,
                       stats=[a for a, _ in stats], extra=extra),
            BoundEntry("L6_delta2", "L6_delta2", e2, spec.replications, 2 * delta / 3,
                       stats=[b for _, b in stats], extra=extra)]


# --- fixed-model oracle inequality -------------------------------------------

def _rep_fixed_model_oracle(sc, ctx, r):
    rng = stream(ctx["seed"], "T1", r)
    eps = sc.noise.sample(rng, sc.n)
    u = rng.random(sc.n)
    y = sc.x0 + eps
    worst = -np.inf
    for i, (k, rhs) in enumerate(zip(ctx["k_hat"], ctx["rhs"])):
        s = sc.collection[k]
        try:
            xh = _project(sc, i, s.probs, (u < s.probs).astype(float), y)
        except NotEnoughSamples:
            return np.inf
        lhs = empirical_norm_sq(sc.projections[i] - xh, sc.design.q_values)
        worst = max(worst, lhs - rhs)
    return worst


@_timed
def check_fixed_model_oracle(spec: BoundCheckSpec) -> list:
    """||x_m - x_hat_{m,p_hat}||^2 <= 6(||E R (x_m - x0)||^2 + (1+g) pen1~ + (1+1/g) pen2~) for every model."""
    sc, cfg = spec.scenario, spec.cfg
    W = spec.options.get("W", sc.W)
    k_hat, rhs = [], []
    for i, m in enumerate(sc.models):
        k = select_sampling_fixed_m(m, sc.collection, sc.n, cfg, sc.kraft)
        s = sc.collection[k]
        er = expected_projection(sc, i, s, sc.projections[i] - sc.x0, W, spec.seed)
        bias_term = empirical_norm_sq(er, sc.design.q_values)
        total = pen.pen_tilde(m, k, sc.n, cfg, s.p_min, sc.kraft)
        k_hat.append(k)
        rhs.append(6.0 * (bias_term + total))
    ctx = {"seed": spec.seed, "k_hat": k_hat, "rhs": rhs}
    stats = map_replications(partial(_rep_fixed_model_oracle, sc, ctx), spec.replications, spec.workers)
    exceed = sum(1 for s in stats if s > ROUNDOFF)
    return [BoundEntry("T1", "T1", exceed, spec.replications, cfg.delta, rule="frequency", stats=stats,
                       extra={"k_hat": k_hat, "rhs": rhs})]


# --- model-selection oracle inequality ---------------------------------------

def _rep_selection_oracle(sc, ctx, r):
    eps = sc.noise.sample(stream(ctx["seed"], "T2-noise", r), sc.n)
    y = sc.x0 + eps
    res = select_model(sc.models, sc.collection, sc.design, y, sc.pcfg, sc.kraft, seed=ctx["seed"],
                       replication=r, grams=sc.grams)
    gap = oracle_gap(res, sc.x0, sc.design, sc.models, sc.collection, sc.pcfg, sc.kraft)
    # per-model true loss of x_hat_{m, p_hat(m)} with the same draws, for the bias-variance diagnostic
    losses = []
    for i, m in enumerate(sc.models):
        s = sc.collection[res.chosen_k_per_model[i]]
        draw = draw_weights(s, stream(ctx["seed"], "batch-weights", r, i))
        try:
            est = fit_weighted(sc.design, m, y, s, draw, g=sc.grams[i])
            losses.append(loss_true(est.fitted, sc.x0, sc.design, sc.noise.sigma2))
        except NotEnoughSamples:
            losses.append(np.inf)
    return (gap["lhs"] - gap["rhs"], res.chosen_m, losses)


@_timed
def check_selection_oracle(spec: BoundCheckSpec) -> list:
    """L(x_hat_{m_hat}) <= (1+g)/(1-4g) min_m [L(x_m) + min_k pen] with frequency >= 1 - delta."""
    sc, cfg = spec.scenario, spec.cfg
    ctx = {"seed": spec.seed}
    out = map_replications(partial(_rep_selection_oracle, sc, ctx), spec.replications, spec.workers)
    exceed = sum(1 for s, _, _ in out if s > ROUNDOFF)
    losses = np.array([l for _, _, l in out])
    best = int(np.argmin(losses.mean(axis=0)))
    hits = sum(1 for _, m, _ in out if m == best)
    chosen = [int(m) for _, m, _ in out]
    return [BoundEntry("T2", "T2", exceed, spec.replications, cfg.delta, rule="frequency",
                       stats=[s for s, _, _ in out],
                       extra={"optimal_model": best, "recovery_rate": hits / spec.replications,
                              "chosen_counts": {str(i): chosen.count(i) for i in range(len(sc.models))}})]


# --- sequential sampler ----------------------------------------------------

def _log_volume(e: HypothesisEllipsoid) -> float:
    d = e.center.size
    sign, logdet = np.linalg.slogdet(e.shape)
    return 0.5 * d * math.log(max(e.radius, 1e-300)) - 0.5 * logdet


def _probe_points(e: HypothesisEllipsoid, au: HypothesisEllipsoid | None, phi_all, x0, B, rng, count):
    """Points of the hypothesis set intersected with the sup-norm envelope around the truth, plus its center when feasible."""
    if e.radius == 0:
        pts = e.center[None, :]
    else:
        sampler = e if au is None or _log_volume(e) <= _log_volume(au) else au
        pts = np.vstack([e.center[None, :], sampler.sample(rng, 4 * count)])
    keep = e.contains(pts)
    if au is not None:
        keep &= au.contains(pts)
        keep &= np.max(np.abs(pts @ phi_all.T - x0), axis=1) <= B * (1 + 1e-9)
    return pts[keep][: count + 1]


def _rep_iterative(sc, ctx, r):
    cfg = ctx["it"]
    pcfg = sc.pcfg
    eps = sc.noise.sample(stream(ctx["seed"], "iter-noise", r), sc.n)
    y = sc.x0 + eps
    state, est = run_iterative(sc.design, label_source(y), cfg, pcfg, stream(ctx["seed"], "iter", r))
    phi_all = ctx["phi"]
    Lq = ctx["Lq"]
    beta_star = ctx["beta_star"]
    L_star = float(eval_quadratic(Lq, beta_star))
    au = ctx["au"]
    probe_rng = stream(ctx["seed"], "iter-probe", r)
    shrink = ctx["delta_scale"]
    probes = {}

    def probe(ei):
        if ei not in probes:
            probes[ei] = _probe_points(state.ellipsoids[ei], au, phi_all, sc.x0, cfg.B_au, probe_rng, ctx["n_probe"])
        return probes[ei]

    uniform_dev = loss_spread = excess_loss = -np.inf
    recs = state.records
    for rec in recs[1:]:
        j = rec.j
        prev = recs[j - 1]
        pts = probe(prev.ellipsoid)
        if len(pts):
            f = eval_quadratic(rec.lj, pts) - eval_quadratic(Lq, pts)
            uniform_dev = max(uniform_dev, float(f.max() - f.min()) - shrink * rec.delta)
        pts_j = probe(rec.ellipsoid)
        if len(pts_j):
            lv = eval_quadratic(Lq, pts_j)
            loss_spread = max(loss_spread, float(lv.max() - lv.min()) - 2 * shrink * state.deltas[j - 1])
        excess_loss = max(excess_loss, float(eval_quadratic(Lq, rec.beta_hat)) - L_star - 2 * shrink * state.deltas[j - 1])
    member = all(bool(e.contains(beta_star)) for e in state.ellipsoids)
    sum_p = float(np.sum(state.p_trace))
    ess = effective_sample_bound(state, sc.design, cfg.m0, L_star, cfg)
    total = (cfg.T or (sc.n - cfg.n0)) + cfg.n0
    delta = pcfg.delta
    parsimony = cfg.n0 + sum_p + 3 * math.sqrt(sum_p * math.log(1 / delta))
    return {
        "uniform_dev": uniform_dev, "loss_spread": loss_spread, "excess_loss": excess_loss, "member": member,
        "sum_p": sum_p, "ess_bound": ess, "labels_used": state.labels_used, "total": total,
        "parsimony_ok": state.labels_used <= parsimony, "final_delta": state.deltas[-1],
        "L_hat": float(eval_quadratic(Lq, state.beta_hat)), "L_star": L_star,
    }


def _iterative_context(spec):
    sc = spec.scenario
    cfg = sc.iterative
    if cfg is None:
        raise ValueError("scenario has no iterative block")
    if "T" in spec.options:
        cfg = replace(cfg, T=spec.options["T"])
    phi = gram_matrix(sc.design, cfg.m0)
    Lq = quadratic_loss_coeffs(sc.design, phi, sc.x0, sc.noise.sigma2)
    beta_star = population_minimizer(sc.design, phi, sc.x0)
    bias = float(eval_quadratic(Lq, beta_star)) - sc.noise.sigma2 * float(np.mean(sc.design.q_values))
    au_radius = sc.design.Q * cfg.B_au ** 2 - bias
    au = HypothesisEllipsoid.build(beta_star, Lq[0], au_radius, -1) if au_radius > 0 else None
    return {"seed": spec.seed, "it": cfg, "phi": phi, "Lq": Lq, "beta_star": beta_star, "au": au,
            "n_probe": spec.options.get("n_probe", 24), "delta_scale": spec.options.get("delta_scale", 1.0)}


@_timed
def check_iterative(spec: BoundCheckSpec) -> list:
    """Uniform loss-fluctuation control, both oracle statements, and the label-count bounds."""
    sc = spec.scenario
    ctx = _iterative_context(spec)
    out = map_replications(partial(_rep_iterative, sc, ctx), spec.replications, spec.workers)
    R = spec.replications
    delta = sc.pcfg.delta
    saving = spec.options.get("saving_ratio", 0.8)
    n_l8 = sum(o["uniform_dev"] > ROUNDOFF for o in out)
    n_b1 = sum(o["loss_spread"] > ROUNDOFF for o in out)
    n_b2 = sum(o["excess_loss"] > ROUNDOFF for o in out)
    n_mem = sum(not o["member"] for o in out)
    n_ess = sum(o["sum_p"] > o["ess_bound"] for o in out)
    n_save = sum(o["labels_used"] >= saving * o["total"] for o in out)
    n_pars = sum(not o["parsimony_ok"] for o in out)
    labels = [o["labels_used"] for o in out]
    summary = {"mean_labels_used": float(np.mean(labels)) if labels else 0.0,
               "mean_sum_p": float(np.mean([o["sum_p"] for o in out])) if out else 0.0,
               "mean_ess_bound": float(np.mean([o["ess_bound"] for o in out])) if out else 0.0,
               "final_delta": out[0]["final_delta"] if out else None}
    return [
        BoundEntry("T3", "L8_uniform_deviation", n_l8, R, delta),
        BoundEntry("T3", "T3_loss_spread", n_b1, R, delta, rule="frequency"),
        BoundEntry("T3", "T3_excess_loss", n_b2, R, delta, rule="frequency"),
        BoundEntry("T3", "T3_xstar_membership", n_mem, R, delta),
        BoundEntry("T3", "T3_effective_samples", n_ess, R, 0.0, rule="all"),
        BoundEntry("T3", "T3_label_saving", n_save, R, 0.10, rule="frequency",
                   extra={"ratio": saving, **summary}),
        BoundEntry("T3", "T3_label_parsimony", n_pars, R, delta),
    ]


CHECKS = {
    "L1_pen1": check_pen1_bound,
    "L3_pen2": check_pen2_bound,
    "L4_noise_tail": check_noise_tail,
    "L7_pen0": check_pen0_bound,
    "L2_moment": lambda spec: check_matrix_deviation(_with_option(spec, parts=("moment",))),
    "L2_tail": lambda spec: check_matrix_deviation(_with_option(spec, parts=("tail",))),
    "L6_delta1": lambda spec: [e for e in check_delta_bounds(spec) if e.bound_id == "L6_delta1"],
    "L6_delta2": lambda spec: [e for e in check_delta_bounds(spec) if e.bound_id == "L6_delta2"],
    "T1": check_fixed_model_oracle,
    "T2": check_selection_oracle,
    "T3": check_iterative,
}

# scenario each bound is validated on by default, and its replication count
DEFAULT_PLAN = {
    "L1_pen1": ("A", 1000),
    "L3_pen2": ("A", 1000),
    "L4_noise_tail": ("A", 60000),
    "L7_pen0": ("A", 1000),
    "L2_moment": ("A", 2000),
    "L2_tail": ("A", 2000),
    "L6_delta1": ("B", 500),
    "L6_delta2": ("B", 500),
    "T1": ("B", 500),
    "T2": ("B", 500),
    "T3": ("C", 200),
}


def _with_option(spec: BoundCheckSpec, **opts) -> BoundCheckSpec:
    return replace(spec, options={**spec.options, **opts})


def run_check(spec: BoundCheckSpec) -> list:
    return CHECKS[spec.bound_id](spec)


def run_suite(scenarios: dict, bound_ids=None, workers: int = 1, replications: dict | None = None,
              seed: int | None = None) -> ValidationReport:
    """Run the listed checks (default: all) on their default scenarios."""
    report = ValidationReport()
    for bid in bound_ids or BOUND_IDS:
        name, reps = DEFAULT_PLAN[bid]
        reps = (replications or {}).get(bid, reps)
        sc = scenarios[name]
        spec = BoundCheckSpec(bid, sc, replications=reps, seed=seed, workers=workers)
        report.entries.extend(run_check(spec))
    return report
