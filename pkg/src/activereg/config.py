"""Scenario configuration: a flat, sectioned key = value text format.

Syntax is handled by :mod:`configparser`; this module adds the schema (known
sections and keys, types, ranges), line-numbered diagnostics, and a single
canonical serialization so that parse -> serialize -> parse is the identity.

Example::

    [run]
    seed = 20240601

    [design]
    n = 256
    family = trigonometric

    [truth]
    coefficients = 1:1.0 2:0.8 9:0.2

    [noise]
    sigma2 = 0.25

    [models]
    d8 = 1-8

    [schemes]
    proxy_model = d8
    k1 = constant(0.25)
    k2 = proportional(0.25)

    [penalty]
    delta = 0.1
"""

from __future__ import annotations

import configparser
import hashlib
import re
from dataclasses import dataclass, field, fields
from typing import Any

from .errors import ParseError, ValidationError

SCHEME_KINDS = ("constant", "proportional", "thresholded", "vector", "file")


@dataclass(frozen=True)
class RunBlock:
    seed: int = 20240601
    name: str = "custom"
    W: int = 200


@dataclass(frozen=True)
class DesignBlock:
    n: int | None = None
    family: str = "trigonometric"
    resolution: int = 1
    degree: int = 0
    layout: str = "left"
    density: float = 1.0
    csv: str | None = None
    Q: float | None = None


@dataclass(frozen=True)
class TruthBlock:
    coefficients: tuple = ()  # ((index, value), ...)
    csv: str | None = None


@dataclass(frozen=True)
class NoiseBlock:
    kind: str = "gaussian"
    sigma2: float = 0.25


@dataclass(frozen=True)
class SchemeSpec:
    name: str
    kind: str
    args: tuple = ()


@dataclass(frozen=True)
class PenaltyBlock:
    delta: float = 0.1
    gamma: float = 0.2
    r_moment: float = 2.0
    d_of_r: float = 1.0
    sigma2: float | None = None  # None: take the noise variance
    Q: float | None = None  # None: take the design's Q
    alpha: float = 1.0
    C_bias: float | None = None  # None: sup-norm bias computed from the truth
    c_design: float = 1.0
    bias_proxy: tuple | None = None  # ((model name, value), ...); None: exact from the truth


@dataclass(frozen=True)
class IterativeBlock:
    n0: int
    m0: str
    B_au: float
    T: int | None = None
    horizon: str = "design"
    plugin_sigma2: bool = False
    delta0_override: float | None = None
    dim_schedule: tuple | None = None


@dataclass(frozen=True)
class ScenarioConfig:
    run: RunBlock = field(default_factory=RunBlock)
    design: DesignBlock = field(default_factory=DesignBlock)
    truth: TruthBlock = field(default_factory=TruthBlock)
    noise: NoiseBlock = field(default_factory=NoiseBlock)
    models: tuple = ()  # ((name, (indices...)), ...)
    schemes: tuple = ()  # (SchemeSpec, ...)
    proxy_model: str | None = None
    penalty: PenaltyBlock = field(default_factory=PenaltyBlock)
    iterative: IterativeBlock | None = None

    @property
    def seed(self) -> int:
        return self.run.seed

    def digest(self) -> str:
        return config_digest(self)


# --- value codecs -----------------------------------------------------------

def _fmt_float(x: float) -> str:
    return repr(float(x))


def _fmt_ranges(idx) -> str:
    parts, run = [], []
    for j in idx:
        if run and j == run[-1] + 1:
            run.append(j)
            continue
        if run:
            parts.append(f"{run[0]}-{run[-1]}" if len(run) > 1 else str(run[0]))
        run = [j]
    if run:
        parts.append(f"{run[0]}-{run[-1]}" if len(run) > 1 else str(run[0]))
    return ",".join(parts)


def _parse_ranges(text: str) -> tuple:
    out = []
    for part in re.split(r"[,\s]+", text.strip()):
        if not part:
            continue
        if "-" in part:
            a, b = part.split("-", 1)
            a, b = int(a), int(b)
            if b < a:
                raise ValueError(f"empty range {part!r}")
            out.extend(range(a, b + 1))
        else:
            out.append(int(part))
    if not out:
        raise ValueError("empty index set")
    if len(set(out)) != len(out):
        raise ValueError("repeated basis index")
    return tuple(out)


def _parse_pairs(text: str, key_type) -> tuple:
    pairs = []
    for part in re.split(r"[,\s]+", text.strip()):
        if not part:
            continue
        k, _, v = part.partition(":")
        if not _:
            raise ValueError(f"expected key:value, got {part!r}")
        pairs.append((key_type(k), float(v)))
    return tuple(pairs)


def _fmt_pairs(pairs) -> str:
    return " ".join(f"{k}:{_fmt_float(v)}" for k, v in pairs)


_SCHEME_RE = re.compile(r"^\s*([a-z]+)\s*\((.*)\)\s*$")


def _parse_scheme(name: str, text: str) -> SchemeSpec:
    m = _SCHEME_RE.match(text)
    if not m or m.group(1) not in SCHEME_KINDS:
        raise ValueError(f"scheme must be one of {', '.join(k + '(...)' for k in SCHEME_KINDS)}")
    kind, body = m.group(1), m.group(2).strip()
    items = [s.strip() for s in body.split(",")] if body else []
    if kind == "constant":
        if len(items) != 1:
            raise ValueError("constant(p) takes one argument")
        args = (float(items[0]),)
    elif kind == "proportional":
        if len(items) != 1:
            raise ValueError("proportional(p_min) takes one argument")
        args = (float(items[0]),)
    elif kind == "thresholded":
        if len(items) != 3:
            raise ValueError("thresholded(eta|median, low, high) takes three arguments")
        eta = "median" if items[0] == "median" else float(items[0])
        args = (eta, float(items[1]), float(items[2]))
    elif kind == "vector":
        args = tuple(float(s) for s in items)
        if not args:
            raise ValueError("vector(...) needs probabilities")
    else:
        if len(items) != 1 or not items[0]:
            raise ValueError("file(path) takes one argument")
        args = (items[0],)
    for a in args:
        if isinstance(a, float) and kind != "thresholded" and not 0 < a <= 1:
            raise ValueError("probabilities must lie in (0, 1]")
    return SchemeSpec(name=name, kind=kind, args=args)


def _fmt_scheme(s: SchemeSpec) -> str:
    parts = [a if isinstance(a, str) else _fmt_float(a) for a in s.args]
    return f"{s.kind}({', '.join(parts)})"


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _opt(conv):
    def parse(text):
        return None if text.strip().lower() in ("auto", "none", "") else conv(text)
    return parse


# schema: section -> key -> parser
_INT = int
_FLOAT = float
_SCALAR_SCHEMA = {
    "run": {"seed": _INT, "name": str, "W": _INT},
    "design": {"n": _INT, "family": str, "resolution": _INT, "degree": _INT, "layout": str,
               "density": _FLOAT, "csv": _opt(str), "Q": _opt(_FLOAT)},
    "truth": {"coefficients": lambda s: _parse_pairs(s, int), "csv": _opt(str)},
    "noise": {"kind": str, "sigma2": _FLOAT},
    "penalty": {"delta": _FLOAT, "gamma": _FLOAT, "r_moment": _FLOAT, "d_of_r": _FLOAT,
                "sigma2": _opt(_FLOAT), "Q": _opt(_FLOAT), "alpha": _FLOAT, "C_bias": _opt(_FLOAT),
                "c_design": _FLOAT, "bias_proxy": _opt(lambda s: _parse_pairs(s, str))},
    "iterative": {"n0": _INT, "m0": str, "B_au": _FLOAT, "T": _opt(_INT), "horizon": str,
                  "plugin_sigma2": _parse_bool, "delta0_override": _opt(_FLOAT),
                  "dim_schedule": _opt(lambda s: tuple(int(x) for x in re.split(r"[,\s]+", s.strip()) if x))},
}
_BLOCKS = {"run": RunBlock, "design": DesignBlock, "truth": TruthBlock, "noise": NoiseBlock,
           "penalty": PenaltyBlock, "iterative": IterativeBlock}
SECTIONS = ("run", "design", "truth", "noise", "models", "schemes", "penalty", "iterative")


def _key_lines(text: str) -> dict:
    """(section, key) -> 1-based line number of its definition."""
    lines, section = {}, None
    for no, raw in enumerate(text.splitlines(), start=1):
        s = raw.strip()
        if not s or s.startswith("#"):
            continue
        m = re.match(r"^\[([^\]]+)\]$", s)
        if m:
            section = m.group(1).strip()
            lines[(section, None)] = no
            continue
        m = re.match(r"^([^=:\s]+)\s*[=:]", s)
        if m and section is not None:
            lines[(section, m.group(1))] = no
    return lines


def parse_config(text: str) -> ScenarioConfig:
    """Parse and validate a scenario configuration; unknown keys are errors."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",),
                                   comment_prefixes=("#",), empty_lines_in_values=False)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ParseError(exc.lineno, "key outside of any [section]") from exc
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as exc:
        raise ParseError(exc.lineno, str(exc).split(": ", 1)[-1]) from exc
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if exc.errors else 0
        raise ParseError(line, "malformed line (expected key = value)") from exc
    where = _key_lines(text)

    def line_of(section, key=None):
        return where.get((section, key), where.get((section, None), 0))

    for section in cp.sections():
        if section not in SECTIONS:
            raise ParseError(line_of(section), f"unknown section [{section}]")

    blocks = {}
    for section, schema in _SCALAR_SCHEMA.items():
        if not cp.has_section(section):
            continue
        values = {}
        for key, raw in cp.items(section):
            if key not in schema:
                raise ParseError(line_of(section, key), f"unknown key {key!r} in [{section}]")
            try:
                values[key] = schema[key](raw)
            except ValueError as exc:
                raise ParseError(line_of(section, key), f"{section}.{key}: {exc}") from exc
        blocks[section] = values

    models = []
    if cp.has_section("models"):
        for key, raw in cp.items("models"):
            try:
                models.append((key, _parse_ranges(raw)))
            except ValueError as exc:
                raise ParseError(line_of("models", key), f"models.{key}: {exc}") from exc
    schemes, proxy_model = [], None
    if cp.has_section("schemes"):
        for key, raw in cp.items("schemes"):
            if key == "proxy_model":
                proxy_model = raw.strip()
                continue
            try:
                schemes.append(_parse_scheme(key, raw))
            except ValueError as exc:
                raise ParseError(line_of("schemes", key), f"schemes.{key}: {exc}") from exc

    if "iterative" in blocks:
        missing = [k for k in ("n0", "m0", "B_au") if k not in blocks["iterative"]]
        if missing:
            raise ValidationError(f"iterative.{missing[0]}", "required")
    cfg = ScenarioConfig(
        run=RunBlock(**blocks.get("run", {})),
        design=DesignBlock(**blocks.get("design", {})),
        truth=TruthBlock(**blocks.get("truth", {})),
        noise=NoiseBlock(**blocks.get("noise", {})),
        models=tuple(models),
        schemes=tuple(schemes),
        proxy_model=proxy_model,
        penalty=PenaltyBlock(**blocks.get("penalty", {})),
        iterative=IterativeBlock(**blocks["iterative"]) if "iterative" in blocks else None,
    )
    validate_config(cfg)
    return cfg


def validate_config(cfg: ScenarioConfig) -> None:
    """Range checks and cross-references; raises ValidationError(field, constraint)."""
    from .design import FAMILIES
    from .estimator import NOISE_KINDS

    def need(ok, name, constraint):
        if not ok:
            raise ValidationError(name, constraint)

    r, d, t, nz, p = cfg.run, cfg.design, cfg.truth, cfg.noise, cfg.penalty
    need(0 <= r.seed < 2 ** 64, "run.seed", "64-bit unsigned integer")
    need(r.W >= 1, "run.W", ">= 1")
    need(d.csv is not None or (d.n is not None and d.n >= 2), "design.n", ">= 2 (or give design.csv)")
    need(d.family in FAMILIES, "design.family", f"one of {', '.join(FAMILIES)}")
    need(d.resolution >= 1, "design.resolution", ">= 1")
    need(d.degree >= 0, "design.degree", ">= 0")
    need(d.layout in ("left", "midpoint"), "design.layout", "left or midpoint")
    need(d.density > 0, "design.density", "> 0")
    need(d.Q is None or d.Q > 0, "design.Q", "> 0")
    need(bool(t.coefficients) != (t.csv is not None), "truth", "exactly one of coefficients or csv")
    need(all(j >= 1 for j, _ in t.coefficients), "truth.coefficients", "indices >= 1")
    need(nz.kind in NOISE_KINDS, "noise.kind", f"one of {', '.join(NOISE_KINDS)}")
    need(nz.sigma2 >= 0, "noise.sigma2", ">= 0")
    need(len(cfg.models) >= 1, "models", "at least one model")
    need(len(cfg.schemes) >= 1, "schemes", "at least one scheme")
    names = [m for m, _ in cfg.models]
    for s in cfg.schemes:
        if s.kind in ("proportional", "thresholded"):
            need(cfg.proxy_model is not None, f"schemes.{s.name}", "needs schemes.proxy_model")
        if s.kind == "thresholded":
            low, high = s.args[1], s.args[2]
            need(0 < low <= 1 and 0 < high <= 1, f"schemes.{s.name}", "levels in (0, 1]")
            need(s.args[0] == "median" or s.args[0] >= 0, f"schemes.{s.name}", "eta >= 0")
    need(cfg.proxy_model is None or cfg.proxy_model in names, "schemes.proxy_model", "must name a model")
    checks = [
        ("delta", 0 < p.delta < 1, "in (0,1)"),
        ("gamma", 0 < p.gamma < 1, "in (0,1)"),
        ("r_moment", p.r_moment > 1, "> 1"),
        ("d_of_r", p.d_of_r > 0, "> 0"),
        ("sigma2", p.sigma2 is None or p.sigma2 >= 0, ">= 0"),
        ("Q", p.Q is None or p.Q > 0, "> 0"),
        ("alpha", p.alpha > 0, "> 0"),
        ("C_bias", p.C_bias is None or p.C_bias >= 0, ">= 0"),
        ("c_design", p.c_design >= 0, ">= 0"),
    ]
    for name, ok, constraint in checks:
        need(ok, name, constraint)
    if p.bias_proxy is not None:
        for key, val in p.bias_proxy:
            need(key in names, f"penalty.bias_proxy[{key}]", "must name a model")
            need(val >= 0, f"penalty.bias_proxy[{key}]", ">= 0")
    it = cfg.iterative
    if it is not None:
        need(it.m0 in names, "iterative.m0", "must name a model")
        need(it.n0 >= 1, "iterative.n0", ">= 1")
        need(it.B_au > 0, "iterative.B_au", "> 0")
        need(it.T is None or it.T >= 0, "iterative.T", ">= 0")
        need(it.horizon in ("design", "step", "stop"), "iterative.horizon", "design, step or stop")


def serialize_config(cfg: ScenarioConfig) -> str:
    """Canonical text form: fixed section and key order, None values omitted."""
    out = []

    def emit_block(section, block):
        out.append(f"[{section}]")
        for f in fields(block):
            v = getattr(block, f.name)
            if v is None:
                continue
            out.append(f"{f.name} = {_fmt_value(section, f.name, v)}")
        out.append("")

    emit_block("run", cfg.run)
    emit_block("design", cfg.design)
    emit_block("truth", cfg.truth)
    emit_block("noise", cfg.noise)
    out.append("[models]")
    out.extend(f"{name} = {_fmt_ranges(idx)}" for name, idx in cfg.models)
    out.append("")
    out.append("[schemes]")
    if cfg.proxy_model is not None:
        out.append(f"proxy_model = {cfg.proxy_model}")
    out.extend(f"{s.name} = {_fmt_scheme(s)}" for s in cfg.schemes)
    out.append("")
    emit_block("penalty", cfg.penalty)
    if cfg.iterative is not None:
        emit_block("iterative", cfg.iterative)
    return "\n".join(out)


def _fmt_value(section: str, key: str, v: Any) -> str:
    if key in ("coefficients", "bias_proxy"):
        return _fmt_pairs(v)
    if key == "dim_schedule":
        return ",".join(str(x) for x in v)
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return _fmt_float(v)
    return str(v)


def config_digest(cfg: ScenarioConfig) -> str:
    """sha256 of the canonical serialization (independent of key order in the source)."""
    return hashlib.sha256(serialize_config(cfg).encode("utf-8")).hexdigest()


def load_config(path) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
