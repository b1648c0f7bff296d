"""Fixed designs, orthonormal basis families, Gram matrices and design diagnostics."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.polynomial import legendre

from .errors import ConditionViolated, UnsupportedFamily
from .linalg import spectral_norm

FAMILIES = ("trigonometric", "histogram", "piecewise-polynomial", "polynomial")


@dataclass(frozen=True)
class BasisFamily:
    """An orthonormal system on [0, 1] under the uniform density.

    ``resolution`` is the number of cells for the localized families
    (histogram bins, polynomial pieces); ``degree`` is the local polynomial
    degree of the piecewise family. Basis indices start at 1.
    """

    kind: str
    resolution: int = 1
    degree: int = 0

    def __post_init__(self):
        if self.kind not in FAMILIES:
            raise UnsupportedFamily(f"unknown basis family {self.kind!r}")
        if self.resolution < 1 or self.degree < 0:
            raise ValueError("resolution must be >= 1 and degree >= 0")

    @property
    def size(self) -> int | None:
        """Number of available functions, or None for the infinite families."""
        if self.kind == "histogram":
            return self.resolution
        if self.kind == "piecewise-polynomial":
            return self.resolution * (self.degree + 1)
        return None

    def evaluate(self, j: int, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if j < 1 or (self.size is not None and j > self.size):
            raise IndexError(f"basis index {j} out of range for {self.kind}")
        if self.kind == "trigonometric":
            if j == 1:
                return np.ones_like(t)
            k = j // 2
            if j % 2 == 0:
                return np.sqrt(2.0) * np.cos(2.0 * np.pi * k * t)
            return np.sqrt(2.0) * np.sin(2.0 * np.pi * k * t)
        if self.kind == "polynomial":
            return _legendre01(j - 1, t)
        cells = self.resolution
        cell = np.minimum(np.floor(t * cells).astype(int), cells - 1)
        if self.kind == "histogram":
            return np.where(cell == j - 1, np.sqrt(cells), 0.0)
        piece, deg = divmod(j - 1, self.degree + 1)
        local = t * cells - piece
        return np.where(cell == piece, np.sqrt(cells) * _legendre01(deg, local), 0.0)


def _legendre01(deg: int, t) -> np.ndarray:
    coef = np.zeros(deg + 1)
    coef[deg] = 1.0
    return np.sqrt(2.0 * deg + 1.0) * legendre.legval(2.0 * np.asarray(t) - 1.0, coef)


@dataclass(frozen=True)
class DesignSpec:
    points: np.ndarray
    q_values: np.ndarray
    Q: float
    basis: BasisFamily

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        q = np.asarray(self.q_values, dtype=float)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "q_values", q)
        if pts.ndim != 1 or pts.size < 2:
            raise ValueError("a design needs at least two points")
        if q.shape != pts.shape:
            raise ValueError("q_values must match points")
        if np.any(np.diff(pts) <= 0):
            raise ValueError("design points must be strictly increasing")
        if pts[0] < 0 or pts[-1] > 1:
            raise ValueError("design points must lie in [0, 1]")
        if np.any(q <= 0):
            raise ValueError("density values must be positive")

    @property
    def n(self) -> int:
        return self.points.size


@dataclass(frozen=True)
class Model:
    index_set: tuple[int, ...]
    c_m: float
    label: str = ""

    @property
    def dim(self) -> int:
        return len(self.index_set)


@dataclass(frozen=True)
class DesignConditions:
    as_deviation: float
    alpha_hat: float | None = None
    c1_hat: float | None = None
    c2_hat: float | None = None
    ladder: tuple = field(default_factory=tuple)


def equispaced(n: int, basis: BasisFamily, layout: str = "left", q: float = 1.0) -> DesignSpec:
    """Uniform-density design on the grid i/n ("left") or (i + 1/2)/n ("midpoint")."""
    i = np.arange(n, dtype=float)
    if layout == "left":
        t = i / n
    elif layout == "midpoint":
        t = (i + 0.5) / n
    else:
        raise ValueError(f"unknown layout {layout!r}")
    qv = np.full(n, float(q))
    return DesignSpec(points=t, q_values=qv, Q=float(q), basis=basis)


def load_design_csv(path, basis: BasisFamily, Q: float | None = None) -> DesignSpec:
    """Read a design from a CSV with header ``t,q``."""
    with open(Path(path), newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or not {"t", "q"} <= set(rows[0]):
        raise ValueError(f"{path}: expected columns t,q")
    t = np.array([float(r["t"]) for r in rows])
    q = np.array([float(r["q"]) for r in rows])
    return DesignSpec(points=t, q_values=q, Q=float(q.max()) if Q is None else float(Q), basis=basis)


def make_model(design: DesignSpec, indices: Sequence[int], label: str = "") -> Model:
    """Model over ``indices`` with c_m taken as the max |phi_j| over the design points."""
    idx = tuple(int(j) for j in indices)
    if not idx:
        raise ValueError("a model needs at least one basis function")
    g = gram_matrix(design, idx)
    return Model(index_set=idx, c_m=float(np.max(np.abs(g))), label=label or f"d{len(idx)}")


def nested_models(design: DesignSpec, dims: Sequence[int]) -> list[Model]:
    return [make_model(design, range(1, d + 1)) for d in dims]


def gram_matrix(design: DesignSpec, model) -> np.ndarray:
    """n x d matrix with entry (i, j) = phi_{I(j)}(t_i)."""
    idx = model.index_set if isinstance(model, Model) else tuple(model)
    cols = [design.basis.evaluate(j, design.points) for j in idx]
    g = np.column_stack(cols)
    if not np.all(np.isfinite(g)):
        raise ValueError("basis evaluation produced non-finite values")
    return g


def as_deviation(design: DesignSpec, model) -> float:
    g = gram_matrix(design, model)
    a = (g.T * design.q_values) @ g / design.n
    return spectral_norm(np.eye(g.shape[1]) - a)


def check_conditions(design: DesignSpec, model: Model, ladder: Sequence[DesignSpec] = ()) -> DesignConditions:
    """Verify the density bound and the basis sup-norm bound; report the Gram
    deviation from orthonormality and, given a ladder of designs of increasing
    size, a log-log fit of its decay rate."""
    if np.any(design.q_values > design.Q * (1 + 1e-12)):
        raise ConditionViolated("AQ", f"max q = {design.q_values.max():.6g} exceeds Q = {design.Q:.6g}")
    g = gram_matrix(design, model)
    if np.max(np.abs(g)) > model.c_m * (1 + 1e-12):
        raise ConditionViolated("AB", f"sup |phi| = {np.max(np.abs(g)):.6g} exceeds c_m = {model.c_m:.6g}")
    dev = as_deviation(design, model)
    pairs = [(sub.n, as_deviation(sub, model)) for sub in ladder]
    usable = [(n, v) for n, v in pairs if v > 0]
    alpha = c1 = c2 = None
    if len(usable) >= 3:
        ln = np.log([n for n, _ in usable])
        lv = np.log([v for _, v in usable])
        slope, _ = np.polyfit(ln, lv, 1)
        alpha = float(-slope - 1.0)
        env = np.array([v * n ** (1.0 + alpha) for n, v in usable])
        c1, c2 = float(env.min()), float(env.max())
    return DesignConditions(as_deviation=dev, alpha_hat=alpha, c1_hat=c1, c2_hat=c2, ladder=tuple(pairs))


def rbar_bound(basis: BasisFamily, d: int) -> float:
    """Tabulated upper bound on r-bar, the sup-norm to L2-norm ratio over a d-dim span."""
    if d < 1:
        raise ValueError("d must be >= 1")
    if basis.kind == "trigonometric":
        return float(np.sqrt(2.0 * d))
    if basis.kind == "polynomial":
        return float(d)
    if basis.kind == "histogram":
        return 1.0
    if basis.kind == "piecewise-polynomial":
        return float(2 * basis.degree + 1)
    raise UnsupportedFamily(f"no r-bar constant for {basis.kind!r}")


def eta_s(design: DesignSpec, model) -> float:
    g = gram_matrix(design, model)
    return float(np.sqrt(np.max(np.sum(g * g, axis=1))) / np.sqrt(g.shape[1]))


def r_phi(design: DesignSpec, model) -> float:
    """r_Phi of the given basis on the design: max_i sum_j |phi_j(t_i)| / sqrt(d).

    Upper bounds r-bar (an infimum over orthonormal bases); used as a
    brute-force companion to :func:`eta_s`.
    """
    g = gram_matrix(design, model)
    return float(np.max(np.sum(np.abs(g), axis=1)) / np.sqrt(g.shape[1]))
