"""Discrete stand-ins for fractal measures and the point sets built from them.

Every :class:`DiscreteMeasure` records the ``scale`` of its construction.
Spectral quantities computed from it are meaningful only for frequencies up to
``1 / scale``; beyond that the atoms, not the fractal, dominate.
"""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.spatial import cKDTree

from .errors import BudgetExceededError, ResolutionError

MAX_ATOMS = 4**10
CHUNK = 256


def _readonly(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Probability measure on ``[0,1]^2`` given by weighted atoms."""

    points: np.ndarray
    weights: np.ndarray
    alpha: float
    scale: float
    label: str = ""

    def __post_init__(self):
        pts = _readonly(self.points)
        w = _readonly(self.weights)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) != len(w) or len(w) == 0:
            raise ValueError("points must be (n, 2) with one weight per atom")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights must be nonnegative and sum to 1 (sum={w.sum()!r})")
        if np.any(pts < -1e-12) or np.any(pts > 1 + 1e-12):
            raise ValueError("atoms must lie in the unit square")
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    def __len__(self) -> int:
        return len(self.weights)

    @property
    def max_frequency(self) -> float:
        return 1.0 / self.scale

    def require_frequency(self, t) -> None:
        """Raise :class:`ResolutionError` if any ``|t|`` exceeds ``1/scale``."""
        tmax = float(np.max(np.abs(np.asarray(t, dtype=float))))
        if tmax > self.max_frequency * (1 + 1e-12):
            raise ResolutionError(
                f"frequency {tmax:g} exceeds the resolution limit 1/scale = {self.max_frequency:g}"
            )

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(f"# alpha={self.alpha!r} scale={self.scale!r} label={self.label}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "y", "weight"])
            for (x, y), wt in zip(self.points, self.weights):
                w.writerow([repr(float(x)), repr(float(y)), repr(float(wt))])

    @classmethod
    def read_csv(cls, path) -> DiscreteMeasure:
        with open(path, newline="") as fh:
            header = fh.readline()
            if not header.startswith("#"):
                raise ValueError("missing '# alpha=... scale=...' header line")
            meta = dict(tok.split("=", 1) for tok in header[1:].split() if "=" in tok)
            rows = list(csv.DictReader(fh))
        pts = [(float(r["x"]), float(r["y"])) for r in rows]
        w = np.array([float(r["weight"]) for r in rows])
        return cls(pts, w, float(meta["alpha"]), float(meta["scale"]), meta.get("label", ""))


def point_mass(x: float = 0.0, y: float = 0.0, scale: float = 1.0) -> DiscreteMeasure:
    return DiscreteMeasure([(x, y)], [1.0], 0.0, scale, "point")


def cantor_positions(ratio: float, depth: int) -> np.ndarray:
    """Left endpoints of the ``2^depth`` intervals of the one-dimensional set
    with contraction ``ratio``, sorted."""
    digits = np.array(list(itertools.product((0, 1), repeat=depth)), dtype=float)
    steps = (1.0 - ratio) * ratio ** np.arange(depth)
    return np.sort(digits @ steps)


def cantor_dust(ratio: float, depth: int) -> DiscreteMeasure:
    """Uniform measure on the ``4^depth`` cell corners of the product Cantor set.

    Cells anchor at their lower-left corner, so depth 1 with ratio 1/3 puts
    atoms on ``{0, 2/3}^2``.
    """
    if not 0 < ratio < 0.5:
        raise ValueError("ratio must lie in (0, 1/2)")
    if depth < 1:
        raise ValueError("depth must be at least 1")
    if 4**depth > MAX_ATOMS:
        raise BudgetExceededError(f"4^{depth} atoms exceeds the atom budget {MAX_ATOMS}")
    c = cantor_positions(ratio, depth)
    X, Y = np.meshgrid(c, c, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    n = len(pts)
    alpha = 2.0 * math.log(2.0) / math.log(1.0 / ratio)
    return DiscreteMeasure(pts, np.full(n, 1.0 / n), alpha, ratio**depth, f"cantor({ratio:g},{depth})")


def subsample(mu: DiscreteMeasure, n: int, seed: int) -> DiscreteMeasure:
    """``n`` atoms of ``mu`` drawn without replacement, weights renormalised."""
    if not 1 <= n <= len(mu):
        raise ValueError(f"cannot draw {n} atoms from {len(mu)}")
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(len(mu), size=n, replace=False))
    w = mu.weights[idx]
    return DiscreteMeasure(mu.points[idx], w / w.sum(), mu.alpha, mu.scale, f"{mu.label}[{n}]")


# --------------------------------------------------------------------------
# Point sets


@dataclass(frozen=True, eq=False)
class PointSet:
    """Finite planar point set with generator metadata.

    ``exact`` holds rational coordinates when the generator produces them.
    """

    points: np.ndarray
    kind: str = "custom"
    separation: float | None = None
    density: float | None = None
    delone: bool = False
    exact: tuple[tuple[Fraction, Fraction], ...] | None = field(default=None, repr=False)

    def __post_init__(self):
        pts = _readonly(self.points)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError("points must have shape (n, 2)")
        if not np.all(np.isfinite(pts)):
            raise ValueError("non-finite point")
        object.__setattr__(self, "points", pts)
        if self.exact is not None:
            ex = tuple((Fraction(x), Fraction(y)) for x, y in self.exact)
            if len(ex) != len(pts):
                raise ValueError("exact coordinates do not match the points")
            object.__setattr__(self, "exact", ex)

    def __len__(self) -> int:
        return len(self.points)

    @classmethod
    def from_rationals(cls, coords, kind: str = "custom") -> PointSet:
        ex = tuple((Fraction(x), Fraction(y)) for x, y in coords)
        return cls(np.array([(float(x), float(y)) for x, y in ex], dtype=float).reshape(-1, 2), kind, exact=ex)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "y"])
            for x, y in self.points:
                w.writerow([repr(float(x)), repr(float(y))])

    @classmethod
    def read_csv(cls, path) -> PointSet:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        return cls(np.array([(float(r["x"]), float(r["y"])) for r in rows]).reshape(-1, 2), "file")


def integer_grid(q: int) -> PointSet:
    """``{(p1, p2): 0 <= p_j <= q}`` with exact integer coordinates."""
    if q < 1:
        raise ValueError("q must be at least 1")
    return PointSet.from_rationals(itertools.product(range(q + 1), repeat=2), f"grid({q})")


@dataclass(frozen=True)
class FalconerConstruction:
    """Parameters of the lacunary-grid sets ``E_i``: dimension ``s`` and moduli ``q``."""

    s: float
    q: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "q", tuple(int(v) for v in self.q))
        if not 0 < self.s <= 2:
            raise ValueError("s must lie in (0, 2]")
        if not self.q or any(v < 1 for v in self.q):
            raise ValueError("q must be a nonempty sequence of positive integers")
        for i in range(1, len(self.q)):
            prev, cur = self.q[i - 1], self.q[i]
            if cur <= prev:
                raise ValueError("q must be strictly increasing")
            if cur < prev**i:
                raise ValueError(f"lacunarity fails: q_{i + 1} = {cur} < q_{i}^{i} = {prev**i}")

    @property
    def depth(self) -> int:
        return len(self.q)

    def radius(self, i: int) -> float:
        """Half-width ``q_i^{-2/s}`` of the stage-``i`` squares (1-based ``i``)."""
        return self.q[self._index(i)] ** (-2.0 / self.s)

    def _index(self, i: int) -> int:
        if not 1 <= i <= self.depth:
            raise ValueError(f"stage {i} outside the realised depth 1..{self.depth}")
        return i - 1


def falconer_stage(c: FalconerConstruction, i: int) -> tuple[PointSet, DiscreteMeasure]:
    """Centres ``p / q_i`` of stage ``i`` and the uniform measure on them."""
    q = c.q[c._index(i)]
    coords = [(Fraction(p1, q), Fraction(p2, q)) for p1, p2 in itertools.product(range(q + 1), repeat=2)]
    ps = PointSet.from_rationals(coords, f"falconer(s={c.s:g},q={q})")
    n = len(coords)
    mu = DiscreteMeasure(ps.points, np.full(n, 1.0 / n), c.s, c.radius(i), f"falconer-stage{i}")
    return ps, mu


def delone_set(R: float, kind: str = "lattice", seed: int = 0, jitter: float = 0.0) -> PointSet:
    """Integer lattice points of ``[-R, R]^2``, optionally displaced.

    ``perturbed-lattice`` moves each point uniformly inside a disc of radius
    ``jitter``, which keeps pairwise separation at least ``1 - 2 jitter``.
    """
    if R < 1:
        raise ValueError("R must be at least 1")
    if not 0 <= jitter < 0.5:
        raise ValueError("jitter must lie in [0, 1/2)")
    m = int(math.floor(R))
    ax = np.arange(-m, m + 1, dtype=float)
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    if kind == "lattice":
        sep = 1.0
    elif kind == "perturbed-lattice":
        rng = np.random.default_rng(seed)
        r = jitter * np.sqrt(rng.uniform(size=len(pts)))
        th = rng.uniform(0.0, 2.0 * math.pi, size=len(pts))
        pts = pts + np.column_stack([r * np.cos(th), r * np.sin(th)])
        sep = 1.0 - 2.0 * jitter
    else:
        raise ValueError(f"unknown Delone generator {kind!r}")
    density = len(pts) / (2.0 * R) ** 2
    return PointSet(pts, kind, sep, density, True)


def verify_delone(ps: PointSet, R: float, cover_radius: float) -> bool:
    """Separation at least ``ps.separation`` and every probe of ``[-R,R]^2``
    within ``cover_radius`` of a point."""
    tree = cKDTree(ps.points)
    if len(ps) > 1:
        d, _ = tree.query(ps.points, k=2)
        if d[:, 1].min() < (ps.separation or 0.0) - 1e-12:
            return False
    probe = np.linspace(-R, R, int(4 * R) + 1)
    PX, PY = np.meshgrid(probe, probe)
    d, _ = tree.query(np.column_stack([PX.ravel(), PY.ravel()]))
    return bool(d.max() <= cover_radius)


# --------------------------------------------------------------------------
# Regularity checks


@dataclass(frozen=True)
class FrostmanReport:
    """Empirical ``sup mu(B(y,r)) / r^alpha`` over atom centres."""

    alpha: float
    constant: float
    radii: tuple[float, ...]
    per_radius: tuple[float, ...]
    growth_slope: float
    violation: bool


def _ball_masses(mu: DiscreteMeasure, radii: np.ndarray) -> np.ndarray:
    """``max_y mu(B(y, r))`` over atom centres ``y`` for each radius (closed balls)."""
    pts, w = mu.points, mu.weights
    best = np.zeros(len(radii))
    thresholds = radii * (1 + 1e-12)
    for start in range(0, len(pts), CHUNK):
        block = pts[start : start + CHUNK]
        d = np.hypot(block[:, None, 0] - pts[None, :, 0], block[:, None, 1] - pts[None, :, 1])
        order = np.argsort(d, axis=1, kind="stable")
        ds = np.take_along_axis(d, order, axis=1)
        cw = np.cumsum(w[order], axis=1)
        for k, r in enumerate(thresholds):
            idx = (ds <= r).sum(axis=1) - 1
            best[k] = max(best[k], cw[np.arange(len(block)), idx].max())
    return best


def frostman_check(mu: DiscreteMeasure, alpha: float, radii, growth_tol: float = 0.1) -> FrostmanReport:
    """Best constant ``C`` with ``mu(B(y, r)) <= C r^alpha`` on the sampled radii.

    ``violation`` is set when the per-radius constant grows as ``r`` shrinks
    (log-log slope against ``1/r`` above ``growth_tol``), the signature of an
    over-claimed exponent.
    """
    r = np.sort(np.asarray(radii, dtype=float))[::-1]
    if not 0 < alpha <= 2:
        raise ValueError("alpha must lie in (0, 2]")
    if r.size == 0:
        raise ValueError("no radii given")
    if r.min() < mu.scale * (1 - 1e-12):
        raise ResolutionError(f"radius {r.min():g} is below the construction scale {mu.scale:g}")
    if r.max() > math.sqrt(2.0) * (1 + 1e-12):
        raise ValueError("radii beyond the unit-square diameter carry no information")
    per = _ball_masses(mu, r) / r**alpha
    if r.size >= 2 and r.max() > r.min():
        slope = float(np.polyfit(np.log(1.0 / r), np.log(per), 1)[0])
    else:
        slope = 0.0
    return FrostmanReport(alpha, float(per.max()), tuple(r.tolist()), tuple(per.tolist()), slope, slope > growth_tol)


def energy_integral(mu: DiscreteMeasure, alpha: float) -> float:
    """``sum_{i != j} w_i w_j |x_i - x_j|^{-alpha}``; coincident atoms raise."""
    if not 0 <= alpha < 2:
        raise ValueError("alpha must lie in [0, 2)")
    pts, w = mu.points, mu.weights
    total = 0.0
    for start in range(0, len(pts), CHUNK):
        block = pts[start : start + CHUNK]
        d = np.hypot(block[:, None, 0] - pts[None, :, 0], block[:, None, 1] - pts[None, :, 1])
        rows = np.arange(len(block))
        d[rows, rows + start] = np.inf
        if np.any(d == 0):
            raise ValueError("distinct atoms coincide; the energy is infinite")
        # inf**-0 is 1, so the masked diagonal must be dropped explicitly
        total += float(np.where(np.isinf(d), 0.0, w[start : start + CHUNK, None] * w[None, :] * d**-alpha).sum())
    return total


# --------------------------------------------------------------------------
# Difference measure


def difference_measure(mu: DiscreteMeasure, decimals: int = 12, max_pairs: int = 2**25):
    """Pushforward of ``mu x mu`` under ``(x, y) -> x - y`` with ``d ~ -d`` folded.

    Returns ``(vectors, weights)``.  Differences agreeing after rounding to
    ``decimals`` places are merged; the zero vector carries the diagonal mass.
    Any function of the difference that is even in ``d`` can be summed against
    this instead of all ``n^2`` pairs.
    """
    n = len(mu)
    if n * n > max_pairs:
        raise BudgetExceededError(f"{n * n} pairs exceed the budget {max_pairs}")
    pts, w = mu.points, mu.weights
    D = (pts[:, None, :] - pts[None, :, :]).reshape(-1, 2)
    W = (w[:, None] * w[None, :]).ravel()
    D = np.round(D, decimals) + 0.0
    flip = (D[:, 0] < 0) | ((D[:, 0] == 0) & (D[:, 1] < 0))
    D[flip] = -D[flip]
    uniq, inv = np.unique(D, axis=0, return_inverse=True)
    weights = np.bincount(inv.ravel(), weights=W, minlength=len(uniq))
    return uniq, weights
