"""Distance sets of finite point sets in elliptical norms, covering numbers,
box-dimension estimates, and the two counting experiments (lacunary grids and
Delone sets).

Two counting modes:

``exact``
    squared norms as exact rationals.  Coordinates and the quadratic form are
    scaled to integers, so equal distances are merged exactly and distinct
    ones never are.
``tolerant``
    float norms, sorted and merged in a single pass whenever the gap to the
    previous value is at most ``tolerance`` (default ``1e-9 * max``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce
from typing import Callable, Sequence

import numpy as np

from .convex_bodies import Ellipse, ellipse_norm
from .errors import BudgetExceededError, ExactModeError
from .fourier import ExponentFit, fit_exponent
from .measures import FalconerConstruction, PointSet, delone_set, falconer_stage

MAX_PAIRS = 2**31
# pair values held in memory at once; larger jobs are split by value range
MAX_RESIDENT = 2**28
BLOCK = 1 << 22
REL_TOL = 1e-9
I64_SAFE = 2**62


@dataclass(frozen=True, eq=False)
class DistanceSetResult:
    """Sorted distinct distances (squared distances in exact mode)."""

    values: np.ndarray
    count: int
    mode: str
    tolerance: float | None = None
    include_zero: bool = False
    numerators: tuple[int, ...] | None = field(default=None, repr=False)
    denominator: int | None = None

    @property
    def exact_values(self) -> tuple[Fraction, ...]:
        if self.numerators is None:
            raise ValueError("tolerant results carry no exact values")
        return tuple(Fraction(n, self.denominator) for n in self.numerators)

    @property
    def distances(self) -> np.ndarray:
        """Distances (square roots in exact mode)."""
        return np.sqrt(self.values) if self.mode == "exact" else self.values


# --------------------------------------------------------------------------
# Pair enumeration


def _pair_count(n: int, origin: bool) -> int:
    return n if origin else n * (n - 1) // 2


def check_pair_budget(n: int, max_pairs: int = MAX_PAIRS, label: str = "") -> None:
    """Raise :class:`BudgetExceededError` if ``n`` points have too many pairs."""
    pairs = n * (n - 1) // 2
    if pairs > max_pairs:
        raise BudgetExceededError(f"{label}{pairs} pairs exceed the budget of {max_pairs}")


def lattice_size(R: float) -> int:
    """Number of points :func:`delone_set` places in ``[-R, R]^2``."""
    return (2 * int(math.floor(R)) + 1) ** 2


def _row_blocks(n: int):
    rows = max(1, BLOCK // max(1, n))
    for s in range(0, n, rows):
        yield s, min(n, s + rows)


def _pair_differences(points: np.ndarray):
    """Yield difference blocks ``x_j - x_i`` over all ``i < j``."""
    n = len(points)
    for s, e in _row_blocks(n):
        rows = points[s:e]
        cols = points[s + 1 :]
        if len(cols) == 0:
            continue
        d = cols[None, :, :] - rows[:, None, :]
        # column k of the block is point s+1+k; keep it when s+1+k > s+r
        keep = np.arange(len(cols))[None, :] >= np.arange(e - s)[:, None]
        yield d[keep]


def _merge_sorted(values: np.ndarray, tol: float, last: float | None):
    """Cluster representatives of sorted ``values`` given the previous value."""
    if len(values) == 0:
        return values, last
    gaps = np.diff(values, prepend=-np.inf if last is None else last)
    return values[gaps > tol], float(values[-1])


def _tolerant_values(points: np.ndarray, norm: Callable, origin, tol: float | None,
                     max_resident: int) -> tuple[np.ndarray, float]:
    if origin is not None:
        vals = np.sort(np.asarray(norm(points - np.asarray(origin, dtype=float)), dtype=float).ravel())
        chunks = [vals]
    else:
        npairs = _pair_count(len(points), False)
        if npairs <= max_resident:
            vals = np.empty(npairs)
            pos = 0
            for d in _pair_differences(points):
                vals[pos : pos + len(d)] = norm(d)
                pos += len(d)
            vals.sort()
            chunks = [vals]
        else:
            chunks = None
    if chunks is not None:
        vals = chunks[0]
        top = float(vals[-1]) if len(vals) else 0.0
        tol = REL_TOL * (top or 1.0) if tol is None else tol
        return _merge_sorted(vals, tol, None)[0], tol
    # value-range partition: one pass for the histogram, one per slab
    top = 0.0
    for d in _pair_differences(points):
        top = max(top, float(np.max(norm(d))))
    tol = REL_TOL * (top or 1.0) if tol is None else tol
    bins = np.linspace(0.0, top, 4097)
    hist = np.zeros(4096, dtype=np.int64)
    for d in _pair_differences(points):
        hist += np.histogram(norm(d), bins=bins)[0]
    cum = np.cumsum(hist)
    slabs, start = [], 0
    while start < 4096:
        base = cum[start - 1] if start else 0
        stop = int(np.searchsorted(cum, base + max_resident, side="right"))
        stop = max(stop, start + 1)
        slabs.append((bins[start], bins[min(stop, 4096)], stop >= 4096))
        start = stop
    reps, last = [], None
    for lo, hi, final in slabs:
        parts = []
        for d in _pair_differences(points):
            v = norm(d)
            m = (v >= lo) & ((v <= hi) if final else (v < hi))
            parts.append(v[m])
        r, last = _merge_sorted(np.sort(np.concatenate(parts)), tol, last)
        reps.append(r)
    return np.concatenate(reps), tol


def _float_form(K: Ellipse) -> tuple[float, float, float]:
    """``(A, B, C)`` with ``||x||^2 = A x1^2 + 2 B x1 x2 + C x2^2``."""
    c, s = math.cos(K.phi), math.sin(K.phi)
    a1, a2 = K.a1**2, K.a2**2
    return a1 * c * c + a2 * s * s, c * s * (a2 - a1), a1 * s * s + a2 * c * c


def _lcm(a: int, b: int) -> int:
    return a * b // math.gcd(a, b)


def _exact_values(S: PointSet, K: Ellipse, origin) -> tuple[list[int] | np.ndarray, int]:
    if S.exact is None:
        raise ExactModeError("exact mode needs rational coordinates; use mode='tolerant'")
    if K.exact is None:
        raise ExactModeError(
            "exact mode needs rational a1^2, a2^2 and a rational rotation "
            "(Ellipse.pythagorean); use mode='tolerant' for general parameters")
    A, B, C = K.exact.quadratic_form()
    coords = list(S.exact)
    if origin is not None:
        o = (Fraction(origin[0]), Fraction(origin[1]))
        coords = [(x - o[0], y - o[1]) for x, y in coords]
    L = reduce(_lcm, (c.denominator for xy in coords for c in xy), 1)
    D = reduce(_lcm, (A.denominator, (2 * B).denominator, C.denominator), 1)
    a, b2, c = int(A * D), int(2 * B * D), int(C * D)
    X = [(int(x * L), int(y * L)) for x, y in coords]
    denom = D * L * L
    span = max((max(abs(x), abs(y)) for x, y in X), default=0) * (1 if origin is not None else 2)
    if max(abs(a), abs(b2), abs(c), 1) * 3 * span * span < I64_SAFE:
        P = np.array(X, dtype=np.int64).reshape(-1, 2)

        def q(d):
            dx, dy = d[:, 0], d[:, 1]
            return a * dx * dx + b2 * dx * dy + c * dy * dy

        if origin is not None:
            vals = np.unique(q(P))
        else:
            parts = [np.unique(q(d)) for d in _pair_differences(P)]
            vals = np.unique(np.concatenate(parts)) if parts else np.empty(0, dtype=np.int64)
        return vals, denom
    # arbitrary precision fallback
    if origin is not None:
        out = {a * x * x + b2 * x * y + c * y * y for x, y in X}
    else:
        out = set()
        for i, (x1, y1) in enumerate(X):
            for x2, y2 in X[i + 1 :]:
                dx, dy = x2 - x1, y2 - y1
                out.add(a * dx * dx + b2 * dx * dy + c * dy * dy)
    return sorted(out), denom


def distance_set(S: PointSet, K: Ellipse | None = None, mode: str = "tolerant", tolerance: float | None = None,
                 include_zero: bool = False, origin=None, max_pairs: int = MAX_PAIRS,
                 max_resident: int = MAX_RESIDENT) -> DistanceSetResult:
    """``Delta_K(S)``: distinct ``||x - y||_{a,phi}`` over pairs of ``S``.

    With ``origin`` only the distances from that point to ``S`` are counted.
    Zero enters iff ``include_zero``; in tolerant mode values within
    ``tolerance`` of zero count as zero.
    """
    K = K or Ellipse(1.0, 1.0, 0.0)
    if tolerance is not None and not tolerance > 0:
        raise ValueError("tolerance must be positive")
    npairs = _pair_count(len(S), origin is not None)
    if npairs > max_pairs:
        raise BudgetExceededError(f"{npairs} pairs exceed the budget of {max_pairs}")
    if mode == "exact":
        nums, den = _exact_values(S, K, origin)
        nums = [int(v) for v in nums]
        if include_zero and (not nums or nums[0] != 0) and (origin is None and len(S) > 0):
            nums = [0] + nums
        if not include_zero:
            nums = [v for v in nums if v != 0]
        vals = np.array([v / den for v in nums], dtype=float)
        return DistanceSetResult(vals, len(nums), "exact", None, include_zero, tuple(nums), den)
    if mode != "tolerant":
        raise ValueError(f"unknown mode {mode!r}; expected 'exact' or 'tolerant'")
    pts = np.asarray(S.points, dtype=float)

    A, B, C = _float_form(K)

    def norm(d):
        dx, dy = d[:, 0], d[:, 1]
        sq = (A * dx + 2.0 * B * dy) * dx + C * dy * dy
        return np.sqrt(np.maximum(sq, 0.0), out=sq)

    vals, tol = _tolerant_values(pts, norm, origin, tolerance, max_resident)
    if len(vals) and vals[0] <= tol:
        # coincident points (or the origin itself): represent the cluster by 0
        vals = np.concatenate([[0.0], vals[1:]]) if include_zero else vals[1:]
    elif include_zero and origin is None and len(S) > 0:
        vals = np.concatenate([[0.0], vals])
    return DistanceSetResult(vals, len(vals), "tolerant", tol, include_zero)


# --------------------------------------------------------------------------
# Grid counts


@dataclass(frozen=True)
class GridBoundReport:
    q: int
    origin_count: int
    origin_bound: int
    pair_count: int
    pair_bound: int

    @property
    def passed(self) -> bool:
        return self.origin_count <= self.origin_bound and self.pair_count <= self.pair_bound


def grid_count_bound_check(q: int, K: Ellipse | None = None, mode: str | None = None,
                           tolerance: float | None = None) -> GridBoundReport:
    """Distinct distances on ``{0..q}^2``, zero included.

    The origin count (distances from ``(0,0)``) is compared with
    ``(q+1)^2``; the full pairwise count, which ranges over the difference
    lattice ``{-q..q}^2``, with ``(2q+1)^2``.  ``mode=None`` picks exact
    counting when ``K`` has rational data.
    """
    from .measures import integer_grid

    K = K or Ellipse.euclidean()
    if mode is None:
        mode = "exact" if K.exact is not None else "tolerant"
    grid = integer_grid(q)
    o = distance_set(grid, K, mode, tolerance, include_zero=True, origin=(0, 0))
    p = distance_set(grid, K, mode, tolerance, include_zero=True)
    return GridBoundReport(q, o.count, (q + 1) ** 2, p.count, (2 * q + 1) ** 2)


# --------------------------------------------------------------------------
# Covering and dimension


@dataclass(frozen=True)
class CoveringReport:
    interval_length: float
    count: int


def covering_number(values, ell: float) -> CoveringReport:
    """Fewest intervals of length ``ell`` covering ``values`` (greedy, optimal in 1-d).

    A value beyond the current interval end by at most ``1e-9 ell`` is
    treated as covered, so grids aligned with ``ell`` are not split by rounding.
    """
    if not ell > 0:
        raise ValueError("ell must be positive")
    v = np.asarray(values, dtype=float).ravel()
    if len(v) == 0:
        return CoveringReport(float(ell), 0)
    if np.any(np.diff(v) < 0):
        raise ValueError("values must be sorted")
    reach = ell * (1.0 + REL_TOL)
    count, i = 0, 0
    while i < len(v):
        count += 1
        i = int(np.searchsorted(v, v[i] + reach, side="right"))
    return CoveringReport(float(ell), count)


def box_dimension(values, scale_range: tuple[float, float] | None = None, scales=None,
                  points_per_octave: int = 2) -> ExponentFit:
    """Slope of ``log N(ell)`` against ``log(1/ell)``.

    ``scales`` lists the interval lengths explicitly; otherwise a geometric
    grid over ``scale_range`` is used.  At least 3 scales spanning 2 octaves
    are required.
    """
    if scales is None:
        if scale_range is None:
            raise ValueError("give scale_range or scales")
        lo, hi = sorted(float(s) for s in scale_range)
        if lo <= 0:
            raise ValueError("scales must be positive")
        num = max(3, int(round(math.log2(hi / lo) * points_per_octave)) + 1)
        scales = np.geomspace(lo, hi, num)
    ell = np.sort(np.asarray(scales, dtype=float))
    if len(ell) < 3 or ell[-1] / ell[0] < 4 * (1 - 1e-12):
        raise ValueError("need at least 3 scales spanning at least 2 octaves")
    v = np.sort(np.asarray(values, dtype=float).ravel())
    N = np.array([covering_number(v, e).count for e in ell], dtype=float)
    return fit_exponent(1.0 / ell[::-1], N[::-1])


# --------------------------------------------------------------------------
# Experiments


@dataclass(frozen=True)
class SharpnessSample:
    body: Ellipse
    value_count: int
    covering: int
    bound: int
    dimension: ExponentFit
    passed: bool
    coverings: tuple[int, ...] = ()  # N(ell) at each of the report's scales


@dataclass(frozen=True)
class SharpnessReport:
    s: float
    stage: int
    q: int
    ell: float
    scales: tuple[float, ...]
    samples: tuple[SharpnessSample, ...]
    dimension_tol: float

    @property
    def passed(self) -> bool:
        return all(x.passed for x in self.samples)

    @property
    def max_dimension(self) -> float:
        return max(x.dimension.slope for x in self.samples)


def sharpness_scales(c: FalconerConstruction, stage: int, points_per_octave: int = 2) -> np.ndarray:
    """Scales for the dimension estimate at ``stage``: geometric from
    ``q_stage^{-2/s}`` up to the coarsest stage scale, at least 2 octaves."""
    lo = c.radius(stage)
    hi = max(c.radius(1), 4.0 * lo)
    num = max(3, int(round(math.log2(hi / lo) * points_per_octave)) + 1)
    return np.geomspace(lo, hi, num)


def sharpness_experiment(c: FalconerConstruction, stage: int, samples: Sequence[Ellipse],
                         tolerance: float | None = None, dimension_tol: float = 0.15,
                         max_pairs: int = MAX_PAIRS) -> SharpnessReport:
    """Distances between stage centres, covered at ``ell = q_stage^{-2/s}``.

    A sample passes when ``N(ell) <= (2 q + 1)^2`` and the box-dimension
    estimate over :func:`sharpness_scales` is at most ``s + dimension_tol``.
    """
    ps, _ = falconer_stage(c, stage)
    q = c.q[stage - 1]
    if len(ps) ** 2 > max_pairs:
        raise BudgetExceededError(f"(q+1)^4 = {len(ps) ** 2} pairs exceed the budget of {max_pairs}")
    ell = c.radius(stage)
    scales = sharpness_scales(c, stage)
    bound = (2 * q + 1) ** 2
    out = []
    for K in samples:
        res = distance_set(ps, K, "tolerant", tolerance, max_pairs=max_pairs)
        cov = covering_number(res.values, ell).count
        dim = box_dimension(res.values, scales=scales)
        covs = tuple(covering_number(res.values, e).count for e in scales)
        out.append(SharpnessSample(K, res.count, cov, bound, dim,
                                   cov <= bound and dim.slope <= c.s + dimension_tol, covs))
    return SharpnessReport(c.s, stage, q, ell, tuple(scales.tolist()), tuple(out), dimension_tol)


@dataclass(frozen=True)
class ErdosReport:
    R: tuple[float, ...]
    samples: tuple[Ellipse, ...]
    counts: tuple[tuple[int, ...], ...]   # counts[sample][radius]
    fits: tuple[ExponentFit, ...]
    kind: str

    @property
    def exponents(self) -> np.ndarray:
        return np.array([f.slope for f in self.fits])

    def quantiles(self, qs=(0.0, 0.25, 0.5, 0.75, 1.0)) -> dict[str, float]:
        return {f"q{int(round(100 * p)):02d}": float(np.quantile(self.exponents, p)) for p in qs}


def _lattice_distances(R: float, K: Ellipse, tolerance: float | None) -> DistanceSetResult:
    """Distance set of the integer lattice in ``[-R,R]^2`` through its
    difference lattice, which has ``(4m+1)^2`` vectors instead of ``O(m^4)`` pairs."""
    m = int(math.floor(R))
    ax = np.arange(0, 2 * m + 1, dtype=float)
    X, Y = np.meshgrid(ax, np.arange(-2 * m, 2 * m + 1, dtype=float), indexing="ij")
    d = np.column_stack([X.ravel(), Y.ravel()])
    d = d[(d[:, 0] > 0) | (d[:, 1] > 0)]  # one of each +-pair, no zero
    vals = np.sort(np.asarray(ellipse_norm(d, K), dtype=float).ravel())
    tol = REL_TOL * float(vals[-1]) if tolerance is None else tolerance
    reps = _merge_sorted(vals, tol, None)[0]
    return DistanceSetResult(reps, len(reps), "tolerant", tol, False)


def erdos_experiment(R_list: Sequence[float], samples: Sequence[Ellipse], kind: str = "perturbed-lattice",
                     seed: int = 0, jitter: float = 0.2, tolerance: float | None = None,
                     generator: Callable | None = None, max_pairs: int = MAX_PAIRS) -> ErdosReport:
    """Distinct-distance counts of a Delone set in ``[-R,R]^2`` for each ``R``
    and sampled norm, with the fitted growth exponent per norm.

    ``generator(R, seed)`` overrides the built-in :func:`delone_set` kinds.
    """
    R_list = [float(r) for r in R_list]
    if len(R_list) < 4:
        raise ValueError("need at least 4 radii")
    if any(b <= a for a, b in zip(R_list, R_list[1:])):
        raise ValueError("radii must be increasing")
    if generator is None:
        for R in R_list:
            check_pair_budget(lattice_size(R), max_pairs, f"R={R:g}: ")
    sets = []
    for R in R_list:
        ps = generator(R, seed) if generator else delone_set(R, kind, seed, jitter if kind != "lattice" else 0.0)
        check_pair_budget(len(ps), max_pairs, f"R={R:g}: ")
        sets.append(ps)
    counts, fits = [], []
    for K in samples:
        row = []
        for R, ps in zip(R_list, sets):
            if generator is None and kind == "lattice":
                row.append(_lattice_distances(R, K, tolerance).count)
            else:
                row.append(distance_set(ps, K, "tolerant", tolerance, max_pairs=max_pairs).count)
        counts.append(tuple(row))
        fits.append(fit_exponent(np.array(R_list), np.array(row, dtype=float)))
    return ErdosReport(tuple(R_list), tuple(samples), tuple(counts), tuple(fits), kind)
