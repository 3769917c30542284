"""Circular averages of ``|mu_hat|^2``, truncated Mattila integrals, dyadic
blocks, and the distance measures ``nu_0``/``nu``.

Two evaluations of the circular average are available everywhere:

``quadrature``
    trapezoid rule over the circle of ``|mu_hat(t omega_{a,phi})|^2``;
``pairs``
    ``sum_{x,y} w_x w_y sigma_hat(t (x - y)_{a,phi})`` with
    ``sigma_hat = 2 pi J0(2 pi |.|)``, summed over the folded difference
    measure.

They agree up to quadrature error; ``pairs`` is much cheaper when the measure
has many repeated differences (lattice-like constructions).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import j0

from .convex_bodies import ConvexBody, Ellipse, dual_body, ellipse_norm, map_circle_point
from .errors import ResolutionError
from .fourier import ExponentFit, _check_nodes, boundary_quadrature, fit_exponent, measure_ft, upper_envelope
from .measures import DiscreteMeasure, difference_measure, energy_integral

TWO_PI = 2.0 * math.pi
BLOCK = 1 << 22

# cutoff transition: chi = 1 on [0, LP_LOW], 0 on [LP_HIGH, inf)
LP_LOW = 0.8
LP_HIGH = 1.0


# --------------------------------------------------------------------------
# Smooth cutoffs


def _smoothstep(x):
    """C-infinity step: 0 for x <= 0, 1 for x >= 1."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        f = np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)
        g = np.where(x < 1, np.exp(-1.0 / np.where(x < 1, 1.0 - x, 1.0)), 0.0)
    return f / (f + g)


def _chi(u):
    return 1.0 - _smoothstep((np.asarray(u, dtype=float) - LP_LOW) / (LP_HIGH - LP_LOW))


def littlewood_paley_beta(u):
    """Smooth dyadic bump ``beta(u) = chi(u/2) - chi(u)``.

    Supported in ``[0.8, 2]``, equal to 1 on ``[1, 1.6]``; the sum
    ``sum_{n=0}^{N} beta(2^-n t)`` telescopes to ``chi(2^-(N+1) t) - chi(t)``,
    which is exactly 1 on ``[1, 0.8 * 2^(N+1)]``.
    """
    u = np.asarray(u, dtype=float)
    val = _chi(u / 2.0) - _chi(u)
    return float(val) if val.ndim == 0 else val


def beta_n(t, n: int):
    """Block weight ``beta(2^-n t)``."""
    return littlewood_paley_beta(np.asarray(t, dtype=float) * 2.0**-n)


def block_support(n: int) -> tuple[float, float]:
    return LP_LOW * 2.0**n, LP_HIGH * 2.0 ** (n + 1)


def psi_cutoff(a1, a2):
    """Product cutoff equal to 1 on ``[1,2]^2`` and vanishing outside ``[1/2,4]^2``."""

    def one(u):
        u = np.asarray(u, dtype=float)
        return _smoothstep((u - 0.5) / 0.5) * (1.0 - _smoothstep((u - 2.0) / 2.0))

    val = one(a1) * one(a2)
    return float(val) if np.ndim(val) == 0 else val


# --------------------------------------------------------------------------
# Circular averages


def _as_t(t) -> np.ndarray:
    tt = np.asarray(t, dtype=float)
    if np.any(tt < 0) or not np.all(np.isfinite(tt)):
        raise ValueError("t must be finite and nonnegative")
    return tt


def _pairs_sum(distances: np.ndarray, weights: np.ndarray, t: np.ndarray) -> np.ndarray:
    flat = t.ravel()
    out = np.empty(flat.shape)
    step = max(1, BLOCK // max(1, len(distances)))
    for s in range(0, len(flat), step):
        arg = TWO_PI * flat[s : s + step, None] * distances[None, :]
        out[s : s + step] = TWO_PI * (j0(arg) @ weights)
    return out.reshape(t.shape)


def spherical_average(mu: DiscreteMeasure, t, K: Ellipse | None = None, nodes: int = 1024,
                      method: str = "quadrature", diff=None):
    """``S(t) = int_{S^1} |mu_hat(t omega_{a,phi})|^2 d omega``.

    ``K=None`` is the Euclidean circle.  ``diff`` optionally supplies a
    precomputed :func:`difference_measure` for ``method="pairs"``.
    """
    K = K or Ellipse(1.0, 1.0, 0.0)
    tt = _as_t(t)
    mu.require_frequency(tt)
    if method == "quadrature":
        _check_nodes(nodes)
        theta = TWO_PI * np.arange(nodes) / nodes
        omega = map_circle_point(np.column_stack([np.cos(theta), np.sin(theta)]), K)
        flat = tt.ravel()
        out = np.empty(flat.shape)
        for i, ti in enumerate(flat):
            mh = measure_ft(mu, ti * omega)
            out[i] = (mh.real**2 + mh.imag**2).sum() * (TWO_PI / nodes)
        out = out.reshape(tt.shape)
    elif method == "pairs":
        vec, w = diff if diff is not None else difference_measure(mu)
        out = _pairs_sum(np.asarray(ellipse_norm(vec, K)), w, tt)
    else:
        raise ValueError(f"unknown method {method!r}")
    return float(out) if out.ndim == 0 else out


def pair_sum_average(mu: DiscreteMeasure, t, K: Ellipse | ConvexBody | None = None, nodes: int = 4096):
    """Double sum ``sum_{x,y} w_x w_y sigma_hat(t (x - y))`` over all ordered pairs.

    For an :class:`Ellipse` ``sigma`` is arc length on the unit circle and the
    difference is first mapped by ``D_a R_phi``; for a :class:`ConvexBody`
    ``sigma`` is arc length on its boundary, integrated with ``nodes`` points.
    """
    tt = _as_t(t)
    mu.require_frequency(tt)
    pts, w = mu.points, mu.weights
    D = (pts[:, None, :] - pts[None, :, :]).reshape(-1, 2)
    W = (w[:, None] * w[None, :]).ravel()
    if K is None or isinstance(K, Ellipse):
        r = np.asarray(ellipse_norm(D, K or Ellipse(1.0, 1.0, 0.0)))
        out = _pairs_sum(r, W, tt)
    else:
        bp, bw = boundary_quadrature(K, nodes if K.is_ellipse else None)
        flat = tt.ravel()
        out = np.empty(flat.shape)
        step = max(1, BLOCK // len(bp))
        for i, ti in enumerate(flat):
            acc = 0.0
            for s in range(0, len(D), step):
                acc += float(W[s : s + step] @ (np.cos(TWO_PI * ti * (D[s : s + step] @ bp.T)) @ bw))
            out[i] = acc
        out = out.reshape(tt.shape)
    return float(out) if out.ndim == 0 else out


def boundary_average(mu: DiscreteMeasure, t, K: ConvexBody, nodes: int | None = 4096,
                     exclude_diagonal: bool = False):
    """``int_{boundary K} |mu_hat(t omega)|^2 d omega_K`` with arc-length measure.

    ``exclude_diagonal`` removes the atomic self-interaction
    ``perimeter * sum_j w_j^2``, leaving the off-diagonal pair sum.
    """
    tt = _as_t(t)
    mu.require_frequency(tt)
    bp, bw = boundary_quadrature(K, nodes if K.is_ellipse else None)
    flat = tt.ravel()
    out = np.empty(flat.shape)
    for i, ti in enumerate(flat):
        mh = measure_ft(mu, ti * bp)
        out[i] = (mh.real**2 + mh.imag**2) @ bw
    if exclude_diagonal:
        out -= bw.sum() * float(mu.weights @ mu.weights)
    out = out.reshape(tt.shape)
    return float(out) if out.ndim == 0 else out


# --------------------------------------------------------------------------
# Mattila integrals


def t_grid(t_max: float, nodes_per_block: int = 64) -> np.ndarray:
    """Geometric grid on ``[1, t_max]`` with ``nodes_per_block`` intervals per octave."""
    if t_max <= 1:
        raise ValueError("t_max must exceed 1")
    if nodes_per_block < 2:
        raise ValueError("nodes_per_block must be at least 2")
    k = np.arange(int(math.floor(math.log2(t_max) * nodes_per_block + 1e-9)) + 1)
    g = 2.0 ** (k / nodes_per_block)
    if t_max - g[-1] > 1e-12 * t_max:
        g = np.append(g, t_max)
    return g


def _samples_and_weights(K_or_samples, weights=None):
    if K_or_samples is None:
        return [Ellipse(1.0, 1.0, 0.0)], np.ones(1)
    if isinstance(K_or_samples, Ellipse):
        return [K_or_samples], np.ones(1)
    samples = list(K_or_samples)
    if not samples:
        raise ValueError("empty sample set")
    w = np.ones(len(samples)) if weights is None else np.asarray(weights, dtype=float)
    if len(w) != len(samples) or np.any(w < 0) or w.sum() <= 0:
        raise ValueError("sample weights must be nonnegative, one per sample, not all zero")
    return samples, w


@dataclass(frozen=True, eq=False)
class MattilaProfile:
    """``psi``-weighted average of ``S(t)^2`` over metric samples on a grid."""

    grid: np.ndarray
    mean_sq: np.ndarray          # sum_i w_i psi_i S_i(t)^2 / sum_i w_i
    per_sample_sq: np.ndarray    # psi_i S_i(t)^2, shape (samples, grid)
    weights: np.ndarray


def mattila_profile(mu: DiscreteMeasure, K_or_samples, grid, weights=None,
                    psi: Callable = psi_cutoff, method: str = "pairs", angle_nodes: int = 1024) -> MattilaProfile:
    samples, w = _samples_and_weights(K_or_samples, weights)
    grid = np.asarray(grid, dtype=float)
    mu.require_frequency(grid)
    diff = difference_measure(mu) if method == "pairs" else None
    per = np.empty((len(samples), len(grid)))
    for i, K in enumerate(samples):
        S = np.asarray(spherical_average(mu, grid, K, angle_nodes, method, diff))
        per[i] = psi(K.a1, K.a2) * S**2
    mean = (w @ per) / w.sum()
    return MattilaProfile(grid, mean, per, w)


def mattila_integral(mu: DiscreteMeasure, K: Ellipse | None, t_max: float, nodes_per_block: int = 64,
                     angle_nodes: int = 1024, method: str = "pairs") -> float:
    """Truncated ``int_1^{t_max} S(t)^2 t dt`` (composite trapezoid on :func:`t_grid`)."""
    mu.require_frequency(t_max)
    g = t_grid(t_max, nodes_per_block)
    prof = mattila_profile(mu, K, g, psi=lambda a1, a2: 1.0, method=method, angle_nodes=angle_nodes)
    return float(np.trapezoid(prof.mean_sq * g, g))


@dataclass(frozen=True)
class AveragedMattila:
    value: float
    variance: float
    per_sample: tuple[float, ...]
    t_max: float


def averaged_mattila(mu: DiscreteMeasure, samples, t_max: float, weights=None, psi: Callable = psi_cutoff,
                     nodes_per_block: int = 64, angle_nodes: int = 1024, method: str = "pairs",
                     profile: MattilaProfile | None = None) -> AveragedMattila:
    """Weighted mean over metric samples of ``psi(a)`` times the truncated integral.

    ``variance`` is the estimator variance (weighted sample variance over the
    number of samples).
    """
    mu.require_frequency(t_max)
    if profile is None:
        g = t_grid(t_max, nodes_per_block)
        profile = mattila_profile(mu, samples, g, weights, psi, method, angle_nodes)
    g = profile.grid
    per = np.trapezoid(profile.per_sample_sq * g, g, axis=1)
    w = profile.weights
    mean = float((w @ per) / w.sum())
    n = len(per)
    var = float((w @ (per - mean) ** 2) / w.sum() / n) if n > 1 else 0.0
    value = float(np.trapezoid(profile.mean_sq * g, g))
    return AveragedMattila(value, var, tuple(per.tolist()), float(g[-1]))


@dataclass(frozen=True)
class DyadicBlockReport:
    """One Littlewood-Paley block ``I_n`` of the (averaged) Mattila integral."""

    n: int
    value: float
    t_range: tuple[float, float]
    nodes_per_block: int
    angle_nodes: int
    method: str

    def to_dict(self) -> dict:
        return {"n": self.n, "value": self.value, "t_range": list(self.t_range),
                "nodes_per_block": self.nodes_per_block, "angle_nodes": self.angle_nodes,
                "method": self.method}


def resolved_blocks(mu: DiscreteMeasure) -> list[int]:
    """Block indices ``n >= 0`` with ``2^(n+2) <= 1/scale``."""
    out = []
    n = 0
    while 2.0 ** (n + 2) <= mu.max_frequency * (1 + 1e-12):
        out.append(n)
        n += 1
    return out


def dyadic_blocks(mu: DiscreteMeasure, K_or_samples=None, t_max: float | None = None,
                  ns: Sequence[int] | None = None, weights=None, psi: Callable = psi_cutoff,
                  nodes_per_block: int = 64, angle_nodes: int = 1024, method: str = "pairs",
                  profile: MattilaProfile | None = None) -> list[DyadicBlockReport]:
    """Blocks ``I_n = int S^2 t beta(2^-n t) dt`` (``psi``-averaged over samples).

    Without ``t_max`` every block is integrated over its full support
    ``[0.8 * 2^n, 2^(n+1)]`` on a grid ``0.8 * 2^(k / nodes_per_block)``, so
    the blocks of a dilation-invariant integrand scale exactly by 4; each
    block must satisfy ``2^(n+2) <= 1/scale``.  With
    ``t_max`` the blocks are clipped to ``[1, t_max]`` and, taken over all
    ``n`` meeting that interval, sum to the truncated averaged integral.
    """
    if t_max is None:
        allowed = resolved_blocks(mu)
        ns = allowed if ns is None else list(ns)
        bad = [n for n in ns if n not in allowed]
        if bad:
            raise ResolutionError(f"blocks {bad} need 2^(n+2) <= 1/scale = {mu.max_frequency:g}")
        if not ns:
            raise ResolutionError("no dyadic block is resolved at this scale")
        upper = None
    else:
        mu.require_frequency(t_max)
        upper = float(t_max)
        if ns is None:
            ns = [n for n in range(64) if block_support(n)[0] < t_max]
    if upper is None:
        g = LP_LOW * 2.0 ** (np.arange(nodes_per_block * (max(ns) + 2) + 1) / nodes_per_block)
    else:
        g = t_grid(upper, nodes_per_block)
    if profile is None:
        profile = mattila_profile(mu, K_or_samples, g, weights, psi, method, angle_nodes)
    elif profile.grid.shape != g.shape or not np.allclose(profile.grid, g, rtol=1e-12, atol=0):
        raise ValueError("profile grid does not match the block grid")
    g = profile.grid
    out = []
    for n in ns:
        lo, hi = block_support(n)
        t_range = (lo, hi) if upper is None else (max(1.0, lo), min(hi, upper))
        val = float(np.trapezoid(profile.mean_sq * g * beta_n(g, n), g))
        out.append(DyadicBlockReport(n, val, t_range, nodes_per_block, angle_nodes, method))
    return out


def dyadic_block(mu: DiscreteMeasure, K_or_samples, n: int, **kwargs) -> DyadicBlockReport:
    return dyadic_blocks(mu, K_or_samples, ns=[n], **kwargs)[0]


# --------------------------------------------------------------------------
# Distance measures


@dataclass(frozen=True, eq=False)
class DistanceMeasure:
    """Pushforward of ``mu x mu`` under ``(x, y) -> ||x - y||_{K*}``."""

    distances: np.ndarray
    weights: np.ndarray
    body: str
    diagonal_excluded: bool
    excluded_mass: float

    @property
    def total_weight(self) -> float:
        return float(self.weights.sum())


def _describe(K: ConvexBody) -> str:
    if K.is_ellipse:
        return f"ellipse{K.semi_axes}@{K.angle:g}"
    return f"sampled[{K.size}]"


def distance_measure(mu: DiscreteMeasure, Kstar: ConvexBody, exclude_diagonal: bool = True) -> DistanceMeasure:
    """``nu_0``: ordered pairs of atoms weighted ``w_x w_y`` at their ``K*``-distance.

    Equal distances (bitwise) are merged.  With ``exclude_diagonal`` the pairs
    ``x = y`` are dropped and their mass ``sum w^2`` is reported.
    """
    pts, w = mu.points, mu.weights
    n = len(pts)
    d_all, w_all = [], []
    step = max(1, BLOCK // n)
    for s in range(0, n, step):
        block = pts[s : s + step]
        diff = (block[:, None, :] - pts[None, :, :]).reshape(-1, 2)
        dist = np.asarray(Kstar.gauge(diff)).reshape(len(block), n)
        ww = w[s : s + step, None] * w[None, :]
        if exclude_diagonal:
            rows = np.arange(len(block))
            keep = np.ones(dist.shape, dtype=bool)
            keep[rows, rows + s] = False
            dist, ww = dist[keep], ww[keep]
        d_all.append(dist.ravel())
        w_all.append(ww.ravel())
    d = np.concatenate(d_all)
    ww = np.concatenate(w_all)
    uniq, inv = np.unique(d, return_inverse=True)
    weights = np.bincount(inv, weights=ww, minlength=len(uniq))
    excluded = float(w @ w) if exclude_diagonal else 0.0
    return DistanceMeasure(uniq, weights, _describe(Kstar), exclude_diagonal, excluded)


def _require_positive(dm: DistanceMeasure) -> None:
    if np.any(dm.distances <= 0):
        raise ValueError("zero distance present; s^(-1/2) is undefined (exclude the diagonal)")


def nu_hat(dm: DistanceMeasure, k):
    """``2 sum_s w_s s^{-1/2} cos(2 pi (|k| s - 1/8))``; real and even in ``k``."""
    _require_positive(dm)
    kk = np.abs(np.asarray(k, dtype=float))
    amp = dm.weights * dm.distances**-0.5
    flat = kk.ravel()
    out = np.empty(flat.shape)
    step = max(1, BLOCK // len(amp))
    for s in range(0, len(flat), step):
        out[s : s + step] = 2.0 * (np.cos(TWO_PI * (flat[s : s + step, None] * dm.distances[None, :] - 0.125)) @ amp)
    out = out.reshape(kk.shape)
    return float(out) if out.ndim == 0 else out


def nu_hat_pushforward(dm: DistanceMeasure, k):
    """Transform of ``nu = e^{i pi/4} s^{-1/2} nu_0(s) + e^{-i pi/4} |s|^{-1/2} nu_0(-s)``
    evaluated directly from the atoms of ``nu_0`` (complex)."""
    _require_positive(dm)
    kk = np.asarray(k, dtype=float)
    amp = dm.weights * dm.distances**-0.5
    e = np.exp(-2j * math.pi * kk.ravel()[:, None] * dm.distances[None, :])
    rot = np.exp(0.25j * math.pi)
    out = (rot * e + np.conj(rot) * np.conj(e)) @ amp
    out = out.reshape(kk.shape)
    return complex(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class NuConsistencyReport:
    """``r(k) = |nu_hat(k) - |k|^{1/2} S_K(k)|`` on a grid, with its envelope fit."""

    k: np.ndarray
    nu: np.ndarray
    average: np.ndarray
    residual: np.ndarray
    fit: ExponentFit
    alpha: float
    energy: float
    constant: float  # max r(k) / (k^{1/2 - alpha} I_alpha)

    @property
    def bound_exponent(self) -> float:
        return 0.5 - self.alpha


def nu_hat_consistency(mu: DiscreteMeasure, K: ConvexBody, k_grid, nodes: int | None = 4096,
                       alpha: float | None = None, exclude_diagonal: bool = True,
                       bins_per_octave: int = 4) -> NuConsistencyReport:
    """Compare ``nu_hat`` built on ``K*`` with ``|k|^{1/2}`` times the boundary
    average over ``boundary K``.

    The diagonal is excluded on both sides by default: ``nu_0`` cannot carry
    it (``s^{-1/2}``), and for an atomic measure it contributes
    ``|k|^{1/2} perimeter sum w^2`` to the average, growing without bound.
    """
    k = np.asarray(k_grid, dtype=float)
    mu.require_frequency(k)
    alpha = mu.alpha if alpha is None else alpha
    dm = distance_measure(mu, dual_body(K), exclude_diagonal=True)
    nu = np.asarray(nu_hat(dm, k))
    avg = np.asarray(boundary_average(mu, np.abs(k), K, nodes, exclude_diagonal))
    res = np.abs(nu - np.sqrt(np.abs(k)) * avg)
    energy = energy_integral(mu, alpha)
    order = np.argsort(np.abs(k))
    ex, ey = upper_envelope(np.abs(k)[order], res[order], bins_per_octave)
    fit = fit_exponent(ex, ey)
    const = float((res / (np.abs(k) ** (0.5 - alpha) * energy)).max())
    return NuConsistencyReport(k, nu, avg, res, fit, alpha, energy, const)
