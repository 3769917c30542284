"""Fourier transforms of atomic measures and of arc length on convex curves.

The forward kernel is ``exp(-2 pi i x . xi)`` throughout.  ``sigma_hat_t(x)``
means ``sigma_hat(t x)`` for arc-length measure ``sigma`` on the unit-scale
boundary, so that on the unit circle ``sigma_hat_t(x) = 2 pi J0(2 pi t |x|)``.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .convex_bodies import ConvexBody, _as_points
from .errors import ConvergenceError, DegenerateBodyError
from .measures import DiscreteMeasure
from .output import emit_plotdata

TWO_PI = 2.0 * math.pi
# complex entries evaluated per block; bounds peak memory at ~64 MB
BLOCK = 1 << 22


@dataclass(frozen=True, eq=False)
class AverageSeries:
    """Sampled ``t -> S(t)`` together with what it was computed from."""

    grid: np.ndarray
    values: np.ndarray
    body: str = ""
    measure: str = ""

    def __post_init__(self):
        g = np.array(self.grid, dtype=float)
        v = np.array(self.values, dtype=float)
        if g.shape != v.shape or g.ndim != 1:
            raise ValueError("grid and values must be 1-d arrays of equal length")
        if np.any(np.diff(g) <= 0):
            raise ValueError("grid must be strictly increasing")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValueError("values must be finite and nonnegative")
        g.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return len(self.grid)

    def to_csv(self, path, abscissa: str = "t", ordinate: str = "value") -> None:
        emit_plotdata((self.grid, self.values), path, abscissa, ordinate,
                      note=f"body={self.body} measure={self.measure}")


@dataclass(frozen=True)
class ExponentFit:
    """Least-squares line through ``(log t, log value)``."""

    slope: float
    intercept: float
    r_squared: float
    range: tuple[float, float]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["range"] = list(self.range)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def fit_exponent(series, values=None, range: tuple[float, float] | None = None) -> ExponentFit:
    """Fit ``value ~ exp(intercept) t^slope`` on log-log axes.

    ``series`` is an :class:`AverageSeries` or a grid paired with ``values``.
    """
    if isinstance(series, AverageSeries):
        grid, vals = series.grid, series.values
    else:
        grid, vals = np.asarray(series, dtype=float), np.asarray(values, dtype=float)
    if range is not None:
        keep = (grid >= range[0]) & (grid <= range[1])
        grid, vals = grid[keep], vals[keep]
    if len(grid) < 3:
        raise ValueError("need at least 3 points to fit an exponent")
    if np.any(vals <= 0) or np.any(grid <= 0):
        raise ValueError("log-log fit needs positive abscissae and values")
    x, y = np.log(grid), np.log(vals)
    A = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (slope * x + intercept)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    ss_res = float((resid**2).sum())
    r2 = 1.0 if ss_tot <= 1e-300 else max(0.0, 1.0 - ss_res / ss_tot)
    if ss_tot <= 1e-300:
        slope = 0.0
    return ExponentFit(float(slope), float(intercept), r2, (float(grid.min()), float(grid.max())))


def upper_envelope(grid, values, bins_per_octave: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Largest value in each geometric bin of width ``1/bins_per_octave`` octaves.

    Oscillatory quantities are compared with power laws through this envelope;
    raw samples fall into zeros of the oscillation.  Bins are anchored at the
    first grid point; a trailing bin narrower than half a bin is dropped.
    """
    g = np.asarray(grid, dtype=float)
    v = np.asarray(values, dtype=float)
    pos = np.log2(g / g[0]) * bins_per_octave
    idx = np.floor(pos + 1e-9).astype(int)
    last_full = np.floor(pos[-1] + 1e-9 - 0.5)
    xs, ys = [], []
    for b in np.unique(idx):
        if b > last_full and b > 0:
            continue
        m = idx == b
        k = int(np.argmax(v[m]))
        xs.append(g[m][k])
        ys.append(v[m][k])
    return np.array(xs), np.array(ys)


# --------------------------------------------------------------------------
# Transforms


def measure_ft(mu: DiscreteMeasure, xi):
    """``mu_hat(xi) = sum_j w_j exp(-2 pi i x_j . xi)`` for one or many ``xi``."""
    q = _as_points(xi)
    flat = q.reshape(-1, 2)
    out = np.empty(len(flat), dtype=complex)
    step = max(1, BLOCK // len(mu))
    for s in range(0, len(flat), step):
        phase = flat[s : s + step] @ mu.points.T
        out[s : s + step] = np.exp(-2j * math.pi * phase) @ mu.weights
    out = out.reshape(q.shape[:-1])
    return complex(out) if out.ndim == 0 else out


def _check_nodes(nodes: int) -> None:
    if nodes < 256 or nodes & (nodes - 1):
        raise ValueError(f"nodes must be a power of two >= 256, got {nodes}")


def boundary_quadrature(K: ConvexBody, nodes: int | None) -> tuple[np.ndarray, np.ndarray]:
    """Trapezoid nodes and arc-length weights on ``boundary K``."""
    if K.is_ellipse:
        _check_nodes(nodes)
    pts, vel = K.boundary(nodes if K.is_ellipse else None)
    weights = np.hypot(vel[:, 0], vel[:, 1]) * (TWO_PI / len(pts))
    return pts, weights


def _arc_ft(pts, weights, xi: np.ndarray) -> np.ndarray:
    out = np.empty(len(xi))
    step = max(1, BLOCK // len(pts))
    for s in range(0, len(xi), step):
        phase = xi[s : s + step] @ pts.T
        # symmetric bodies: the sine part cancels node by node
        out[s : s + step] = np.cos(TWO_PI * phase) @ weights
    return out


def arc_measure_ft(K: ConvexBody, t, x, nodes: int | None = 4096, check: bool = False, tol: float = 1e-8):
    """``sigma_hat(t x)`` for arc length on ``boundary K`` by the trapezoid rule.

    ``t`` and ``x`` broadcast (``x`` has trailing dimension 2).  Sampled bodies
    are integrated on their own samples and ignore ``nodes``.  With
    ``check=True`` the rule is repeated at ``2 nodes`` and a change above
    ``tol`` raises :class:`ConvergenceError`.
    """
    tt = np.asarray(t, dtype=float)
    if np.any(tt <= 0):
        raise ValueError("t must be positive")
    xi = _as_points(x) * tt[..., None]
    shape = xi.shape[:-1]
    flat = xi.reshape(-1, 2)
    nodes = nodes if K.is_ellipse else None
    pts, w = boundary_quadrature(K, nodes)
    val = _arc_ft(pts, w, flat)
    if check and K.is_ellipse:
        val2 = _arc_ft(*boundary_quadrature(K, 2 * nodes), flat)
        delta = float(np.abs(val2 - val).max())
        if delta > tol:
            raise ConvergenceError(f"node doubling changed sigma_hat by {delta:.3g} > {tol:g}")
    val = val.reshape(shape)
    return float(val) if val.ndim == 0 else val


def stationary_phase_approx(K: ConvexBody, t, x, amplitude: str = "support"):
    """Leading stationary-phase term of ``sigma_hat(t x)``.

    ``amplitude="support"`` gives ``2 (t rho*)^{-1/2} cos(2 pi (t rho* - 1/8))``
    with ``rho* = rho*_K(x)``.  ``amplitude="curvature"`` replaces
    ``(t rho*)^{-1/2}`` by ``(kappa t |x|)^{-1/2}`` with ``kappa`` the
    curvature where the normal is ``x``; the two agree on the circle and along
    directions where ``kappa |x| = rho*``.
    """
    tt = np.asarray(t, dtype=float)
    pts = _as_points(x)
    trho = tt * np.asarray(K.support(pts))
    if np.any(trho < 1):
        raise ValueError("stationary phase applies only where t rho*(x) >= 1")
    phase = np.cos(TWO_PI * (trho - 0.125))
    if amplitude == "support":
        amp = trho**-0.5
    elif amplitude == "curvature":
        kappa = np.asarray(K.normal_curvature(pts))
        amp = (kappa * tt * np.hypot(pts[..., 0], pts[..., 1])) ** -0.5
    else:
        raise ValueError(f"unknown amplitude {amplitude!r}")
    val = 2.0 * amp * phase
    return float(val) if np.ndim(val) == 0 else val


@dataclass(frozen=True)
class ResidualReport:
    """Stationary-phase remainder along one direction."""

    trho: np.ndarray
    exact: np.ndarray
    leading: np.ndarray
    residual: np.ndarray
    envelope_fit: ExponentFit
    constant: float


def stationary_phase_residual(K: ConvexBody, x, trho_range=(10.0, 200.0), points: int = 4000,
                              nodes: int = 8192, amplitude: str = "support",
                              bins_per_octave: int = 4) -> ResidualReport:
    """Compare quadrature with the leading term for ``t rho*(x)`` across a range.

    ``constant`` is ``max |residual| (t rho*)^{3/2}``; ``envelope_fit`` is the
    log-log fit of the binned maxima of ``|residual|``.
    """
    x = _as_points(x)
    rho = float(K.support(x))
    trho = np.geomspace(trho_range[0], trho_range[1], points)
    t = trho / rho
    exact = arc_measure_ft(K, t, np.broadcast_to(x, (points, 2)), nodes)
    lead = stationary_phase_approx(K, t, np.broadcast_to(x, (points, 2)), amplitude)
    res = np.abs(exact - lead)
    ex, ey = upper_envelope(trho, res, bins_per_octave)
    return ResidualReport(trho, exact, lead, res, fit_exponent(ex, ey), float((res * trho**1.5).max()))


def auto_nodes(K: ConvexBody, t_max: float, x_max: float = 1.0, minimum: int = 4096) -> int:
    """Power of two comfortably above the highest oscillation frequency on the boundary."""
    radius = max(K.semi_axes) if K.is_ellipse else float(np.hypot(*K.points.T).max())
    need = int(math.ceil(2.0 * TWO_PI * t_max * x_max * radius)) + 64
    n = minimum
    while n < need:
        n *= 2
    return n


def decay_envelope(K: ConvexBody, directions, t_range=(4.0, 256.0), points: int = 2048,
                   nodes: int | None = None) -> AverageSeries:
    """``max_omega |sigma_hat(t omega)|`` over the given directions on a geometric ``t`` grid.

    ``directions`` are angles or unit vectors.  Curvature must be positive;
    degenerate sampled bodies raise before any quadrature.
    """
    K.validate()
    if not K.is_ellipse and np.any(K.curvature_samples() <= 0):
        raise DegenerateBodyError("nonpositive curvature")
    dirs = np.asarray(directions, dtype=float)
    if dirs.ndim == 1:
        dirs = np.column_stack([np.cos(dirs), np.sin(dirs)])
    t = np.geomspace(t_range[0], t_range[1], points)
    if K.is_ellipse and nodes is None:
        nodes = auto_nodes(K, t_range[1])
    vals = np.abs(np.asarray(arc_measure_ft(K, t[:, None], dirs[None, :, :], nodes)))
    return AverageSeries(t, vals.max(axis=1), body="ellipse" if K.is_ellipse else "sampled")


def decay_envelope_check(K: ConvexBody, directions, t_range=(4.0, 256.0), points: int = 2048,
                         nodes: int | None = None, bins_per_octave: int = 2) -> ExponentFit:
    """Fitted slope of the binned maxima of :func:`decay_envelope` against ``t``."""
    env = decay_envelope(K, directions, t_range, points, nodes)
    ex, ey = upper_envelope(env.grid, env.values, bins_per_octave)
    return fit_exponent(ex, ey)
