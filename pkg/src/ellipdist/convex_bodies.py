"""Ellipses, sampled convex curves, their norms, support functions and duals.

Two descriptions of an ellipse are used and must not be confused:

* :class:`Ellipse` ``(a1, a2, phi)`` parameterises a *norm*,
  ``||x||_{a,phi} = |D_a R_phi x|`` with ``R_phi`` the counter-clockwise
  rotation by ``phi`` and ``D_a = diag(a1, a2)``.
* :class:`ConvexBody` is purely geometric: semi-axes plus a rotation angle, or
  boundary samples.

:func:`unit_ball` and :func:`circle_image` are the only places where one is
converted into the other.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.stats import qmc

from .errors import DegenerateBodyError, ResolutionError

TWO_PI = 2.0 * math.pi
MIN_SAMPLED_NODES = 64


def rotation(phi: float) -> np.ndarray:
    """Counter-clockwise rotation matrix ``((cos, -sin), (sin, cos))``."""
    c, s = math.cos(phi), math.sin(phi)
    return np.array([[c, -s], [s, c]])


def _as_points(x) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.shape[-1] != 2:
        raise ValueError(f"expected planar vectors with trailing dimension 2, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("non-finite coordinates")
    return arr


def _scalar_or_array(values: np.ndarray):
    return float(values) if np.ndim(values) == 0 else values


def rational_sqrt(q: Fraction) -> Fraction | None:
    """Exact square root of a nonnegative rational, or None if irrational."""
    if q < 0:
        return None
    num, den = math.isqrt(q.numerator), math.isqrt(q.denominator)
    if num * num == q.numerator and den * den == q.denominator:
        return Fraction(num, den)
    return None


@dataclass(frozen=True)
class RationalParams:
    """Exact data of an ellipse norm: squared dilations and a rational rotation."""

    a1_sq: Fraction
    a2_sq: Fraction
    cos: Fraction
    sin: Fraction

    def __post_init__(self):
        for name in ("a1_sq", "a2_sq", "cos", "sin"):
            object.__setattr__(self, name, Fraction(getattr(self, name)))
        if self.a1_sq <= 0 or self.a2_sq <= 0:
            raise ValueError("squared dilations must be positive")
        if self.cos * self.cos + self.sin * self.sin != 1:
            raise ValueError("cos^2 + sin^2 must equal 1 exactly")

    def quadratic_form(self) -> tuple[Fraction, Fraction, Fraction]:
        """Coefficients ``(A, B, C)`` with ``||x||^2 = A x1^2 + 2B x1 x2 + C x2^2``."""
        c, s = self.cos, self.sin
        A = self.a1_sq * c * c + self.a2_sq * s * s
        B = c * s * (self.a2_sq - self.a1_sq)
        C = self.a1_sq * s * s + self.a2_sq * c * c
        return A, B, C


@dataclass(frozen=True)
class Ellipse:
    """Norm parameters ``(a1, a2, phi)``; see the module docstring.

    ``exact`` optionally carries rational data used by exact distance counting.
    """

    a1: float
    a2: float
    phi: float = 0.0
    exact: RationalParams | None = field(default=None, compare=False)

    def __post_init__(self):
        for name in ("a1", "a2", "phi"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, value)
        if self.a1 <= 0 or self.a2 <= 0:
            raise ValueError("dilation factors must be positive")
        if self.exact is not None:
            ex = self.exact
            ok = (
                math.isclose(self.a1**2, float(ex.a1_sq), rel_tol=1e-12)
                and math.isclose(self.a2**2, float(ex.a2_sq), rel_tol=1e-12)
                and abs(math.cos(self.phi) - float(ex.cos)) < 1e-12
                and abs(math.sin(self.phi) - float(ex.sin)) < 1e-12
            )
            if not ok:
                raise ValueError("exact parameters disagree with the float parameters")

    @classmethod
    def euclidean(cls) -> Ellipse:
        return cls.pythagorean(1, 1)

    @classmethod
    def pythagorean(cls, a1_sq, a2_sq, m: int = 1, n: int = 0) -> Ellipse:
        """Ellipse with rational ``a1^2, a2^2`` and rotation
        ``(cos, sin) = ((m^2 - n^2)/(m^2 + n^2), 2mn/(m^2 + n^2))``."""
        if m == 0 and n == 0:
            raise ValueError("m and n cannot both vanish")
        a1_sq, a2_sq = Fraction(a1_sq), Fraction(a2_sq)
        h = m * m + n * n
        cos, sin = Fraction(m * m - n * n, h), Fraction(2 * m * n, h)
        exact = RationalParams(a1_sq, a2_sq, cos, sin)
        phi = math.atan2(float(sin), float(cos)) % TWO_PI
        return cls(math.sqrt(a1_sq), math.sqrt(a2_sq), phi, exact)

    @property
    def matrix(self) -> np.ndarray:
        """``D_a R_phi``."""
        return np.diag([self.a1, self.a2]) @ rotation(self.phi)

    def norm(self, x):
        return ellipse_norm(x, self)

    def to_text(self) -> str:
        return f"{self.a1!r},{self.a2!r},{self.phi!r}"

    @classmethod
    def from_text(cls, text: str) -> Ellipse:
        parts = [p.strip() for p in text.split(",")]
        if len(parts) != 3:
            raise ValueError(f"expected 'a1,a2,phi', got {text!r}")
        return cls(*(float(p) for p in parts))


def ellipse_norm(x, K: Ellipse):
    """``||x||_{a,phi}``, the Euclidean length of ``D_a R_phi x``.

    Accepts a single vector or an array of shape ``(..., 2)``.
    """
    pts = _as_points(x)
    c, s = math.cos(K.phi), math.sin(K.phi)
    u = K.a1 * (c * pts[..., 0] - s * pts[..., 1])
    v = K.a2 * (s * pts[..., 0] + c * pts[..., 1])
    return _scalar_or_array(np.hypot(u, v))


def map_circle_point(omega, K: Ellipse):
    """Send unit vectors ``omega`` to ``R_phi^{-1} D_a omega``."""
    om = _as_points(omega)
    if np.any(np.abs(np.hypot(om[..., 0], om[..., 1]) - 1.0) > 1e-12):
        raise ValueError("omega must be a unit vector")
    scaled = om * np.array([K.a1, K.a2])
    return scaled @ rotation(K.phi)  # row-vector form of R^T y


def inverse_circle_point(p, K: Ellipse):
    """Inverse of :func:`map_circle_point`: ``D_a^{-1} R_phi p``."""
    pts = _as_points(p)
    rotated = pts @ rotation(K.phi).T
    return rotated / np.array([K.a1, K.a2])


# --------------------------------------------------------------------------
# Geometric convex bodies


@dataclass(frozen=True, eq=False)
class ConvexBody:
    """Symmetric convex body: an ellipse given by semi-axes, or boundary samples.

    Sampled boundaries are stored counter-clockwise at uniformly spaced values
    of a periodic parameter on ``[0, 2 pi)``.
    """

    kind: str
    semi_axes: tuple[float, float] | None = None
    angle: float = 0.0
    points: np.ndarray | None = None

    @classmethod
    def ellipse(cls, b1: float, b2: float, angle: float = 0.0) -> ConvexBody:
        if not (b1 > 0 and b2 > 0 and math.isfinite(b1) and math.isfinite(b2)):
            raise DegenerateBodyError("semi-axes must be positive and finite")
        return cls("ellipse", (float(b1), float(b2)), float(angle))

    @classmethod
    def circle(cls, radius: float = 1.0) -> ConvexBody:
        return cls.ellipse(radius, radius)

    @classmethod
    def sampled(cls, points, validate: bool = True, **kwargs) -> ConvexBody:
        pts = np.array(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError("points must have shape (N, 2)")
        pts.setflags(write=False)
        body = cls("sampled", None, 0.0, pts)
        if validate:
            body.validate(**kwargs)
        return body

    @classmethod
    def from_radial(cls, radial, nodes: int, validate: bool = True, **kwargs) -> ConvexBody:
        """Sample ``r(theta) (cos theta, sin theta)`` at uniform polar angles."""
        theta = TWO_PI * np.arange(nodes) / nodes
        r = np.asarray(radial(theta), dtype=float)
        return cls.sampled(np.column_stack([r * np.cos(theta), r * np.sin(theta)]), validate, **kwargs)

    @property
    def is_ellipse(self) -> bool:
        return self.kind == "ellipse"

    @property
    def size(self) -> int:
        return 0 if self.points is None else len(self.points)

    # -- boundary ----------------------------------------------------------

    def boundary(self, nodes: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Boundary points and their parameter derivatives at uniform nodes."""
        if self.is_ellipse:
            if nodes is None:
                raise ValueError("nodes required for ellipse boundaries")
            theta = TWO_PI * np.arange(nodes) / nodes
            b1, b2 = self.semi_axes
            R = rotation(self.angle)
            local = np.column_stack([b1 * np.cos(theta), b2 * np.sin(theta)])
            dlocal = np.column_stack([-b1 * np.sin(theta), b2 * np.cos(theta)])
            return local @ R.T, dlocal @ R.T
        if nodes is not None and nodes != self.size:
            raise ValueError(f"sampled body has {self.size} nodes, cannot evaluate at {nodes}")
        n = self.size
        freq = np.fft.fftfreq(n, d=1.0 / n)
        if n % 2 == 0:
            freq[n // 2] = 0.0
        deriv = np.real(np.fft.ifft(1j * freq[:, None] * np.fft.fft(self.points, axis=0), axis=0))
        return self.points, deriv

    def perimeter(self, nodes: int = 4096) -> float:
        _, d = self.boundary(nodes if self.is_ellipse else None)
        return float(np.hypot(d[:, 0], d[:, 1]).sum() * TWO_PI / len(d))

    # -- support and gauge -------------------------------------------------

    def _to_local(self, x: np.ndarray) -> np.ndarray:
        return x @ rotation(self.angle)

    def support(self, x):
        """``sup_{y in boundary} x . y``."""
        pts = _as_points(x)
        if self.is_ellipse:
            b1, b2 = self.semi_axes
            loc = self._to_local(pts)
            return _scalar_or_array(np.hypot(b1 * loc[..., 0], b2 * loc[..., 1]))
        flat = pts.reshape(-1, 2)
        out = self._sampled_support(flat)
        return _scalar_or_array(out.reshape(pts.shape[:-1]))

    def _vertex_normals(self) -> np.ndarray:
        p = self.points
        edges = np.roll(p, -1, axis=0) - p
        nu = np.unwrap(np.arctan2(-edges[:, 0], edges[:, 1]))
        return nu

    def _sampled_support(self, x: np.ndarray) -> np.ndarray:
        p = self.points
        n = len(p)
        nu = self._vertex_normals()
        psi = np.arctan2(x[:, 1], x[:, 0])
        psi = nu[0] + np.mod(psi - nu[0], TWO_PI)
        idx = np.searchsorted(nu, psi, side="right") % n
        f0 = np.einsum("ij,ij->i", x, p[idx])
        fm = np.einsum("ij,ij->i", x, p[(idx - 1) % n])
        fp = np.einsum("ij,ij->i", x, p[(idx + 1) % n])
        curv = fm - 2.0 * f0 + fp
        with np.errstate(divide="ignore", invalid="ignore"):
            delta = np.where(curv < 0, (fm - fp) / (2.0 * curv), 0.0)
        refined = f0 - 0.25 * (fm - fp) * delta
        out = np.maximum(np.where(np.abs(delta) <= 1.0, refined, f0), f0)
        out[np.all(x == 0, axis=1)] = 0.0
        return out

    def radial(self, theta):
        """Distance from the origin to the boundary along polar angle ``theta``."""
        th = np.asarray(theta, dtype=float)
        if self.is_ellipse:
            b1, b2 = self.semi_axes
            loc = th - self.angle
            return _scalar_or_array(1.0 / np.hypot(np.cos(loc) / b1, np.sin(loc) / b2))
        p = self.points
        ang = np.unwrap(np.arctan2(p[:, 1], p[:, 0]))
        q = ang[0] + np.mod(th - ang[0], TWO_PI)
        i = (np.searchsorted(ang, q, side="right") - 1) % len(p)
        a, b = p[i], p[(i + 1) % len(p)]
        u = np.stack([np.cos(q), np.sin(q)], axis=-1)
        # ray s*u meets segment a + lam (b - a): s = cross(a, b - a) / cross(u, b - a)
        e = b - a
        num = a[..., 0] * e[..., 1] - a[..., 1] * e[..., 0]
        den = u[..., 0] * e[..., 1] - u[..., 1] * e[..., 0]
        return _scalar_or_array(num / den)

    def gauge(self, x):
        """Minkowski functional ``||x||_K`` of this body."""
        pts = _as_points(x)
        if self.is_ellipse:
            b1, b2 = self.semi_axes
            loc = self._to_local(pts)
            return _scalar_or_array(np.hypot(loc[..., 0] / b1, loc[..., 1] / b2))
        r = np.hypot(pts[..., 0], pts[..., 1])
        rad = np.asarray(self.radial(np.arctan2(pts[..., 1], pts[..., 0])))
        return _scalar_or_array(np.where(r > 0, r / rad, 0.0))

    # -- curvature ---------------------------------------------------------

    def curvature_samples(self) -> np.ndarray:
        """Curvature at every stored sample by centred second differences."""
        if self.is_ellipse:
            raise ValueError("curvature_samples applies to sampled bodies")
        n = self.size
        if n < MIN_SAMPLED_NODES:
            raise ResolutionError(f"need at least {MIN_SAMPLED_NODES} samples, have {n}")
        h = TWO_PI / n
        p = self.points
        nxt, prv = np.roll(p, -1, axis=0), np.roll(p, 1, axis=0)
        d1 = (nxt - prv) / (2 * h)
        d2 = (nxt - 2 * p + prv) / h**2
        cross = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        return cross / np.hypot(d1[:, 0], d1[:, 1]) ** 3

    def curvature(self, theta):
        """Signed curvature at boundary parameter ``theta`` (positive for convex)."""
        th = np.asarray(theta, dtype=float)
        if self.is_ellipse:
            b1, b2 = self.semi_axes
            return _scalar_or_array(b1 * b2 / (b1**2 * np.sin(th) ** 2 + b2**2 * np.cos(th) ** 2) ** 1.5)
        kappa = self.curvature_samples()
        n = self.size
        pos = np.mod(th, TWO_PI) * n / TWO_PI
        i = np.floor(pos).astype(int) % n
        frac = pos - np.floor(pos)
        return _scalar_or_array((1 - frac) * kappa[i] + frac * kappa[(i + 1) % n])

    def normal_curvature(self, x):
        """Curvature at the boundary point whose outward normal is parallel to ``x``."""
        pts = _as_points(x)
        if self.is_ellipse:
            b1, b2 = self.semi_axes
            loc = self._to_local(pts)
            loc = loc / np.hypot(loc[..., 0], loc[..., 1])[..., None]
            h = np.hypot(b1 * loc[..., 0], b2 * loc[..., 1])
            return _scalar_or_array(h**3 / (b1 * b2) ** 2)
        flat = pts.reshape(-1, 2)
        nu = self._vertex_normals()
        psi = nu[0] + np.mod(np.arctan2(flat[:, 1], flat[:, 0]) - nu[0], TWO_PI)
        idx = np.searchsorted(nu, psi, side="right") % self.size
        return _scalar_or_array(self.curvature_samples()[idx].reshape(pts.shape[:-1]))

    # -- duality and validity ---------------------------------------------

    def dual(self) -> ConvexBody:
        return dual_body(self)

    def validate(self, min_curvature_ratio: float = 1e-3, symmetry_tol: float = 1e-9) -> None:
        """Raise :class:`DegenerateBodyError` unless closed, convex, symmetric and curved."""
        if self.is_ellipse:
            return
        n = self.size
        if n < MIN_SAMPLED_NODES:
            raise ResolutionError(f"need at least {MIN_SAMPLED_NODES} samples, have {n}")
        if n % 2:
            raise DegenerateBodyError("symmetric sampling needs an even node count")
        p = self.points
        if not np.all(np.isfinite(p)):
            raise DegenerateBodyError("non-finite boundary sample")
        scale = float(np.abs(p).max())
        if scale == 0:
            raise DegenerateBodyError("boundary collapses to the origin")
        if np.abs(np.roll(p, n // 2, axis=0) + p).max() > symmetry_tol * scale:
            raise DegenerateBodyError("boundary is not symmetric about the origin")
        e = np.roll(p, -1, axis=0) - p
        e_next = np.roll(e, -1, axis=0)
        cross = e[:, 0] * e_next[:, 1] - e[:, 1] * e_next[:, 0]
        if np.any(cross <= 0):
            raise DegenerateBodyError("boundary is not strictly convex counter-clockwise")
        turning = np.arctan2(cross, np.einsum("ij,ij->i", e, e_next)).sum()
        if abs(turning - TWO_PI) > 1e-6:
            raise DegenerateBodyError("boundary winds more than once")
        kappa = self.curvature_samples()
        if kappa.min() <= min_curvature_ratio * np.median(kappa):
            raise DegenerateBodyError(
                f"curvature nearly vanishes (min {kappa.min():.3g}, median {np.median(kappa):.3g})"
            )

    # -- serialisation -----------------------------------------------------

    def to_csv(self, path, nodes: int = 1024) -> None:
        pts, _ = self.boundary(nodes if self.is_ellipse else None)
        theta = TWO_PI * np.arange(len(pts)) / len(pts)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["theta", "x", "y"])
            for th, (x, y) in zip(theta, pts):
                w.writerow([repr(float(th)), repr(float(x)), repr(float(y))])

    @classmethod
    def read_csv(cls, path, validate: bool = True) -> ConvexBody:
        with open(Path(path), newline="") as fh:
            rows = list(csv.DictReader(fh))
        return cls.sampled([(float(r["x"]), float(r["y"])) for r in rows], validate)


def support_function(K: ConvexBody, x):
    """``rho*(x) = sup_{y in boundary K} x . y``."""
    return K.support(x)


def dual_body(K: ConvexBody) -> ConvexBody:
    """``K* = {xi : sup_{x in K} x . xi <= 1}``.

    Ellipses dualise in closed form (reciprocal semi-axes, same rotation).
    Sampled bodies are resampled at ``K.size`` uniform polar angles with radial
    function ``1 / rho*_K``.
    """
    if K.is_ellipse:
        b1, b2 = K.semi_axes
        return ConvexBody.ellipse(1.0 / b1, 1.0 / b2, K.angle)
    K.validate()
    n = K.size
    theta = TWO_PI * np.arange(n) / n
    u = np.column_stack([np.cos(theta), np.sin(theta)])
    h = K._sampled_support(u)
    if np.any(h <= 0):
        raise DegenerateBodyError("origin is not interior")
    return ConvexBody.sampled(u / h[:, None])


def curvature(K: ConvexBody, theta):
    return K.curvature(theta)


def unit_ball(K: Ellipse) -> ConvexBody:
    """Unit ball of ``||.||_{a,phi}``: semi-axes ``(1/a1, 1/a2)`` rotated by ``-phi``."""
    return ConvexBody.ellipse(1.0 / K.a1, 1.0 / K.a2, -K.phi)


def circle_image(K: Ellipse) -> ConvexBody:
    """Image of the unit circle under :func:`map_circle_point`.

    Its support function is ``||.||_{a,phi}``; it is the dual of :func:`unit_ball`.
    """
    return ConvexBody.ellipse(K.a1, K.a2, -K.phi)


# --------------------------------------------------------------------------
# Sampling of metrics


def random_ellipse(seed: int) -> Ellipse:
    """Uniform draw from ``[1,2] x [1,2] x [0, pi)``, deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    a1, a2 = rng.uniform(1.0, 2.0, size=2)
    phi = rng.uniform(0.0, math.pi)
    return Ellipse(a1, a2, phi)


def random_ellipses(count: int, seed: int) -> list[Ellipse]:
    rng = np.random.default_rng(seed)
    u = rng.uniform(size=(count, 3))
    return [Ellipse(1 + a, 1 + b, math.pi * c) for a, b, c in u]


def ellipse_samples(count: int, method: str = "halton", seed: int | None = None) -> list[Ellipse]:
    """``count`` metrics in ``[1,2]^2 x [0, pi)``.

    ``halton`` is the unscrambled Halton sequence with its first point
    (the Euclidean corner) skipped, so it needs no seed; ``random`` is seeded
    Monte Carlo.
    """
    if count < 1:
        raise ValueError("count must be positive")
    if method == "halton":
        engine = qmc.Halton(d=3, scramble=False)
        engine.fast_forward(1)
        u = engine.random(count)
        return [Ellipse(1 + a, 1 + b, math.pi * c) for a, b, c in u]
    if method == "random":
        if seed is None:
            raise ValueError("random sampling needs a seed")
        return random_ellipses(count, seed)
    raise ValueError(f"unknown sampling method {method!r}")


# --------------------------------------------------------------------------
# Linear transforms


@dataclass(frozen=True)
class LinearTransform:
    """2x2 matrix ``T`` with optional factorisation ``T = D_a R_phi``."""

    matrix: tuple[tuple[float, float], tuple[float, float]]
    dilation: tuple[float, float] | None = None
    angle: float | None = None
    exact: tuple[tuple[Fraction, Fraction], tuple[Fraction, Fraction]] | None = field(default=None, compare=False)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.shape != (2, 2):
            raise ValueError("matrix must be 2x2")
        if np.linalg.det(m) <= 0:
            raise ValueError("determinant must be positive")
        if self.dilation is not None and self.angle is not None:
            recomposed = np.diag(self.dilation) @ rotation(self.angle)
            if np.abs(recomposed - m).max() > 1e-12:
                raise ValueError("factored form does not recompose to the matrix")

    @property
    def array(self) -> np.ndarray:
        return np.array(self.matrix, dtype=float)

    def apply(self, x):
        return _as_points(x) @ self.array.T

    def apply_exact(self, points):
        if self.exact is None:
            raise ValueError("transform has no exact form")
        (p, q), (r, s) = self.exact
        return [(p * x + q * y, r * x + s * y) for x, y in points]


def transform_from_ellipse(K: Ellipse) -> LinearTransform:
    """``T = D_a R_phi``, so that ``|T x| = ||x||_{a,phi}``."""
    m = K.matrix
    exact = None
    if K.exact is not None:
        a1, a2 = rational_sqrt(K.exact.a1_sq), rational_sqrt(K.exact.a2_sq)
        if a1 is not None and a2 is not None:
            c, s = K.exact.cos, K.exact.sin
            exact = ((a1 * c, -a1 * s), (a2 * s, a2 * c))
    return LinearTransform(
        ((float(m[0, 0]), float(m[0, 1])), (float(m[1, 0]), float(m[1, 1]))),
        (K.a1, K.a2),
        K.phi,
        exact,
    )
