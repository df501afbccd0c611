"""Smooth convex bodies with closed-form support, normal map and curvature.

Every body is an immutable value.  Geometric queries are vectorised: a
direction argument of shape ``(n,)`` gives scalar results, an array of shape
``(m, n)`` gives arrays of length ``m``.

Mean curvature is normalised as (sum of principal curvatures)/(n-1), so the
unit sphere has mean curvature 1 in every dimension.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import ContractViolation, InvalidBody

UNIT_TOL = 1e-12
CURVE_GRID = 4096


@dataclass(frozen=True)
class BoundaryPoint:
    """A boundary location with its outer normal and curvature data.

    Fields are scalars/1-d vectors for a single point, or stacked arrays
    (leading axis = point index) for a batch.
    """

    x: np.ndarray
    u: np.ndarray
    kappa: np.ndarray
    mean_curv: np.ndarray
    support: np.ndarray

    def __len__(self):
        return 1 if np.ndim(self.kappa) == 0 else len(self.kappa)


@dataclass(frozen=True)
class ValidationReport:
    valid: bool
    min_curvature: float
    min_support: float
    failures: list = field(default_factory=list)

    def raise_if_invalid(self):
        if not self.valid:
            raise InvalidBody("body is not of class C^2_+ with the origin inside: "
                              + "; ".join(self.failures[:5]), self.failures)
        return self


def _num(x):
    """Shortest round-tripping decimal, without a trailing ``.0``."""
    return np.format_float_positional(float(x), trim="-")


def as_directions(u, dim):
    """Validate unit direction(s) and return a 2-d array plus a 'single' flag."""
    arr = np.asarray(u, dtype=float)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    if arr.shape[1] != dim:
        raise ContractViolation(f"direction has dimension {arr.shape[1]}, body has {dim}")
    sq = np.einsum("ij,ij->i", arr, arr)
    if np.any(np.abs(sq - 1.0) > 2 * UNIT_TOL):
        raise ContractViolation("direction is not a unit vector")
    return arr, single


def _tangent_basis(u):
    """Orthonormal basis (columns) of the hyperplane orthogonal to unit ``u``."""
    _, _, vh = np.linalg.svd(u[None, :])
    return vh[1:].T


def _unpack(single, *arrays):
    if single:
        return tuple(a[0] for a in arrays)
    return arrays


class ConvexBody:
    """Common interface.  Subclasses implement the ``_`` batch methods."""

    dim: int

    def support(self, u):
        arr, single = as_directions(u, self.dim)
        h = self._support(arr)
        return h[0] if single else h

    def boundary(self, u):
        arr, single = as_directions(u, self.dim)
        x, n, k, H, h = self._boundary(arr)
        return BoundaryPoint(*_unpack(single, x, n, k, H, h))

    def radial(self, omega):
        """Radial function and outer normal: ``rho(w) w`` is on the boundary."""
        arr, single = as_directions(omega, self.dim)
        rho, normal = self._radial(arr)
        return _unpack(single, rho, normal)

    def contains(self, points, scale=1.0):
        if scale <= 0:
            raise ContractViolation("scale must be positive")
        pts = np.asarray(points, dtype=float)
        single = pts.ndim == 1
        out = self._contains(np.atleast_2d(pts), float(scale))
        return bool(out[0]) if single else out

    def scaled(self, lam):
        raise NotImplementedError

    def principal_curvatures(self, u):
        raise NotImplementedError

    def to_spec(self):
        raise NotImplementedError


@dataclass(frozen=True)
class Ball(ConvexBody):
    radius: float = 1.0
    dim: int = 3

    def __post_init__(self):
        if not self.radius > 0:
            raise ContractViolation("ball radius must be positive")
        if self.dim < 2:
            raise ContractViolation("dimension must be at least 2")

    def _support(self, u):
        return np.full(len(u), self.radius)

    def _boundary(self, u):
        m = len(u)
        r = self.radius
        k = np.full(m, r ** -(self.dim - 1))
        return r * u, u.copy(), k, np.full(m, 1.0 / r), np.full(m, r)

    def _radial(self, w):
        return np.full(len(w), self.radius), w.copy()

    def _contains(self, pts, scale):
        r = scale * self.radius
        return np.einsum("ij,ij->i", pts, pts) <= r * r * (1 + 1e-12)

    def scaled(self, lam):
        if not lam > 0:
            raise ContractViolation("scale factor must be positive")
        return Ball(self.radius * lam, self.dim)

    def principal_curvatures(self, u):
        as_directions(u, self.dim)
        return np.full(self.dim - 1, 1.0 / self.radius)

    def to_spec(self):
        return f"ball:r={_num(self.radius)},n={self.dim}"


@dataclass(frozen=True)
class Ellipsoid(ConvexBody):
    semi_axes: tuple

    def __post_init__(self):
        axes = tuple(float(a) for a in self.semi_axes)
        if len(axes) < 2:
            raise ContractViolation("an ellipsoid needs at least two semi-axes")
        if not all(a > 0 for a in axes):
            raise ContractViolation("semi-axes must be positive")
        object.__setattr__(self, "semi_axes", axes)

    @property
    def dim(self):
        return len(self.semi_axes)

    @cached_property
    def _a(self):
        return np.array(self.semi_axes)

    def _support(self, u):
        return np.sqrt((u * u) @ (self._a ** 2))

    def _boundary(self, u):
        a2 = self._a ** 2
        h = self._support(u)
        x = u * a2 / h[:, None]
        # x_i / a_i^2 = u_i / h, hence sum x_i^2/a_i^4 = 1/h^2
        kappa = h ** (self.dim + 1) / np.prod(a2)
        trace = np.sum(1.0 / a2) - (u * u) @ (1.0 / a2)
        mean = h * trace / (self.dim - 1)
        return x, u.copy(), kappa, mean, h

    def _radial(self, w):
        a2 = self._a ** 2
        rho = 1.0 / np.sqrt((w * w) @ (1.0 / a2))
        g = w / a2
        g /= np.linalg.norm(g, axis=1)[:, None]
        return rho, g

    def _contains(self, pts, scale):
        q = np.sum((pts / (scale * self._a)) ** 2, axis=1)
        return q <= 1 + 1e-12

    def scaled(self, lam):
        if not lam > 0:
            raise ContractViolation("scale factor must be positive")
        return Ellipsoid(tuple(a * lam for a in self.semi_axes))

    def principal_curvatures(self, u):
        """Eigenvalues of the Weingarten map on the tangent space at x(u).

        The shape operator of the level set ``sum x_i^2/a_i^2 = 1`` is the
        tangential part of its Hessian divided by the gradient norm, which at
        x(u) equals ``h(u) * diag(1/a^2)``.
        """
        arr, _ = as_directions(u, self.dim)
        u0 = arr[0]
        h = self._support(arr)[0]
        T = _tangent_basis(u0)
        W = h * (T.T * (1.0 / self._a ** 2)) @ T
        return np.sort(np.linalg.eigvalsh(W))

    def to_spec(self):
        names = "abcdefghijklm"
        return "ellipsoid:" + ",".join(f"{names[i]}={_num(a)}" for i, a in enumerate(self.semi_axes))


@dataclass(frozen=True)
class SupportCurve2D(ConvexBody):
    """Planar body given by a trigonometric support function

    ``h(t) = a0 + sum_k a_k cos(k t) + b_k sin(k t)``,

    where ``t`` is the angle of the outer normal.
    """

    a0: float
    harmonics: tuple = ()

    def __post_init__(self):
        harm = tuple((int(k), float(a), float(b)) for k, a, b in self.harmonics)
        if any(k < 1 for k, _, _ in harm):
            raise ContractViolation("harmonic orders must be >= 1")
        object.__setattr__(self, "harmonics", harm)
        object.__setattr__(self, "a0", float(self.a0))

    dim = 2

    @classmethod
    def from_json(cls, source):
        """Load from a JSON document ``{"a0": .., "harmonics": [[k, a_k, b_k], ..]}``."""
        if isinstance(source, (str, Path)) and Path(source).exists():
            doc = json.loads(Path(source).read_text())
        elif isinstance(source, str):
            doc = json.loads(source)
        else:
            doc = source
        return cls(doc["a0"], tuple(tuple(hk) for hk in doc.get("harmonics", [])))

    def to_dict(self):
        return {"a0": self.a0, "harmonics": [list(hk) for hk in self.harmonics]}

    def to_json(self):
        return json.dumps(self.to_dict())

    @cached_property
    def _coeffs(self):
        if not self.harmonics:
            return np.zeros(0), np.zeros(0), np.zeros(0)
        k, a, b = (np.array(c, dtype=float) for c in zip(*self.harmonics))
        return k, a, b

    def h(self, theta, deriv=0):
        """Support function (or its first/second derivative) at normal angle ``theta``."""
        theta = np.asarray(theta, dtype=float)
        k, a, b = self._coeffs
        kt = np.multiply.outer(theta, k)
        c, s = np.cos(kt), np.sin(kt)
        if deriv == 0:
            return self.a0 + c @ a + s @ b
        if deriv == 1:
            return s @ (-k * a) + c @ (k * b)
        if deriv == 2:
            return -(c @ (k * k * a) + s @ (k * k * b))
        raise ValueError("deriv must be 0, 1 or 2")

    def radius_of_curvature(self, theta):
        return self.h(theta) + self.h(theta, 2)

    def point_at(self, theta):
        theta = np.asarray(theta, dtype=float)
        h, dh = self.h(theta), self.h(theta, 1)
        c, s = np.cos(theta), np.sin(theta)
        return np.stack([h * c - dh * s, h * s + dh * c], axis=-1)

    def _support(self, u):
        return self.h(np.arctan2(u[:, 1], u[:, 0]))

    def _boundary(self, u):
        theta = np.arctan2(u[:, 1], u[:, 0])
        h = self.h(theta)
        kappa = 1.0 / self.radius_of_curvature(theta)
        return self.point_at(theta), u.copy(), kappa, kappa.copy(), h

    @cached_property
    def _polar_table(self):
        theta = np.linspace(0.0, 2 * np.pi, CURVE_GRID + 1)
        x = self.point_at(theta)
        phi = np.unwrap(np.arctan2(x[:, 1], x[:, 0]))
        return theta, phi

    def normal_angle_of_polar(self, phi):
        """Normal angle ``t`` whose boundary point x(t) has polar angle ``phi``."""
        theta_tab, phi_tab = self._polar_table
        phi = np.asarray(phi, dtype=float)
        target = phi_tab[0] + np.mod(phi - phi_tab[0], 2 * np.pi)
        t = np.interp(target, phi_tab, theta_tab)
        for _ in range(8):
            x = self.point_at(t)
            cur = np.arctan2(x[..., 1], x[..., 0])
            err = np.angle(np.exp(1j * (cur - target)))
            h = self.h(t)
            dphi = self.radius_of_curvature(t) * h / np.sum(x * x, axis=-1)
            t = t - err / dphi
        return t

    def _radial(self, w):
        t = self.normal_angle_of_polar(np.arctan2(w[:, 1], w[:, 0]))
        x = self.point_at(t)
        return np.linalg.norm(x, axis=1), np.stack([np.cos(t), np.sin(t)], axis=1)

    @cached_property
    def _grid(self):
        t = np.linspace(0.0, 2 * np.pi, CURVE_GRID, endpoint=False)
        return np.stack([np.cos(t), np.sin(t)], axis=1), self.h(t)

    def _contains(self, pts, scale):
        U, h = self._grid
        tol = 1e-9 * np.max(np.abs(h)) * scale
        out = np.empty(len(pts), dtype=bool)
        for i in range(0, len(pts), 2048):
            chunk = pts[i:i + 2048]
            out[i:i + 2048] = np.max(chunk @ U.T - scale * h, axis=1) <= tol
        return out

    def scaled(self, lam):
        if not lam > 0:
            raise ContractViolation("scale factor must be positive")
        return SupportCurve2D(self.a0 * lam, tuple((k, a * lam, b * lam) for k, a, b in self.harmonics))

    def principal_curvatures(self, u):
        arr, _ = as_directions(u, 2)
        return 1.0 / self.radius_of_curvature(np.arctan2(arr[:, 1], arr[:, 0]))

    def to_spec(self):
        return "curve2d:" + json.dumps(self.to_dict(), separators=(",", ":"))


def probe_directions(dim, count=None):
    """Deterministic, roughly uniform probe directions on the unit sphere."""
    if dim == 2:
        count = count or 8192
        t = np.linspace(0.0, 2 * np.pi, count, endpoint=False)
        return np.stack([np.cos(t), np.sin(t)], axis=1)
    count = count or 100_000
    if dim == 3:
        # Fibonacci lattice
        i = np.arange(count) + 0.5
        z = 1.0 - 2.0 * i / count
        r = np.sqrt(1.0 - z * z)
        phi = np.pi * (3.0 - math.sqrt(5.0)) * i
        return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
    g = np.random.default_rng(0x5EED).standard_normal((count, dim))
    return g / np.linalg.norm(g, axis=1)[:, None]


# -- free-function surface -------------------------------------------------

def support_function(body, u):
    return body.support(u)


def boundary_point(body, u):
    return body.boundary(u)


def contains(body, point, scale=1.0):
    return body.contains(point, scale)


def scale_body(body, lam):
    return body.scaled(lam)


def validate_body(body, probes=None):
    """Check curvature positivity and that the origin is interior.

    For support curves the condition ``h + h'' > 0`` is checked on a grid of
    at least 4096 normal angles.
    """
    failures = []
    if isinstance(body, SupportCurve2D):
        t = np.linspace(0.0, 2 * np.pi, max(CURVE_GRID, probes or 0), endpoint=False)
        rc = body.radius_of_curvature(t)
        h = body.h(t)
        for ti in t[rc <= 0][:10]:
            failures.append(f"h+h'' <= 0 at theta={ti:.6f}")
        for ti in t[h <= 0][:10]:
            failures.append(f"h <= 0 at theta={ti:.6f}")
        with np.errstate(divide="ignore"):
            kappa = np.where(rc > 0, 1.0 / np.where(rc > 0, rc, 1.0), -np.inf)
        return ValidationReport(not failures, float(np.min(kappa)), float(np.min(h)), failures)

    U = probe_directions(body.dim, probes or (8192 if body.dim == 2 else 20_000))
    bp = body.boundary(U)
    bad = ~(bp.kappa > 0)
    for u in U[bad][:10]:
        failures.append(f"kappa <= 0 at u={np.round(u, 6).tolist()}")
    for u in U[~(bp.support > 0)][:10]:
        failures.append(f"h <= 0 at u={np.round(u, 6).tolist()}")
    return ValidationReport(not failures, float(np.min(bp.kappa)), float(np.min(bp.support)), failures)


def parse_body(spec):
    """Build a body from ``ball:r=1,n=3``, ``ellipsoid:a=2,b=1`` or ``curve2d:path.json``."""
    kind, _, rest = spec.partition(":")
    kind = kind.strip().lower()
    if kind == "curve2d":
        if not rest:
            raise ContractViolation("curve2d needs a JSON path")
        body = SupportCurve2D.from_json(rest)
        validate_body(body).raise_if_invalid()
        return body
    params = {}
    for item in filter(None, rest.split(",")):
        key, eq, val = item.partition("=")
        if not eq:
            raise ContractViolation(f"malformed body parameter {item!r}")
        params[key.strip()] = val.strip()
    try:
        if kind == "ball":
            unknown = set(params) - {"r", "n"}
            if unknown:
                raise ContractViolation(f"unknown ball parameter(s): {', '.join(sorted(unknown))}")
            return Ball(float(params.get("r", 1.0)), int(params.get("n", 3)))
        if kind == "ellipsoid":
            return Ellipsoid(tuple(float(v) for v in params.values()))
    except ContractViolation:
        raise
    except ValueError as exc:
        raise ContractViolation(f"bad body parameter in {spec!r}: {exc}") from None
    raise ContractViolation(f"unknown body kind {kind!r}")
