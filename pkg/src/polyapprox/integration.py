"""Boundary integrals, surface area/volume and density-weighted boundary sampling.

Integrals over the boundary are computed through the inverse Gauss map:
for a C^2_+ body,

    int_{dK} w dH^{n-1} = int_{S^{n-1}} w(x(u)) / kappa(x(u)) du,

so a uniform direction ``u`` gives an unbiased Monte Carlo estimate
``omega_n * mean(w / kappa)``.  In the plane the same integral is a periodic
trapezoid rule in the normal angle, which is spectrally accurate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .bodies import Ball, BoundaryPoint, Ellipsoid, SupportCurve2D, probe_directions
from .errors import ContractViolation, EnvelopeViolation, NumericalFailure

DEFAULT_SEED = 20240521
QUAD_NODES = 4096
MC_SAMPLES = 200_000
_CHUNK = 65_536


@dataclass(frozen=True)
class MonteCarloEstimate:
    value: float
    std_error: float
    samples: int
    seed: int

    def to_dict(self):
        return {"value": self.value, "std_error": self.std_error,
                "samples": self.samples, "seed": self.seed}


def sphere_area(n):
    """Surface area omega_n of the unit sphere S^{n-1}."""
    return 2 * math.pi ** (n / 2) / math.gamma(n / 2)


def unit_ball_volume(n):
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


# -- random streams ----------------------------------------------------------

def make_rng(seed, *stream):
    """Counter-based generator for the stream ``(seed, *stream)``.

    Streams with distinct keys are statistically independent, and a given key
    always yields the same numbers, whatever order work is scheduled in.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.Philox(ss))


def stream_seed(seed, *stream):
    """64-bit integer identifying a stream, for provenance records."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(s) for s in stream))
    lo, hi = ss.generate_state(2, np.uint32)
    return int(hi) << 32 | int(lo)


def sample_unit_sphere(rng, n, size=None):
    if n < 2:
        raise ContractViolation("sphere dimension must be >= 2")
    g = rng.standard_normal((1 if size is None else size, n))
    g /= np.sqrt(np.einsum("ij,ij->i", g, g))[:, None]
    return g[0] if size is None else g


def _summary(summands, scale, seed):
    m = len(summands)
    mean = float(np.mean(summands))
    sd = float(np.std(summands, ddof=1)) if m > 1 else 0.0
    return MonteCarloEstimate(scale * mean, scale * sd / math.sqrt(m), m, seed)


def _check_finite(vals, U):
    bad = ~np.isfinite(vals)
    if np.any(bad):
        u = U[np.argmax(bad)]
        raise NumericalFailure(f"non-finite integrand at u={np.round(u, 9).tolist()}")


def boundary_integral(body, weight, method="auto", samples=MC_SAMPLES, nodes=QUAD_NODES,
                      seed=DEFAULT_SEED, stream=(0,)):
    """Estimate ``int_{dK} weight(x) dH^{n-1}``.

    Parameters
    ----------
    body : ConvexBody
    weight : callable
        Maps a batched :class:`BoundaryPoint` to an array of weights.
    method : {"auto", "mc", "quad"}
        ``quad`` (planar bodies only) is a deterministic periodic trapezoid
        rule in the normal angle; ``auto`` picks it for n = 2 and Monte Carlo
        otherwise.

    Returns
    -------
    MonteCarloEstimate
        ``std_error`` is 0 for quadrature.
    """
    n = body.dim
    if method == "auto":
        method = "quad" if n == 2 else "mc"
    if method == "quad":
        if n != 2:
            raise ContractViolation("quadrature is only available in the plane")
        t = 2 * np.pi * np.arange(nodes) / nodes
        U = np.stack([np.cos(t), np.sin(t)], axis=1)
        bp = body.boundary(U)
        vals = np.asarray(weight(bp), dtype=float) / bp.kappa
        _check_finite(vals, U)
        return MonteCarloEstimate(float(2 * np.pi * np.mean(vals)), 0.0, nodes, 0)
    if method != "mc":
        raise ContractViolation(f"unknown integration method {method!r}")
    rng = make_rng(seed, *stream)
    parts = []
    left = samples
    while left > 0:
        k = min(left, _CHUNK)
        U = sample_unit_sphere(rng, n, k)
        bp = body.boundary(U)
        vals = np.asarray(weight(bp), dtype=float) / bp.kappa
        _check_finite(vals, U)
        parts.append(vals)
        left -= k
    return _summary(np.concatenate(parts), sphere_area(n), stream_seed(seed, *stream))


def radial_integral(body, weight, method="auto", samples=MC_SAMPLES, nodes=QUAD_NODES,
                    seed=DEFAULT_SEED, stream=(1,)):
    """Same integral as :func:`boundary_integral`, through the radial map.

    The boundary is parametrised by ``w -> rho(w) w`` with area element
    ``rho^{n-1} / <w, N>``.  This route shares no formula with the normal-map
    route, which makes the pair usable as mutual checks.
    """
    n = body.dim
    if method == "auto":
        method = "quad" if n == 2 else "mc"

    def evaluate(W):
        rho, N = body.radial(W)
        x = rho[:, None] * W
        bp = body.boundary(N)
        bp = BoundaryPoint(x, N, bp.kappa, bp.mean_curv, bp.support)
        jac = rho ** (n - 1) / np.einsum("ij,ij->i", W, N)
        vals = np.asarray(weight(bp), dtype=float) * jac
        _check_finite(vals, W)
        return vals

    if method == "quad":
        if n != 2:
            raise ContractViolation("quadrature is only available in the plane")
        t = 2 * np.pi * np.arange(nodes) / nodes
        vals = evaluate(np.stack([np.cos(t), np.sin(t)], axis=1))
        return MonteCarloEstimate(float(2 * np.pi * np.mean(vals)), 0.0, nodes, 0)
    rng = make_rng(seed, *stream)
    parts = []
    left = samples
    while left > 0:
        k = min(left, _CHUNK)
        parts.append(evaluate(sample_unit_sphere(rng, n, k)))
        left -= k
    return _summary(np.concatenate(parts), sphere_area(n), stream_seed(seed, *stream))


def _ellipsoid3_area(a, b, c):
    a, b, c = sorted((a, b, c), reverse=True)
    if math.isclose(a, c, rel_tol=1e-14):
        return 4 * math.pi * a * a
    phi = math.acos(c / a)
    m = (a * a * (b * b - c * c)) / (b * b * (a * a - c * c))
    s = math.sin(phi)
    inc_e = special.ellipeinc(phi, m)
    inc_f = special.ellipkinc(phi, m)
    return 2 * math.pi * c * c + 2 * math.pi * a * b / s * (inc_e * s * s + inc_f * (1 - s * s))


def surface_area(body, samples=MC_SAMPLES, seed=DEFAULT_SEED):
    """(n-1)-dimensional Hausdorff measure of the boundary.

    Closed forms are used for balls, planar ellipses, triaxial ellipsoids in
    R^3 and support curves (Cauchy: perimeter = 2 pi a0); other ellipsoids
    fall back to Monte Carlo.
    """
    if isinstance(body, Ball):
        return sphere_area(body.dim) * body.radius ** (body.dim - 1)
    if isinstance(body, SupportCurve2D):
        return 2 * math.pi * body.a0
    if isinstance(body, Ellipsoid):
        if body.dim == 2:
            a, b = sorted(body.semi_axes, reverse=True)
            return 4 * a * special.ellipe(1 - (b / a) ** 2)
        if body.dim == 3:
            return _ellipsoid3_area(*body.semi_axes)
    return boundary_integral(body, lambda bp: np.ones(len(bp)), samples=samples, seed=seed).value


def body_volume(body):
    if isinstance(body, Ball):
        return unit_ball_volume(body.dim) * body.radius ** body.dim
    if isinstance(body, Ellipsoid):
        return unit_ball_volume(body.dim) * math.prod(body.semi_axes)
    if isinstance(body, SupportCurve2D):
        # (1/2) int h (h + h'') dt, evaluated term by term
        return math.pi * body.a0 ** 2 + 0.5 * math.pi * sum(
            (1 - k * k) * (a * a + b * b) for k, a, b in body.harmonics)
    raise ContractViolation(f"no volume formula for {type(body).__name__}")


# -- densities on the boundary ------------------------------------------------

class UnitWeight:
    def __call__(self, bp):
        return np.ones(len(bp))


class AffineWeight:
    """Unnormalised optimal density ``kappa^{1/2} / h^{(n-1)/2}``."""

    def __init__(self, dim):
        self.dim = dim

    def __call__(self, bp):
        return np.sqrt(bp.kappa) / bp.support ** ((self.dim - 1) / 2)


class DirectionWeight:
    """Positive weight ``exp(<b, u> + u^T Q u)`` of the outer normal ``u``."""

    def __init__(self, bias, quadratic=None):
        self.bias = np.asarray(bias, dtype=float)
        n = len(self.bias)
        self.quadratic = np.zeros((n, n)) if quadratic is None else np.asarray(quadratic, dtype=float)

    @classmethod
    def from_json(cls, doc):
        return cls(doc["bias"], doc.get("quadratic"))

    def __call__(self, bp):
        u = np.atleast_2d(bp.u)
        return np.exp(u @ self.bias + np.einsum("ij,jk,ik->i", u, self.quadratic, u))


@dataclass(frozen=True)
class Density:
    """Probability density ``weight(x) / normalizer`` on the boundary of ``body``.

    ``kind`` is one of ``uniform``, ``affine`` (the optimal density built by
    :func:`polyapprox.affine.fn_density`) or ``custom``.
    """

    kind: str
    body: object
    weight: object
    normalizer: float

    def pdf(self, bp):
        return np.asarray(self.weight(bp), dtype=float) / self.normalizer


def uniform_density(body):
    return Density("uniform", body, UnitWeight(), surface_area(body))


def custom_density(body, weight, samples=MC_SAMPLES, seed=DEFAULT_SEED):
    """Normalise a positive weight (function of a batched BoundaryPoint)."""
    z = boundary_integral(body, weight, samples=samples, seed=seed, stream=(7,))
    if not z.value > 0:
        raise NumericalFailure("custom weight has non-positive integral")
    return Density("custom", body, weight, z.value)


def envelope_constant(body, density, safety=1.1):
    """``safety * max f/kappa`` over a deterministic probe grid."""
    bp = body.boundary(probe_directions(body.dim))
    return safety * float(np.max(density.pdf(bp) / bp.kappa))


def sample_boundary(body, density, rng, size=None, envelope=None):
    """Exact draws from the density on the boundary by rejection.

    Proposals ``x(u)`` with ``u`` uniform on the sphere have boundary density
    ``kappa / omega_n``; a proposal is kept with probability
    ``f / (M kappa)``.

    Raises
    ------
    EnvelopeViolation
        If some proposal has ``f / kappa > M``, i.e. the probe grid missed
        the supremum.
    """
    n = body.dim
    M = envelope_constant(body, density) if envelope is None else envelope
    want = 1 if size is None else int(size)
    accept_rate = 1.0 / (M * sphere_area(n))
    xs, us, ks, hs, ss = [], [], [], [], []
    got = 0
    while got < want:
        batch = int((want - got) / accept_rate * 1.2) + 64
        U = sample_unit_sphere(rng, n, batch)
        bp = body.boundary(U)
        ratio = density.pdf(bp) / bp.kappa
        if np.any(ratio > M):
            raise EnvelopeViolation(
                f"f/kappa = {ratio.max():.6g} exceeds envelope {M:.6g}")
        keep = rng.random(batch) * M < ratio
        xs.append(bp.x[keep])
        us.append(bp.u[keep])
        ks.append(bp.kappa[keep])
        hs.append(bp.mean_curv[keep])
        ss.append(bp.support[keep])
        got += int(keep.sum())
    out = BoundaryPoint(*(np.concatenate(a)[:want] for a in (xs, us, ks, hs, ss)))
    if size is None:
        return BoundaryPoint(out.x[0], out.u[0], out.kappa[0], out.mean_curv[0], out.support[0])
    return out
