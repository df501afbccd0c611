"""p-affine surface areas, the optimal sampling density and hull-deficit constants."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .errors import ContractViolation, NumericalFailure
from .hull import convex_hull, polytope_surface_area
from .integration import (
    DEFAULT_SEED, MC_SAMPLES, AffineWeight, Density, MonteCarloEstimate, body_volume,
    boundary_integral, make_rng, sample_boundary, sphere_area, surface_area, unit_ball_volume,
    envelope_constant,
)

EMPIRICAL_MAX_N = 5000
PILOT_TRIALS = 200


@dataclass(frozen=True)
class AffineSurfaceAreaResult:
    p: float
    value: MonteCarloEstimate


@dataclass(frozen=True)
class DeficitCoefficient:
    c_n: float
    integral: float
    product: float
    std_error: float = 0.0


def affine_exponents(p, n):
    """Exponents (of kappa, of <x,N>) in the p-affine surface area integrand."""
    if math.isinf(p):
        return 1.0, float(n)
    return p / (n + p), n * (p - 1) / (n + p)


def p_affine_surface_area(body, p, method="auto", samples=MC_SAMPLES, seed=DEFAULT_SEED):
    """``as_p(K) = int kappa^{p/(n+p)} <x,N>^{-n(p-1)/(n+p)} dH^{n-1}``.

    ``p = +-inf`` uses the limiting exponents (1, n).
    """
    n = body.dim
    if not math.isinf(p) and p == -n:
        raise ContractViolation("p = -n is excluded")
    e_kappa, e_support = affine_exponents(p, n)

    def weight(bp):
        return bp.kappa ** e_kappa / bp.support ** e_support

    est = boundary_integral(body, weight, method=method, samples=samples, seed=seed, stream=(2,))
    return AffineSurfaceAreaResult(float(p), est)


def affine_isoperimetric_ratio(body, p, method="auto", samples=MC_SAMPLES, seed=DEFAULT_SEED):
    """``[as_p(K)/as_p(B)] / [vol(K)/vol(B)]^{(n-p)/(n+p)}``; at most 1 for p >= 0.

    Returned as an estimate whose ``std_error`` is propagated from as_p.
    """
    if p < 0:
        raise ContractViolation("the affine isoperimetric inequality needs p >= 0")
    n = body.dim
    est = p_affine_surface_area(body, p, method, samples, seed).value
    exponent = -1.0 if math.isinf(p) else (n - p) / (n + p)
    denom = sphere_area(n) * (body_volume(body) / unit_ball_volume(n)) ** exponent
    return MonteCarloEstimate(est.value / denom, est.std_error / denom, est.samples, est.seed)


def fn_density(body, method="auto", samples=MC_SAMPLES, seed=DEFAULT_SEED):
    """Density ``kappa^{1/2} / (as_n(K) h^{(n-1)/2})``; it integrates to 1."""
    n = body.dim
    as_n = p_affine_surface_area(body, n, method, samples, seed).value.value
    return Density("affine", body, AffineWeight(n), as_n)


def deficit_dimension_constant(n):
    """Dimension constant c_n of the random-hull surface-area deficit.

    ``Gamma(n + 2/(n-1)) Gamma((n+1)/2)^{(n+1)/(n-1)}
    / (pi (n+1) (n-2)! Gamma((n-1)/2))``, evaluated through log-gamma.
    """
    if n < 2:
        raise ContractViolation("n must be >= 2")
    q = (n + 1) / (n - 1)
    log_c = (gammaln(n + 2 / (n - 1)) + q * gammaln((n + 1) / 2)
             - math.log(math.pi) - math.log(n + 1) - gammaln(n - 1) - gammaln((n - 1) / 2))
    return float(math.exp(log_c))


def ball_deficit_constant(n):
    """Limit of N^{2/(n-1)} (H(S^{n-1}) - E H(dP_N)) for uniform points on the unit sphere."""
    q = (n + 1) / (n - 1)
    log_c = (q * math.log(2) + (n / 2 + 1 / (n - 1)) * math.log(math.pi)
             - math.log(n + 1) - gammaln(n - 1)
             + gammaln(n + 2 / (n - 1)) - gammaln((n - 1) / 2)
             + q * (gammaln((n + 1) / 2) - gammaln(n / 2)))
    return float(math.exp(log_c))


def deficit_coefficient(body, density, method="auto", samples=MC_SAMPLES, seed=DEFAULT_SEED):
    """Asymptotic constant of the expected surface-area deficit of the random hull.

    ``product = c_n * int kappa^{1/(n-1)} f^{-2/(n-1)} H dH^{n-1}``.
    """
    n = body.dim

    def weight(bp):
        f = density.pdf(bp)
        if np.any(f <= 0):
            raise ContractViolation("density must be strictly positive")
        return bp.kappa ** (1 / (n - 1)) * f ** (-2 / (n - 1)) * bp.mean_curv

    est = boundary_integral(body, weight, method=method, samples=samples, seed=seed, stream=(3,))
    c_n = deficit_dimension_constant(n)
    return DeficitCoefficient(c_n, est.value, c_n * est.value, c_n * est.std_error)


def pilot_hull_areas(body, density, N, trials=PILOT_TRIALS, seed=DEFAULT_SEED):
    """Surface areas of ``trials`` independent random hulls of N boundary draws."""
    M = envelope_constant(body, density)
    out = np.empty(trials)
    for i in range(trials):
        rng = make_rng(seed, 1, N, i)
        pts = sample_boundary(body, density, rng, N, envelope=M).x
        out[i] = polytope_surface_area(convex_hull(pts))
    return out


def shrink_factor(body, density, N, mode="auto", pilots=PILOT_TRIALS, seed=DEFAULT_SEED,
                  coefficient=None):
    """Shrink factor c with E[H(dP_N)] = H(d((1-c)K)).

    ``asymptotic`` uses the leading-order expansion
    ``c = N^{-2/(n-1)} product / ((n-1) H(dK))``; ``empirical`` solves the
    defining equation with a pilot estimate of E[H(dP_N)].  ``auto`` picks
    empirical for N <= 5000.
    """
    n = body.dim
    if N <= n:
        raise ContractViolation("need N > n")
    if mode == "auto":
        mode = "empirical" if N <= EMPIRICAL_MAX_N else "asymptotic"
    area = surface_area(body)
    if mode == "asymptotic":
        coef = coefficient or deficit_coefficient(body, density)
        c = N ** (-2 / (n - 1)) * coef.product / ((n - 1) * area)
    elif mode == "empirical":
        mean_area = float(np.mean(pilot_hull_areas(body, density, N, pilots, seed)))
        c = 1.0 - (mean_area / area) ** (1 / (n - 1))
    else:
        raise ContractViolation(f"unknown shrink-factor mode {mode!r}")
    if not 0 < c < 1:
        raise NumericalFailure(f"shrink factor c={c:.4g} outside (0, 1); N={N} too small")
    return float(c)
