"""End-to-end experiments: hull deficits, the shrunken-body construction,
scaling studies and integral-geometric identity checks."""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .affine import deficit_coefficient, fn_density, p_affine_surface_area, shrink_factor
from .bodies import Ball
from .deviation import origin_interior, surface_deviation
from .errors import ContractViolation, NumericalFailure
from .hull import convex_hull, polytope_surface_area
from .integration import (
    DEFAULT_SEED, MC_SAMPLES, MonteCarloEstimate, body_volume, boundary_integral, envelope_constant,
    make_rng, radial_integral, sample_boundary, sample_unit_sphere, sphere_area, stream_seed,
    surface_area,
)

log = logging.getLogger(__name__)

# stream tags; trial streams are (tag, N, trial, retry)
CONSTRUCTION, DEFICIT, DEVIATION, BP = 0, 3, 4, 6

SCALING_HEADER = ["n_points", "trials", "shrink_c", "mean_delta_s", "stderr", "rescaled_mean",
                  "bound_ratio_max", "seed"]
VERIFY_HEADER = ["identity", "lhs", "rhs", "rel_error", "tolerance", "pass"]
# the radial route has ~0.6% relative spread per 2e5 samples on an ellipsoid
IDENTITY_SAMPLES = 2_000_000

DEFICIT_HEADER = ["n_points", "trials", "mean_deficit", "stderr", "normalized", "target", "ratio"]


def _map(fn, jobs, workers):
    """Ordered map; results do not depend on ``workers``."""
    if workers <= 1 or len(jobs) < 2:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


def _mean_se(values):
    v = np.asarray(values, dtype=float)
    se = float(np.std(v, ddof=1) / math.sqrt(len(v))) if len(v) > 1 else 0.0
    return float(np.mean(v)), se


def _random_hull(body, density, N, seed, tag, trial, envelope):
    """Hull of N density draws; a failed hull is retried once with a fresh stream."""
    for retry in range(2):
        rng = make_rng(seed, tag, N, trial, retry)
        pts = sample_boundary(body, density, rng, N, envelope=envelope).x
        try:
            return convex_hull(pts)
        except NumericalFailure as exc:
            if retry:
                raise
            log.warning("hull failed for N=%d trial=%d (%s); retrying with a fresh seed", N, trial, exc)


# -- hull deficit -------------------------------------------------------------

def _deficit_trial(job):
    body, density, N, seed, trial, envelope, area = job
    P = _random_hull(body, density, N, seed, DEFICIT, trial, envelope)
    return area - polytope_surface_area(P)


def hull_deficit(body, density, N, trials, seed=DEFAULT_SEED, workers=1):
    """Mean of ``H(dK) - H(dP_N)`` over independent random hulls."""
    if N <= body.dim:
        raise ContractViolation("need N > n")
    if trials < 1:
        raise ContractViolation("need at least one trial")
    area = surface_area(body)
    M = envelope_constant(body, density)
    jobs = [(body, density, N, seed, i, M, area) for i in range(trials)]
    values = _map(_deficit_trial, jobs, workers)
    mean, se = _mean_se(values)
    return MonteCarloEstimate(mean, se, trials, stream_seed(seed, DEFICIT, N))


def deficit_table(body, density, schedule, trials, seed=DEFAULT_SEED, workers=1, coefficient=None):
    """Normalised deficit ``N^{2/(n-1)} * deficit`` against its asymptotic constant."""
    schedule = [int(N) for N in schedule]
    if len(schedule) < 3 or sorted(schedule) != schedule:
        raise ContractViolation("schedule must be increasing with at least 3 entries")
    n = body.dim
    target = (coefficient or deficit_coefficient(body, density)).product
    rows = []
    for N in schedule:
        est = hull_deficit(body, density, N, trials, seed, workers)
        norm = N ** (2 / (n - 1))
        rows.append({"n_points": N, "trials": trials, "mean_deficit": est.value,
                     "stderr": est.std_error, "normalized": est.value * norm,
                     "target": target, "ratio": est.value * norm / target})
    return rows


# -- construction ---------------------------------------------------------------

@dataclass
class ConstructionResult:
    n_points: int
    trials: int
    shrink_c: float
    deltas: np.ndarray
    delta_errors: np.ndarray
    bound_ratios: np.ndarray
    vertex_counts: np.ndarray
    origin_outside: int
    best_trial: int
    witness: object = field(repr=False)
    seed: int = DEFAULT_SEED

    @property
    def rescale(self):
        return (1 - self.shrink_c) ** -(self.witness.dim - 1)

    @property
    def mean_delta_s(self):
        return _mean_se(self.deltas)[0]

    @property
    def stderr(self):
        return _mean_se(self.deltas)[1]

    @property
    def rescaled(self):
        return self.deltas * self.rescale

    @property
    def rescaled_mean(self):
        return float(np.mean(self.rescaled))

    @property
    def min_delta_s(self):
        return float(self.deltas[self.best_trial])

    def summary(self):
        return {
            "n_points": self.n_points, "trials": self.trials, "shrink_c": self.shrink_c,
            "mean_delta_s": self.mean_delta_s, "stderr": self.stderr,
            "rescaled_mean": self.rescaled_mean, "min_delta_s": self.min_delta_s,
            "min_rescaled": float(self.rescaled[self.best_trial]),
            "bound_ratio_max": float(np.max(self.bound_ratios)),
            "bound_ratio_mean": float(np.mean(self.bound_ratios)),
            "origin_outside": self.origin_outside,
            "min_vertex_count": int(np.min(self.vertex_counts)),
            "seed": self.seed,
        }


def _construction_trial(job):
    body, density, N, c, seed, trial, envelope, samples = job
    P = _random_hull(body, density, N, seed, CONSTRUCTION, trial, envelope)
    inside = origin_interior(P)
    est = surface_deviation(body, 1 - c, P, samples=samples, seed=seed,
                            stream=(DEVIATION, N, trial),
                            method="coupled" if inside else "independent",
                            enforce_cap=inside)
    return est.delta.value, est.delta.std_error, P.n_vertices, inside, P


def bound_scale(body, N, as_n=None):
    """``n N^{-2/(n-1)} as_n(K)^{2/(n-1)} H(dK)``: the shape of the deviation bound."""
    n = body.dim
    as_n = as_n if as_n is not None else p_affine_surface_area(body, n).value.value
    return n * N ** (-2 / (n - 1)) * as_n ** (2 / (n - 1)) * surface_area(body)


def run_construction(body, N, trials, density=None, c_mode="auto", seed=DEFAULT_SEED, workers=1,
                     pilots=200, samples=200_000, as_n=None):
    """Random hulls of N draws on dK compared with the shrunken body (1-c)K.

    Every trial records Delta_s((1-c)K, P_N); the best trial is kept as the
    witness polytope, since the mean bound guarantees some realization does
    at least as well.
    """
    n = body.dim
    density = density or fn_density(body)
    c = shrink_factor(body, density, N, c_mode, pilots=pilots, seed=seed)
    M = envelope_constant(body, density)
    jobs = [(body, density, N, c, seed, i, M, samples) for i in range(trials)]
    out = _map(_construction_trial, jobs, workers)
    deltas = np.array([o[0] for o in out])
    errors = np.array([o[1] for o in out])
    counts = np.array([o[2] for o in out])
    origin_outside = int(sum(not o[3] for o in out))
    if origin_outside:
        log.warning("N=%d: origin outside P_N in %d of %d trials", N, origin_outside, trials)
    best = int(np.argmin(deltas))
    scale = bound_scale(body, N, as_n)
    ratios = deltas * (1 - c) ** -(n - 1) / scale
    return ConstructionResult(N, trials, c, deltas, errors, ratios, counts, origin_outside,
                              best, out[best][4], seed)


@dataclass
class ScalingReport:
    body: str
    density: str
    schedule: list
    rows: list
    slope: float
    slope_halfwidth: float
    expected_slope: float
    ratio_trend: float
    seed: int
    witnesses: dict = field(default_factory=dict, repr=False)

    def to_dict(self):
        return {
            "schema_version": 1, "body": self.body, "density": self.density,
            "schedule": self.schedule, "rows": self.rows, "slope": self.slope,
            "slope_halfwidth": self.slope_halfwidth, "expected_slope": self.expected_slope,
            "bound_ratio_trend": self.ratio_trend, "seed": self.seed,
        }

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SCALING_HEADER)
        for r in self.rows:
            w.writerow([r["n_points"], r["trials"], repr(r["shrink_c"]), repr(r["mean_delta_s"]),
                        repr(r["stderr"]), repr(r["rescaled_mean"]), repr(r["bound_ratio_max"]),
                        self.seed])
        return buf.getvalue()


def fit_loglog(xs, ys, level=0.95):
    """OLS slope of log y on log x with a two-sided t confidence half-width."""
    lx, ly = np.log(xs), np.log(ys)
    res = stats.linregress(lx, ly)
    dof = len(xs) - 2
    half = float(stats.t.ppf(0.5 + level / 2, dof) * res.stderr) if dof > 0 else float("inf")
    return float(res.slope), half


def scaling_study(body, density, schedule, trials, c_mode="auto", seed=DEFAULT_SEED, workers=1,
                  pilots=200, samples=200_000):
    """Run the construction over a schedule of N and fit the decay exponent."""
    schedule = [int(N) for N in schedule]
    if len(schedule) < 3 or sorted(schedule) != schedule:
        raise ContractViolation("schedule must be increasing with at least 3 entries")
    n = body.dim
    as_n = p_affine_surface_area(body, n).value.value
    results = [run_construction(body, N, trials, density, c_mode, seed, workers, pilots, samples, as_n)
               for N in schedule]
    rows = [r.summary() for r in results]
    slope, half = fit_loglog(schedule, [r["mean_delta_s"] for r in rows])
    trend = float(stats.theilslopes([r["bound_ratio_max"] for r in rows], np.log(schedule))[0])
    return ScalingReport(body.to_spec(), density.kind, schedule, rows, slope, half,
                         -2 / (n - 1), trend, seed, {r.n_points: r.witness for r in results})


# -- identities ---------------------------------------------------------------

@dataclass(frozen=True)
class IdentityRow:
    identity: str
    lhs: float
    rhs: float
    rel_error: float
    tolerance: float
    passed: bool

    def as_list(self):
        return [self.identity, repr(self.lhs), repr(self.rhs), repr(self.rel_error),
                repr(self.tolerance), "true" if self.passed else "false"]


def _row(name, lhs, rhs, tol):
    err = abs(lhs - rhs) / abs(rhs)
    return IdentityRow(name, float(lhs), float(rhs), float(err), tol, bool(err <= tol))


@dataclass
class IdentityReport:
    body: str
    rows: list

    @property
    def all_passed(self):
        return all(r.passed for r in self.rows)

    def to_dict(self):
        return {"schema_version": 1, "body": self.body,
                "rows": [{"identity": r.identity, "lhs": r.lhs, "rhs": r.rhs,
                          "rel_error": r.rel_error, "tolerance": r.tolerance, "pass": r.passed}
                         for r in self.rows]}

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(VERIFY_HEADER)
        for r in self.rows:
            w.writerow(r.as_list())
        return buf.getvalue()


def _test_functions(body):
    R = float(np.max(np.abs(body.boundary(np.eye(body.dim)).x)))
    return {
        "one": lambda x: np.ones(len(x)),
        "affine": lambda x: 1.0 + 0.5 * x[:, 0] / R,
        "square": lambda x: x[:, 0] ** 2,
        "norm2": lambda x: np.sum(x * x, axis=1),
        "exp": lambda x: np.exp(x[:, -1] / R),
    }


def verify_identities(body, samples=IDENTITY_SAMPLES, seed=DEFAULT_SEED, mean_curvature="n-1"):
    """Check Minkowski's formula, the normal-map change of variables, the
    normalisation of the optimal density, as_0 = n vol and as_p of the ball.

    Each identity is evaluated by two routes that share no formula: the
    normal (inverse Gauss) map and the radial map or a closed form.
    ``mean_curvature="n"`` rescales H to the 1/n normalisation; Minkowski's
    formula then fails by the factor (n-1)/n.
    """
    n = body.dim
    tol = 1e-6 if n == 2 else 1e-2
    kw = {"samples": samples, "seed": seed}
    conv = 1.0 if mean_curvature == "n-1" else (n - 1) / n
    rows = []

    mink = boundary_integral(body, lambda bp: bp.support * bp.mean_curv * conv, stream=(10,), **kw)
    rows.append(_row("minkowski", mink.value, surface_area(body), tol))

    for name, g in _test_functions(body).items():
        if n == 2:
            t = 2 * np.pi * np.arange(4096) / 4096
            lhs = 2 * np.pi * np.mean(g(body.boundary(np.stack([np.cos(t), np.sin(t)], 1)).x))
        else:
            U = sample_unit_sphere(make_rng(seed, 11), n, samples)
            lhs = sphere_area(n) * np.mean(g(body.boundary(U).x))
        rhs = radial_integral(body, lambda bp, g=g: g(np.atleast_2d(bp.x)) * bp.kappa,
                              stream=(12,), **kw).value
        rows.append(_row(f"change_of_variables[{name}]", lhs, rhs, tol))

    dens = fn_density(body, **kw)
    norm = radial_integral(body, dens.pdf, stream=(13,), **kw)
    rows.append(_row("fn_normalization", norm.value, 1.0, tol))

    as0 = p_affine_surface_area(body, 0, **kw).value
    rows.append(_row("as0_equals_n_vol", as0.value, n * body_volume(body), tol))

    # constant integrand on the ball: the default budget is already exact
    unit = Ball(1.0, n)
    for p in (-1, 0, 1, n, 10):
        est = p_affine_surface_area(unit, p, samples=min(samples, MC_SAMPLES), seed=seed).value
        rows.append(_row(f"as_p_ball[p={p}]", est.value, sphere_area(n), tol))
    return IdentityReport(body.to_spec(), rows)


def _boundary_at_angle(body, theta):
    U = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    return body.boundary(U.reshape(-1, 2)).x.reshape(U.shape)


def bp_check_2d(body, samples=MC_SAMPLES, seed=DEFAULT_SEED, band=1e-6, tolerance=0.02):
    """Planar Blaschke-Petkantschin check with g = 1: L^2 against the line integral.

    Lines ``{<x,u> = h}`` are sampled with ``u`` uniform and
    ``h = h_K(u)(1 - s^2)``, ``s`` uniform, which removes the inverse
    square-root singularity at tangency.  The band
    ``h_K(u) - h < band * h_K(u)`` is excluded.
    """
    if body.dim != 2:
        raise ContractViolation("bp_check_2d needs a planar body")
    rng = make_rng(seed, BP)
    alpha = rng.uniform(0, 2 * np.pi, samples)
    s_min = math.sqrt(band)
    s = rng.uniform(s_min, 1.0, samples)
    u = np.stack([np.cos(alpha), np.sin(alpha)], axis=1)
    hK = body.support(u)
    h = hK * (1 - s * s)

    def height(theta):
        return np.sum(_boundary_at_angle(body, theta) * u, axis=1)

    # <x(t), u> decreases on [alpha, alpha+pi] and increases on [alpha+pi, alpha+2pi]
    roots = []
    for lo, hi, decreasing in ((alpha, alpha + np.pi, True), (alpha + np.pi, alpha + 2 * np.pi, False)):
        lo, hi = lo.copy(), hi.copy()
        for _ in range(60):
            mid = (lo + hi) / 2
            above = height(mid) > h
            if decreasing:
                lo, hi = np.where(above, mid, lo), np.where(above, hi, mid)
            else:
                lo, hi = np.where(above, lo, mid), np.where(above, mid, hi)
        roots.append((lo + hi) / 2)
    t1, t2 = roots
    x1, x2 = _boundary_at_angle(body, t1), _boundary_at_angle(body, t2)
    resid = np.maximum(np.abs(np.sum(x1 * u, 1) - h), np.abs(np.sum(x2 * u, 1) - h))
    converged = bool(np.all(resid <= 1e-9 * np.max(hK)))
    l1 = 1.0 / np.abs(np.sin(t1 - alpha))
    l2 = 1.0 / np.abs(np.sin(t2 - alpha))
    chord = np.linalg.norm(x1 - x2, axis=1)
    vals = 2 * chord * l1 * l2 * 2 * hK * s * (1 - s_min) * 2 * np.pi
    rhs = float(np.mean(vals))
    lhs = surface_area(body) ** 2
    row = _row("blaschke_petkantschin_2d", lhs, rhs, tolerance)
    if not converged:
        row = IdentityRow(row.identity, row.lhs, row.rhs, row.rel_error, tolerance, False)
    return row, MonteCarloEstimate(rhs, float(np.std(vals, ddof=1) / math.sqrt(samples)), samples,
                                   stream_seed(seed, BP))
