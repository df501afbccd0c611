import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from polyapprox.bodies import (
    Ball, Ellipsoid, SupportCurve2D, as_directions, parse_body, probe_directions, validate_body,
)
from polyapprox.errors import ContractViolation, InvalidBody

CURVE = SupportCurve2D(1.0, ((3, 0.1, 0.0), (2, 0.03, -0.02)))
BODIES = [Ball(1.0, 2), Ball(2.0, 3), Ellipsoid((2.0, 1.0)), Ellipsoid((1.5, 1.0, 0.75)),
          Ellipsoid((1.3, 1.0, 0.8, 0.6)), CURVE]


def unit(v):
    v = np.asarray(v, float)
    return v / np.linalg.norm(v)


def test_ellipse_support_and_curvature():
    E = Ellipsoid((2.0, 1.0))
    assert E.support(unit([1, 1])) == pytest.approx(math.sqrt(2.5))
    bp = E.boundary(np.array([1.0, 0.0]))
    assert np.allclose(bp.x, [2, 0])
    assert bp.kappa == pytest.approx(2.0)


def test_ellipsoid_principal_curvatures():
    E = Ellipsoid((2.0, 1.0, 1.0))
    k = E.principal_curvatures(np.array([1.0, 0.0, 0.0]))
    assert np.allclose(np.sort(k), [2.0, 2.0])
    assert E.boundary(np.array([1.0, 0, 0])).kappa == pytest.approx(4.0)


def test_ball_mean_curvature_is_inverse_radius():
    for n in (2, 3, 5):
        bp = Ball(2.0, n).boundary(probe_directions(n, 50))
        assert np.allclose(bp.mean_curv, 0.5)
        assert np.allclose(bp.kappa, 0.5 ** (n - 1))


def _hessian_radii(body, u, eps=1e-4):
    """Principal radii from finite differences of the 1-homogeneous support function."""
    n = len(u)

    def h(v):
        r = np.linalg.norm(v)
        return r * body.support(v / r)

    Hs = np.empty((n, n))
    I = np.eye(n)
    for i in range(n):
        for j in range(n):
            Hs[i, j] = (h(u + eps * (I[i] + I[j])) - h(u + eps * (I[i] - I[j]))
                        - h(u - eps * (I[i] - I[j])) + h(u - eps * (I[i] + I[j]))) / (4 * eps * eps)
    # restrict to the tangent space of the sphere at u
    Q = np.linalg.svd(np.eye(n) - np.outer(u, u))[0][:, : n - 1]
    return np.linalg.eigvalsh(Q.T @ Hs @ Q)


@pytest.mark.parametrize("body", BODIES, ids=lambda b: b.to_spec()[:30])
def test_curvature_against_finite_difference_shape_operator(body):
    rng = np.random.default_rng(4)
    for _ in range(5):
        u = unit(rng.normal(size=body.dim))
        radii = _hessian_radii(body, u)
        bp = body.boundary(u)
        assert bp.kappa == pytest.approx(1 / np.prod(radii), rel=1e-5)
        assert bp.mean_curv == pytest.approx(np.mean(1 / radii), rel=1e-5)
        assert np.allclose(np.sort(body.principal_curvatures(u)), np.sort(1 / radii), rtol=1e-5)


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(BODIES), st.integers(0, 2**32 - 1))
def test_boundary_point_supports_its_normal(body, seed):
    rng = np.random.default_rng(seed)
    U = np.array([unit(rng.normal(size=body.dim)) for _ in range(7)])
    bp = body.boundary(U)
    assert np.allclose(np.sum(bp.x * U, 1), bp.support, atol=1e-12)
    assert np.allclose(bp.support, body.support(U))
    # x(u) maximises <., u> over other boundary points
    other = body.boundary(probe_directions(body.dim, 200)).x
    assert np.all(other @ U.T <= bp.support[None, :] + 1e-10)


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(BODIES), st.integers(0, 2**32 - 1))
def test_radial_map_lands_on_boundary(body, seed):
    rng = np.random.default_rng(seed)
    W = np.array([unit(rng.normal(size=body.dim)) for _ in range(5)])
    rho, normal = body.radial(W)
    x = rho[:, None] * W
    assert np.allclose(np.sum(x * normal, 1), body.support(normal), atol=1e-9)
    assert np.all(body.contains(0.999 * x)) and not np.any(body.contains(1.001 * x))


def test_scaling_and_containment():
    E = Ellipsoid((1.5, 1.0, 0.75))
    S = E.scaled(0.5)
    u = unit([1, 2, 3])
    assert S.support(u) == pytest.approx(0.5 * E.support(u))
    assert S.boundary(u).kappa == pytest.approx(4 * E.boundary(u).kappa)
    assert E.contains(np.zeros(3))
    assert not E.contains(np.array([1.6, 0, 0]))
    assert E.contains(np.array([0.7, 0, 0]), scale=0.5) is not E.contains(np.array([0.8, 0, 0]), scale=0.5)


def test_as_directions_rejects_non_unit():
    with pytest.raises(ContractViolation):
        as_directions(np.array([1.0, 1.0]), 2)
    with pytest.raises(ContractViolation):
        as_directions(np.array([1.0, 0.0, 0.0]), 2)


def test_validation():
    assert validate_body(CURVE).valid
    # h + h'' = 1 - 0.8 cos 3t, so the smallest curvature is 1/1.8
    rep = validate_body(SupportCurve2D(1.0, ((3, 0.1, 0.0),)))
    assert rep.valid and rep.min_curvature == pytest.approx(1 / 1.8, rel=1e-6)
    bad = SupportCurve2D(1.0, ((2, 0.8, 0.0),))
    rep = validate_body(bad)
    assert not rep.valid and rep.failures
    with pytest.raises(InvalidBody):
        rep.raise_if_invalid()
    with pytest.raises(ContractViolation):
        Ellipsoid((1.0, -1.0))


def test_parse_body_grammar(tmp_path):
    assert parse_body("ball:r=2,n=4") == Ball(2.0, 4)
    assert parse_body("ellipsoid:a=1.5,b=1,c=0.75") == Ellipsoid((1.5, 1.0, 0.75))
    path = tmp_path / "c.json"
    path.write_text(CURVE.to_json())
    assert parse_body(f"curve2d:{path}") == CURVE
    path.write_text(json.dumps({"a0": 1.0, "harmonics": [[2, 0.8, 0.0]]}))
    with pytest.raises(InvalidBody):
        parse_body(f"curve2d:{path}")
    for spec in ("cube:r=1", "ball:r=1,m=3", "ball:r", "ellipsoid:a=x,b=1"):
        with pytest.raises(ContractViolation):
            parse_body(spec)
    for b in BODIES[:5]:
        assert parse_body(b.to_spec()) == b


def test_curve_geometry():
    t = np.linspace(0, 2 * np.pi, 9)
    pts = CURVE.point_at(t)
    u = np.stack([np.cos(t), np.sin(t)], 1)
    assert np.allclose(np.sum(pts * u, 1), CURVE.h(t))
    # point_at(t) is the extreme point in direction t: tangent is orthogonal to the normal
    d = (CURVE.point_at(t + 1e-6) - CURVE.point_at(t - 1e-6)) / 2e-6
    assert np.allclose(np.sum(d * u, 1), 0, atol=1e-6)
    assert np.allclose(np.linalg.norm(d, axis=1), CURVE.radius_of_curvature(t), rtol=1e-6)
