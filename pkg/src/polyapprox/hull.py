"""Simplicial convex hulls in R^n (2 <= n <= 5) and polytope measure queries.

Two constructions are available behind :func:`convex_hull`:

* ``"qhull"`` (default) -- scipy's Qhull wrapper with triangulated output;
* ``"incremental"`` -- a randomized beneath-beyond insertion with conflict
  lists, written here.  It serves as an independent cross-check and as a
  fallback when Qhull is unavailable.

Both return the same :class:`Polytope` record.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .errors import ContractViolation, DegenerateHullError, NumericalFailure

ORIENT_EPS = 1e-10
MAX_DIM = 5


@dataclass(frozen=True)
class Polytope:
    """Simplicial polytope with outward facet normals.

    ``facet_vertices[i]`` lists the ``n`` vertex indices of facet ``i``; the
    facet lies in ``{y : <normals[i], y> = offsets[i]}`` and the polytope in
    the intersection of the corresponding lower half-spaces.
    """

    vertices: np.ndarray
    facet_vertices: np.ndarray
    normals: np.ndarray
    offsets: np.ndarray
    measures: np.ndarray
    interior_point: np.ndarray

    @property
    def dim(self):
        return self.vertices.shape[1]

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_facets(self):
        return len(self.facet_vertices)

    @property
    def scale(self):
        return float(np.max(np.abs(self.vertices)))

    def facet_simplex(self, i):
        return self.vertices[self.facet_vertices[i]]

    def to_dict(self):
        return {
            "schema_version": 1,
            "vertices": self.vertices.tolist(),
            "facets": [
                {"vertex_ids": ids.tolist(), "normal": nrm.tolist(), "offset": float(off), "measure": float(m)}
                for ids, nrm, off, m in zip(self.facet_vertices, self.normals, self.offsets, self.measures)
            ],
        }

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=1)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_dict(cls, doc):
        verts = np.asarray(doc["vertices"], dtype=float)
        facets = doc["facets"]
        ids = np.array([f["vertex_ids"] for f in facets], dtype=int)
        normals = np.array([f["normal"] for f in facets], dtype=float)
        offsets = np.array([f["offset"] for f in facets], dtype=float)
        measures = np.array([f["measure"] for f in facets], dtype=float)
        return cls(verts, ids, normals, offsets, measures, verts.mean(axis=0))

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def simplex_measures(simplices):
    """(n-1)-volumes of a stack of (n-1)-simplices, shape ``(F, n, n)``.

    Uses the Gram determinant of the edge vectors from the first vertex.
    """
    S = np.asarray(simplices, dtype=float)
    G = S[:, 1:, :] - S[:, :1, :]
    gram = G @ np.swapaxes(G, 1, 2)
    det = np.linalg.det(gram)
    k = S.shape[1] - 1
    return np.sqrt(np.maximum(det, 0.0)) / math.factorial(k)


def facet_measure(vertices):
    """(n-1)-dimensional volume of the simplex spanned by ``vertices`` (0 if degenerate)."""
    V = np.asarray(vertices, dtype=float)
    return float(simplex_measures(V[None])[0])


def _affine_rank(points, tol):
    centered = points - points.mean(axis=0)
    s = np.linalg.svd(centered, compute_uv=False)
    return int(np.sum(s > tol * max(1.0, s[0])))


def _finish(points, facets, interior_hint=None):
    """Re-index to the vertices actually used and compute normals/offsets/measures."""
    used = np.unique(facets)
    remap = np.full(len(points), -1)
    remap[used] = np.arange(len(used))
    verts = points[used]
    fv = remap[facets]
    center = verts.mean(axis=0) if interior_hint is None else interior_hint
    S = verts[fv]
    normals = _simplex_normals(S)
    offsets = np.einsum("ij,ij->i", normals, S[:, 0, :])
    flip = offsets - normals @ center < 0
    normals[flip] *= -1
    offsets[flip] *= -1
    return Polytope(verts, fv, normals, offsets, simplex_measures(S), verts.mean(axis=0))


def _simplex_normals(S):
    """Unit normals of the hyperplanes through each simplex in ``S`` (F, n, n)."""
    E = S[:, 1:, :] - S[:, :1, :]
    n = S.shape[2]
    if n == 2:
        d = E[:, 0, :]
        nrm = np.stack([d[:, 1], -d[:, 0]], axis=1)
    elif n == 3:
        nrm = np.cross(E[:, 0, :], E[:, 1, :])
    else:
        # generalised cross product via cofactors
        nrm = np.empty((len(S), n))
        for j in range(n):
            minor = np.delete(E, j, axis=2)
            nrm[:, j] = (-1) ** j * np.linalg.det(minor)
    nrm /= np.linalg.norm(nrm, axis=1)[:, None]
    return nrm


def convex_hull(points, dim=None, method="qhull", seed=0):
    """Convex hull of ``points`` as a simplicial :class:`Polytope`.

    Raises
    ------
    ContractViolation
        Fewer than n+1 points or dimension outside 2..5.
    DegenerateHullError
        The points do not span R^n, or the construction stayed inconsistent
        after a jittered retry.
    """
    P = np.asarray(points, dtype=float)
    if P.ndim != 2:
        raise ContractViolation("points must be a 2-d array")
    n = P.shape[1] if dim is None else dim
    if P.shape[1] != n:
        raise ContractViolation("point dimension does not match dim")
    if not 2 <= n <= MAX_DIM:
        raise ContractViolation(f"hull dimension must be in 2..{MAX_DIM}")
    if len(P) < n + 1:
        raise ContractViolation("need at least n+1 points")
    scale = float(np.max(np.abs(P))) or 1.0
    if _affine_rank(P, 1e-10) < n:
        raise DegenerateHullError("points are affinely degenerate (rank < n)")
    if method == "qhull":
        try:
            hull = ConvexHull(P, qhull_options="Qt")
        except QhullError:
            try:
                hull = ConvexHull(P, qhull_options="QJ")
            except QhullError as exc:
                raise DegenerateHullError(f"qhull failed: {exc}") from None
        return _finish(P, hull.simplices)
    if method == "incremental":
        rng = np.random.default_rng(seed)
        try:
            facets = _beneath_beyond(P, ORIENT_EPS * scale, rng)
        except _Inconsistent:
            jitter = np.random.default_rng([seed, 1]).uniform(-1, 1, P.shape) * 1e-9 * scale
            try:
                facets = _beneath_beyond(P + jitter, ORIENT_EPS * scale, rng)
            except _Inconsistent as exc:
                raise DegenerateHullError(f"incremental hull inconsistent after jitter: {exc}") from None
            # report the original coordinates; the jitter only decides combinatorics
        return _finish(P, facets)
    raise ContractViolation(f"unknown hull method {method!r}")


class _Inconsistent(Exception):
    pass


def _initial_simplex(P, tol):
    """Indices of n+1 affinely independent points, chosen greedily far apart."""
    n = P.shape[1]
    first = int(np.argmax(P[:, 0]))
    idx = [first, int(np.argmax(np.linalg.norm(P - P[first], axis=1)))]
    while len(idx) < n + 1:
        base = P[idx[0]]
        E = P[idx[1:]] - base
        q, _ = np.linalg.qr(E.T)
        D = P - base
        resid = D - (D @ q) @ q.T
        dist = np.linalg.norm(resid, axis=1)
        j = int(np.argmax(dist))
        if dist[j] <= tol:
            raise DegenerateHullError("points are affinely degenerate (rank < n)")
        idx.append(j)
    return idx


def _beneath_beyond(P, tol, rng):
    """Randomized incremental hull; returns an (F, n) array of facet vertex ids."""
    m, n = P.shape
    simplex = _initial_simplex(P, tol)
    center = P[simplex].mean(axis=0)

    facets = {}          # id -> (vertex tuple, normal, offset)
    ridges = {}          # frozenset of n-1 vertex ids -> set of facet ids
    conflicts = {}       # facet id -> list of point ids seeing it
    next_id = [0]

    def add_facet(verts):
        S = P[list(verts)]
        nrm = _simplex_normals(S[None])[0]
        if not np.all(np.isfinite(nrm)):
            raise _Inconsistent("zero-area facet")
        off = float(nrm @ S[0])
        if off - nrm @ center < 0:
            nrm, off = -nrm, -off
        if off - nrm @ center <= tol:
            raise _Inconsistent("facet passes through the interior reference point")
        fid = next_id[0]
        next_id[0] += 1
        facets[fid] = (verts, nrm, off)
        for j in range(n):
            key = frozenset(verts[:j] + verts[j + 1:])
            ridges.setdefault(key, set()).add(fid)
        return fid

    def remove_facet(fid):
        verts = facets.pop(fid)[0]
        for j in range(n):
            key = frozenset(verts[:j] + verts[j + 1:])
            owners = ridges[key]
            owners.discard(fid)
            if not owners:
                del ridges[key]
        return conflicts.pop(fid, [])

    def assign(point_ids, fids):
        if not point_ids or not fids:
            return
        pts = P[point_ids]
        N = np.array([facets[f][1] for f in fids])
        off = np.array([facets[f][2] for f in fids])
        dist = pts @ N.T - off
        best = np.argmax(dist, axis=1)
        for pid, b, d in zip(point_ids, best, dist[np.arange(len(point_ids)), best]):
            if d > tol:
                owner[pid] = fids[b]
                conflicts.setdefault(fids[b], []).append(pid)
            else:
                owner[pid] = -1

    owner = np.full(m, -1)
    first = [add_facet(tuple(simplex[:j] + simplex[j + 1:])) for j in range(n + 1)]
    rest = [i for i in range(m) if i not in set(simplex)]
    assign(rest, first)

    for pid in rng.permutation(rest):
        fid = owner[pid]
        if fid < 0 or fid not in facets:
            continue
        p = P[pid]
        visible = {fid}
        stack = [fid]
        horizon = []
        while stack:
            f = stack.pop()
            verts = facets[f][0]
            for j in range(n):
                key = frozenset(verts[:j] + verts[j + 1:])
                owners = ridges[key]
                if len(owners) != 2:
                    raise _Inconsistent("open ridge encountered")
                (g,) = owners - {f}
                if g in visible:
                    continue
                _, nrm, off = facets[g]
                if nrm @ p - off > tol:
                    visible.add(g)
                    stack.append(g)
                else:
                    horizon.append(key)
        orphans = []
        for f in visible:
            orphans.extend(remove_facet(f))
        new = []
        for key in horizon:
            if key in ridges and len(ridges[key]) != 1:
                raise _Inconsistent("horizon ridge is not on the boundary of the visible region")
            new.append(add_facet(tuple(sorted(key)) + (int(pid),)))
        for f in new:
            verts = facets[f][0]
            for j in range(n):
                if len(ridges[frozenset(verts[:j] + verts[j + 1:])]) != 2:
                    raise _Inconsistent("new facets do not close up")
        orphans = [q for q in orphans if q != pid]
        assign(orphans, new)

    return np.array([facets[f][0] for f in sorted(facets)], dtype=int)


# -- measures and queries -------------------------------------------------

def polytope_surface_area(P):
    return float(np.sum(P.measures))


def polytope_volume(P):
    """Volume by the cone decomposition from the interior reference point."""
    heights = P.offsets - P.normals @ P.interior_point
    return float(np.sum(P.measures * heights) / P.dim)


def polytope_contains(P, x, tol=1e-12):
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    slack = tol * max(P.scale, 1.0)
    out = np.ones(len(X), dtype=bool)
    for i in range(0, len(X), 4096):
        out[i:i + 4096] = np.all(X[i:i + 4096] @ P.normals.T <= P.offsets + slack, axis=1)
    return bool(out[0]) if single else out


def sample_on_facet(P, facet_id, rng, size=None):
    """Uniform point(s) on a facet via flat Dirichlet barycentric weights."""
    if not 0 <= facet_id < P.n_facets:
        raise ContractViolation(f"no facet {facet_id}")
    S = P.facet_simplex(facet_id)
    w = rng.dirichlet(np.ones(len(S)), 1 if size is None else size)
    pts = w @ S
    return pts[0] if size is None else pts


def sample_in_polytope(P, rng, size):
    """Uniform points in P: pick a cone (facet + interior point) by volume, then Dirichlet."""
    heights = P.offsets - P.normals @ P.interior_point
    vol = P.measures * heights
    if np.any(heights <= 0):
        raise NumericalFailure("interior reference point is not interior")
    cones = rng.choice(P.n_facets, size=size, p=vol / vol.sum())
    w = rng.dirichlet(np.ones(P.dim + 1), size)
    S = P.vertices[P.facet_vertices[cones]]
    return np.einsum("ij,ijk->ik", w[:, :-1], S) + w[:, -1:] * P.interior_point


def ridge_counts(P):
    """Number of facets incident to each ridge; a closed hull has all counts 2."""
    counts = {}
    n = P.dim
    for verts in P.facet_vertices.tolist():
        for j in range(n):
            key = tuple(sorted(verts[:j] + verts[j + 1:]))
            counts[key] = counts.get(key, 0) + 1
    return counts
