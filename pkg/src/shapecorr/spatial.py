"""Bounding-volume hierarchy over mesh triangles.

Answers first-hit ray queries (identical to exhaustive Moller-Trumbore
intersection, ties at shared edges broken by lowest face index) and nearest
surface point queries (ties broken by lowest face index).
"""

from __future__ import annotations

import numpy as np

from .geometry import closest_points_on_triangles

RAY_EPS = 1e-9
_LEAF_SIZE = 8


def ray_triangle_intersections(origins, directions, a, b, c):
    """Moller-Trumbore for every (ray, triangle) combination.

    origins/directions: (r, 3); a/b/c: (m, 3). Returns (r, m) array of hit
    parameters t, +inf where there is no hit. Edge hits within RAY_EPS count
    for both adjacent faces; callers tie-break by face index.
    """
    o = origins[:, None, :]
    d = directions[:, None, :]
    e1 = (b - a)[None, :, :]
    e2 = (c - a)[None, :, :]
    pvec = np.cross(d, e2)
    det = (e1 * pvec).sum(-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / det
        tvec = o - a[None, :, :]
        u = (tvec * pvec).sum(-1) * inv
        qvec = np.cross(tvec, e1)
        v = (d * qvec).sum(-1) * inv
        t = ((e2 * qvec).sum(-1)) * inv
    ok = ((np.abs(det) > RAY_EPS)
          & (u >= -RAY_EPS) & (v >= -RAY_EPS) & (u + v <= 1.0 + RAY_EPS)
          & (t > RAY_EPS))
    return np.where(ok, t, np.inf)


def _first_hit_reduce(t_matrix, face_ids):
    """Min-t per ray with lowest-face-index tie-break (exact t equality)."""
    order = np.argsort(face_ids, kind="stable")
    t = t_matrix[:, order]
    ids = face_ids[order]
    k = np.argmin(t, axis=1)  # first minimum in face-index order
    best_t = t[np.arange(len(t)), k]
    best_f = np.where(np.isfinite(best_t), ids[k], -1)
    return best_f, best_t


def exhaustive_first_hits(mesh, origins, directions):
    """Brute-force first hits over all faces; the BVH oracle."""
    a, b, c = mesh.face_corners()
    t = ray_triangle_intersections(np.asarray(origins, dtype=np.float64),
                                   np.asarray(directions, dtype=np.float64),
                                   a, b, c)
    return _first_hit_reduce(t, np.arange(mesh.n_faces))


class TriangleBVH:
    """Median-split BVH stored in flat arrays."""

    def __init__(self, mesh, leaf_size=_LEAF_SIZE):
        self.mesh = mesh
        a, b, c = mesh.face_corners()
        self._tri = (a, b, c)
        lo = np.minimum(np.minimum(a, b), c)
        hi = np.maximum(np.maximum(a, b), c)
        centroids = (a + b + c) / 3.0

        order = np.arange(mesh.n_faces)
        node_min, node_max = [], []
        node_left, node_start, node_count = [], [], []

        def build(start, end):
            idx = len(node_min)
            node_min.append(None)
            node_max.append(None)
            node_left.append(-1)
            node_start.append(start)
            node_count.append(end - start)
            sel = order[start:end]
            bmin = lo[sel].min(axis=0)
            bmax = hi[sel].max(axis=0)
            node_min[idx] = bmin
            node_max[idx] = bmax
            if end - start > leaf_size:
                axis = int(np.argmax(bmax - bmin))
                # stable sort on (centroid, face idx) keeps builds deterministic
                key = centroids[sel, axis]
                local = np.argsort(key, kind="stable")
                order[start:end] = sel[local]
                mid = start + (end - start) // 2
                node_count[idx] = 0
                build(start, mid)
                node_left[idx] = len(node_min)
                build(mid, end)
            return idx

        import sys
        old_limit = sys.getrecursionlimit()
        sys.setrecursionlimit(max(old_limit, 10000))
        try:
            build(0, mesh.n_faces)
        finally:
            sys.setrecursionlimit(old_limit)

        self.node_min = np.asarray(node_min)
        self.node_max = np.asarray(node_max)
        self.node_left = np.asarray(node_left, dtype=np.int64)
        self.node_start = np.asarray(node_start, dtype=np.int64)
        self.node_count = np.asarray(node_count, dtype=np.int64)
        self.face_order = order

    # --- ray queries ---

    def first_hits(self, origins, directions):
        """First-hit (face, t) for each ray; face -1 and t +inf on miss."""
        origins = np.atleast_2d(np.asarray(origins, dtype=np.float64))
        directions = np.atleast_2d(np.asarray(directions, dtype=np.float64))
        n = len(origins)
        best_t = np.full(n, np.inf)
        best_f = np.full(n, -1, dtype=np.int64)
        with np.errstate(divide="ignore", invalid="ignore"):
            inv_d = 1.0 / directions
        a, b, c = self._tri
        stack = [(0, np.arange(n))]
        while stack:
            node, rays = stack.pop()
            tmin = self._slab_entry(origins[rays], inv_d[rays], node)
            # prune when the box is missed (entry inf) or cannot contain a
            # better-or-equal hit; equal-t lower-index faces are never skipped
            live = np.isfinite(tmin) & (tmin <= best_t[rays])
            rays = rays[live]
            if len(rays) == 0:
                continue
            if self.node_count[node] > 0:
                s = self.node_start[node]
                faces = self.face_order[s:s + self.node_count[node]]
                t = ray_triangle_intersections(origins[rays], directions[rays],
                                               a[faces], b[faces], c[faces])
                f, tt = _first_hit_reduce(t, faces)
                better = (tt < best_t[rays]) | (
                    (tt == best_t[rays]) & (f >= 0) & (f < best_f[rays]))
                upd = rays[better]
                best_t[upd] = tt[better]
                best_f[upd] = f[better]
            else:
                stack.append((self.node_left[node], rays))
                stack.append((node + 1, rays))
        return best_f, best_t

    def _slab_entry(self, origins, inv_d, node):
        t0 = (self.node_min[node] - origins) * inv_d
        t1 = (self.node_max[node] - origins) * inv_d
        tmin = np.minimum(t0, t1).max(axis=1)
        tmax = np.maximum(t0, t1).min(axis=1)
        entry = np.maximum(tmin, 0.0)
        entry[tmax < entry] = np.inf
        return entry

    # --- nearest point queries ---

    def nearest_point(self, p):
        """Globally nearest surface point to p.

        Returns (face index, point (3,), barycentric (3,)); ties on exact
        squared distance resolved to the lowest face index.
        """
        p = np.asarray(p, dtype=np.float64)
        a, b, c = self._tri
        best = [np.inf, -1, None, None]  # d2, face, point, bary

        def box_d2(node):
            d = np.maximum(self.node_min[node] - p, 0.0)
            d = np.maximum(d, p - self.node_max[node])
            return float((d * d).sum())

        stack = [(box_d2(0), 0)]
        while stack:
            d2, node = stack.pop()
            if d2 > best[0]:
                continue
            if self.node_count[node] > 0:
                s = self.node_start[node]
                faces = self.face_order[s:s + self.node_count[node]]
                pts, bary = closest_points_on_triangles(p, a[faces], b[faces], c[faces])
                dd = ((pts - p) ** 2).sum(axis=1)
                for k in np.argsort(faces, kind="stable"):
                    if dd[k] < best[0] or (dd[k] == best[0] and faces[k] < best[1]):
                        best = [dd[k], int(faces[k]), pts[k], bary[k]]
            else:
                l, r = node + 1, self.node_left[node]
                dl, dr = box_d2(l), box_d2(r)
                # visit nearer child last (popped first)
                if dl < dr:
                    stack.append((dr, r))
                    stack.append((dl, l))
                else:
                    stack.append((dl, l))
                    stack.append((dr, r))
        return best[1], best[2], best[3]


def brute_force_nearest(mesh, p):
    """Exhaustive all-faces nearest point; oracle for BVH nearest queries."""
    a, b, c = mesh.face_corners()
    pts, bary = closest_points_on_triangles(np.asarray(p, dtype=np.float64), a, b, c)
    d2 = ((pts - p) ** 2).sum(axis=1)
    f = int(np.argmin(d2))  # argmin returns the first (lowest) index on ties
    return f, pts[f], bary[f]
