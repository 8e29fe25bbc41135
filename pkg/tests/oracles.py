"""Independent reference implementations used as test oracles.

These are deliberately naive and share no code with the package.
"""

import math


def naive_constrained_greedy(centers, frames, epsilon, groups=None):
    """Literal greedy merge that re-scans for the closest unprocessed pair each step.

    Returns a partition of view indices as a set of frozensets.
    """
    n = len(centers)
    if groups is None:
        groups = [[i] for i in range(n)]
    else:
        covered = {i for g in groups for i in g}
        groups = [sorted(g) for g in groups if g] + [[i] for i in range(n) if i not in covered]
    groups.sort(key=lambda g: g[0])
    pts = []
    for g in groups:
        c = [sum(centers[i][k] for i in g) / len(g) for k in range(3)]
        pts.append((c, {frames[i] for i in g}, list(g)))

    clusters = [{p} for p in range(len(pts))]

    def find(p):
        for c in clusters:
            if p in c:
                return c

    remaining = [(i, j) for i in range(len(pts)) for j in range(i + 1, len(pts))]
    while remaining:
        best = min(remaining, key=lambda ij: (math.dist(pts[ij[0]][0], pts[ij[1]][0]), ij))
        remaining.remove(best)
        i, j = best
        if math.dist(pts[i][0], pts[j][0]) > epsilon:
            break
        ci, cj = find(i), find(j)
        if ci is cj:
            continue
        fi = set().union(*(pts[p][1] for p in ci))
        fj = set().union(*(pts[p][1] for p in cj))
        if fi & fj:
            continue
        clusters.remove(ci)
        clusters.remove(cj)
        clusters.append(ci | cj)
    return {frozenset(v for p in c for v in pts[p][2]) for c in clusters}


def naive_dbscan(points, eps, min_pts):
    """Textbook DBSCAN in index order; noise labelled -1."""
    n = len(points)
    labels = [None] * n
    cluster = -1

    def neighbours(i):
        return [j for j in range(n) if math.dist(points[i], points[j]) <= eps]

    for i in range(n):
        if labels[i] is not None:
            continue
        nb = neighbours(i)
        if len(nb) < min_pts:
            labels[i] = -1
            continue
        cluster += 1
        labels[i] = cluster
        queue = [j for j in nb if j != i]
        while queue:
            j = queue.pop(0)
            if labels[j] == -1:
                labels[j] = cluster
            if labels[j] is not None:
                continue
            labels[j] = cluster
            nbj = neighbours(j)
            if len(nbj) >= min_pts:
                queue.extend(nbj)
    return labels


def partition_of(labels):
    groups = {}
    for i, lab in enumerate(labels):
        groups.setdefault(lab, set()).add(i)
    return {frozenset(g) for g in groups.values()}


def random_views(rng, n_views, n_frames=6, spread=2.0):
    centers = [tuple(float(x) for x in rng.uniform(0, spread, 3)) for _ in range(n_views)]
    frames = [int(f) for f in rng.integers(0, n_frames, n_views)]
    return centers, frames


def quadrant_by_angle(stand, face, target):
    """Quadrant from the signed angle between the facing ray and the target ray (ground plane only)."""
    heading = math.atan2(face[1] - stand[1], face[0] - stand[0])
    bearing = math.atan2(target[1] - stand[1], target[0] - stand[0])
    rel = (bearing - heading + math.pi) % (2 * math.pi) - math.pi
    front = "front" if abs(rel) <= math.pi / 2 else "back"
    side = "left" if rel > 0 else "right"
    return f"{front}-{side}"


def sampled_segment_distance(p, a, b, n=2001):
    """(t, distance) of the closest of ``n`` evenly spaced samples on segment ab."""
    best = None
    for i in range(n):
        t = i / (n - 1)
        q = [a[k] + t * (b[k] - a[k]) for k in range(len(a))]
        d = math.dist(p, q)
        if best is None or d < best[1]:
            best = (t, d)
    return best


def surface_samples(lo, hi, n=9):
    """Grid samples on the six faces of an axis-aligned box."""
    pts = []
    steps = [[lo[k] + (hi[k] - lo[k]) * i / (n - 1) for i in range(n)] for k in range(3)]
    for axis in range(3):
        u, v = [k for k in range(3) if k != axis]
        for fixed in (lo[axis], hi[axis]):
            for su in steps[u]:
                for sv in steps[v]:
                    p = [0.0, 0.0, 0.0]
                    p[axis], p[u], p[v] = fixed, su, sv
                    pts.append(p)
    return pts


def _face_grid(lo, hi, wlo, whi, n):
    """Grid points on the box faces that fall inside the window [wlo, whi]."""
    import numpy as np

    out = []
    for axis in range(3):
        u, v = [k for k in range(3) if k != axis]
        ulo, uhi = max(lo[u], wlo[u]), min(hi[u], whi[u])
        vlo, vhi = max(lo[v], wlo[v]), min(hi[v], whi[v])
        if ulo > uhi or vlo > vhi:
            continue
        gu, gv = np.meshgrid(np.linspace(ulo, uhi, n), np.linspace(vlo, vhi, n))
        for side in (lo[axis], hi[axis]):
            if not wlo[axis] <= side <= whi[axis]:
                continue
            pts = np.empty((gu.size, 3))
            pts[:, axis], pts[:, u], pts[:, v] = side, gu.ravel(), gv.ravel()
            out.append(pts)
    return np.concatenate(out)


def zoomed_surface_distance(lo_a, hi_a, lo_b, hi_b, n=11, rounds=6):
    """Closest distance between two box surfaces by repeated grid sampling.

    Each round samples both surfaces, keeps the closest pair and re-samples a
    shrinking window around it.
    """
    import numpy as np
    from scipy.spatial.distance import cdist

    lo_a, hi_a, lo_b, hi_b = (np.asarray(x, float) for x in (lo_a, hi_a, lo_b, hi_b))
    win_a, win_b = (lo_a, hi_a), (lo_b, hi_b)
    radius = max(np.max(hi_a - lo_a), np.max(hi_b - lo_b)) * 2.0 / (n - 1)
    best = math.inf
    for _ in range(rounds):
        pa, pb = _face_grid(lo_a, hi_a, *win_a, n), _face_grid(lo_b, hi_b, *win_b, n)
        d = cdist(pa, pb)
        i, j = np.unravel_index(np.argmin(d), d.shape)
        best = min(best, float(d[i, j]))
        win_a = (pa[i] - radius, pa[i] + radius)
        win_b = (pb[j] - radius, pb[j] + radius)
        radius *= 4.0 / (n - 1)
    return best
