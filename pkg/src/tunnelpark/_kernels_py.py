"""Pure-Python geometry kernels.

Reference implementation of the hot inner loops used by the dilated-map
queries, box growth and the hybrid A* rollouts. ``_kernels.pyx`` mirrors
every function here with identical semantics; ``tunnelpark._backend``
picks one at import time.

Polygons are ``(n, 2)`` float arrays (or nested sequences) with vertices in
counter-clockwise order. Degenerate polygons (points, segments) are allowed;
representative boxes start out as a single point.

An obstacle *set* is packed into three arrays so that the compiled kernel can
walk it without Python objects:

``verts``
    ``(V, 2)`` float64, all vertices back to back.
``offsets``
    ``(P + 1,)`` int64, polygon ``k`` owns ``verts[offsets[k]:offsets[k + 1]]``.
``aabbs``
    ``(P, 4)`` float64, ``xmin, ymin, xmax, ymax`` per polygon.
"""
import math

BACKEND = "python"

_EDGE_EPS = 1e-12


def _as_list(poly):
    if hasattr(poly, "tolist"):
        return poly.tolist()
    return [(float(p[0]), float(p[1])) for p in poly]


def _seg_dist2(px, py, ax, ay, bx, by):
    dx = bx - ax
    dy = by - ay
    l2 = dx * dx + dy * dy
    if l2 <= _EDGE_EPS * _EDGE_EPS:
        ex = px - ax
        ey = py - ay
        return ex * ex + ey * ey
    t = ((px - ax) * dx + (py - ay) * dy) / l2
    if t < 0.0:
        t = 0.0
    elif t > 1.0:
        t = 1.0
    ex = px - (ax + t * dx)
    ey = py - (ay + t * dy)
    return ex * ex + ey * ey


def _inside(px, py, pts):
    n = len(pts)
    for i in range(n):
        ax, ay = pts[i]
        bx, by = pts[(i + 1) % n]
        if (bx - ax) * (py - ay) - (by - ay) * (px - ax) < 0.0:
            return False
    return True


def _point_dist(px, py, pts):
    if len(pts) >= 3 and _inside(px, py, pts):
        return 0.0
    n = len(pts)
    best = math.inf
    for i in range(n):
        ax, ay = pts[i]
        bx, by = pts[(i + 1) % n]
        d2 = _seg_dist2(px, py, ax, ay, bx, by)
        if d2 < best:
            best = d2
    return math.sqrt(best)


def point_polygon_distance(px, py, poly):
    """Euclidean distance from a point to a closed convex polygon (0 inside)."""
    return _point_dist(float(px), float(py), _as_list(poly))


def _axes(pts):
    n = len(pts)
    axes = []
    dirs = []
    for i in range(n):
        ax, ay = pts[i]
        bx, by = pts[(i + 1) % n]
        ex = bx - ax
        ey = by - ay
        if ex * ex + ey * ey > _EDGE_EPS * _EDGE_EPS:
            axes.append((-ey, ex))
            dirs.append((ex, ey))
    # Fewer than two independent normals: a point or a segment. Add its edge
    # directions and the coordinate axes so collinear cases still separate.
    independent = False
    for i in range(1, len(axes)):
        if abs(axes[0][0] * axes[i][1] - axes[0][1] * axes[i][0]) > _EDGE_EPS:
            independent = True
            break
    if not independent:
        axes.extend(dirs)
        axes.append((1.0, 0.0))
        axes.append((0.0, 1.0))
    return axes


def _overlap(p, q):
    for axes in (_axes(p), _axes(q)):
        for nx, ny in axes:
            pmin = pmax = p[0][0] * nx + p[0][1] * ny
            for x, y in p[1:]:
                d = x * nx + y * ny
                if d < pmin:
                    pmin = d
                elif d > pmax:
                    pmax = d
            qmin = qmax = q[0][0] * nx + q[0][1] * ny
            for x, y in q[1:]:
                d = x * nx + y * ny
                if d < qmin:
                    qmin = d
                elif d > qmax:
                    qmax = d
            if pmax < qmin or qmax < pmin:
                return False
    return True


def polygons_overlap(p, q):
    """Closed-set separating-axis test: touching boundaries count as overlap."""
    return _overlap(_as_list(p), _as_list(q))


def _distance(p, q):
    if _overlap(p, q):
        return 0.0
    best = math.inf
    for a, b in ((p, q), (q, p)):
        m = len(b)
        for px, py in a:
            for j in range(m):
                ax, ay = b[j]
                bx, by = b[(j + 1) % m]
                d2 = _seg_dist2(px, py, ax, ay, bx, by)
                if d2 < best:
                    best = d2
    return math.sqrt(best)


def polygon_distance(p, q):
    """Minimum distance between two convex polygons, 0 when they overlap."""
    return _distance(_as_list(p), _as_list(q))


def _aabb_gap2(px, py, box):
    dx = max(box[0] - px, 0.0, px - box[2])
    dy = max(box[1] - py, 0.0, py - box[3])
    return dx * dx + dy * dy


def _unpack(verts, offsets):
    flat = _as_list(verts)
    offs = [int(o) for o in offsets]
    return [flat[offs[k]:offs[k + 1]] for k in range(len(offs) - 1)]


def point_clear(px, py, verts, offsets, aabbs, r):
    """True iff the point is at least ``r`` away from every packed polygon."""
    px = float(px)
    py = float(py)
    r2 = r * r
    boxes = _as_list(aabbs)
    for k, pts in enumerate(_unpack(verts, offsets)):
        if _aabb_gap2(px, py, boxes[k]) >= r2:
            continue
        if _point_dist(px, py, pts) < r:
            return False
    return True


def point_clearance(px, py, verts, offsets):
    """Distance from the point to the nearest packed polygon (inf if none)."""
    best = math.inf
    for pts in _unpack(verts, offsets):
        d = _point_dist(float(px), float(py), pts)
        if d < best:
            best = d
    return best


def box_clear(box, verts, offsets, aabbs, r):
    """True iff ``polygon_distance(box, obstacle) >= r`` for every polygon."""
    b = _as_list(box)
    bxmin = min(p[0] for p in b)
    bxmax = max(p[0] for p in b)
    bymin = min(p[1] for p in b)
    bymax = max(p[1] for p in b)
    boxes = _as_list(aabbs)
    for k, pts in enumerate(_unpack(verts, offsets)):
        ob = boxes[k]
        gx = max(ob[0] - bxmax, 0.0, bxmin - ob[2])
        gy = max(ob[1] - bymax, 0.0, bymin - ob[3])
        if gx * gx + gy * gy >= r * r:
            continue
        if _distance(b, pts) < r:
            return False
    return True


def arc_rollout(x, y, theta, step, curvature, n_samples,
                off_f, off_r, verts, offsets, aabbs, r):
    """Advance a pose along a constant-curvature arc and check the disc centers.

    ``step`` is the signed arc length (negative when reversing) and the arc is
    checked at ``n_samples`` evenly spaced points, the end pose included but
    the start pose excluded. Returns ``(clear, x_end, y_end, theta_end)``; the
    end pose is valid only when ``clear`` is true.
    """
    x = float(x)
    y = float(y)
    theta = float(theta)
    polys = _unpack(verts, offsets)
    boxes = _as_list(aabbs)
    r2 = r * r
    xe = ye = te = 0.0
    for i in range(1, n_samples + 1):
        s = step * i / n_samples
        if abs(curvature) < 1e-12:
            te = theta
            xe = x + s * math.cos(theta)
            ye = y + s * math.sin(theta)
        else:
            te = theta + curvature * s
            xe = x + (math.sin(te) - math.sin(theta)) / curvature
            ye = y - (math.cos(te) - math.cos(theta)) / curvature
        c = math.cos(te)
        sn = math.sin(te)
        for off in (off_f, off_r):
            qx = xe + off * c
            qy = ye + off * sn
            for k, pts in enumerate(polys):
                if _aabb_gap2(qx, qy, boxes[k]) >= r2:
                    continue
                if _point_dist(qx, qy, pts) < r:
                    return False, xe, ye, te
    return True, xe, ye, te


def givens_drop(R, J, k, q):
    """Delete column ``k`` of the leading ``q x q`` triangle of ``R`` in place.

    The columns right of ``k`` shift left and Givens rotations restore the
    upper-triangular shape; each rotation is applied to the matching column
    pair of ``J`` so that ``J R`` stays invariant on the active block.
    """
    R[:, k:q - 1] = R[:, k + 1:q]
    R[:, q - 1] = 0.0
    for j in range(k, q - 1):
        a, b = R[j, j], R[j + 1, j]
        rho = math.hypot(a, b)
        if rho == 0.0:
            continue
        c, s = a / rho, b / rho
        rj = R[j, j:q - 1].copy()
        R[j, j:q - 1] = c * rj + s * R[j + 1, j:q - 1]
        R[j + 1, j:q - 1] = -s * rj + c * R[j + 1, j:q - 1]
        R[j + 1, j] = 0.0
        jj = J[:, j].copy()
        J[:, j] = c * jj + s * J[:, j + 1]
        J[:, j + 1] = -s * jj + c * J[:, j + 1]
