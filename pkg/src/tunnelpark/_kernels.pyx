# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled geometry kernels; same contract as ``_kernels_py``."""
from libc.math cimport sqrt, sin, cos, fabs, INFINITY

import numpy as np

BACKEND = "cython"

cdef double _EDGE_EPS = 1e-12


cdef inline double _seg_dist2(double px, double py, double ax, double ay,
                              double bx, double by) noexcept nogil:
    cdef double dx = bx - ax, dy = by - ay
    cdef double l2 = dx * dx + dy * dy
    cdef double t, ex, ey
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


cdef bint _inside(double px, double py, const double[:, ::1] v,
                  Py_ssize_t lo, Py_ssize_t hi) noexcept nogil:
    cdef Py_ssize_t n = hi - lo, i, j
    for i in range(n):
        j = lo + (i + 1) % n
        if ((v[j, 0] - v[lo + i, 0]) * (py - v[lo + i, 1])
                - (v[j, 1] - v[lo + i, 1]) * (px - v[lo + i, 0])) < 0.0:
            return False
    return True


cdef double _point_dist(double px, double py, const double[:, ::1] v,
                        Py_ssize_t lo, Py_ssize_t hi) noexcept nogil:
    cdef Py_ssize_t n = hi - lo, i, j
    cdef double best = INFINITY, d2
    if n >= 3 and _inside(px, py, v, lo, hi):
        return 0.0
    for i in range(n):
        j = lo + (i + 1) % n
        d2 = _seg_dist2(px, py, v[lo + i, 0], v[lo + i, 1], v[j, 0], v[j, 1])
        if d2 < best:
            best = d2
    return sqrt(best)


cdef bint _separated_on(double nx, double ny,
                        const double[:, ::1] p, Py_ssize_t plo, Py_ssize_t phi,
                        const double[:, ::1] q, Py_ssize_t qlo, Py_ssize_t qhi) noexcept nogil:
    cdef double pmin = INFINITY, pmax = -INFINITY, qmin = INFINITY, qmax = -INFINITY, d
    cdef Py_ssize_t i
    for i in range(plo, phi):
        d = p[i, 0] * nx + p[i, 1] * ny
        if d < pmin:
            pmin = d
        if d > pmax:
            pmax = d
    for i in range(qlo, qhi):
        d = q[i, 0] * nx + q[i, 1] * ny
        if d < qmin:
            qmin = d
        if d > qmax:
            qmax = d
    return pmax < qmin or qmax < pmin


cdef bint _separated_by(const double[:, ::1] a, Py_ssize_t alo, Py_ssize_t ahi,
                        const double[:, ::1] p, Py_ssize_t plo, Py_ssize_t phi,
                        const double[:, ::1] q, Py_ssize_t qlo, Py_ssize_t qhi) noexcept nogil:
    # Tries the edge normals of polygon ``a``; degenerate ``a`` also tries its
    # edge directions and the coordinate axes.
    cdef Py_ssize_t n = ahi - alo, i, j
    cdef double ex, ey, fx = 0.0, fy = 0.0
    cdef int count = 0
    cdef bint independent = False
    for i in range(n):
        j = alo + (i + 1) % n
        ex = a[j, 0] - a[alo + i, 0]
        ey = a[j, 1] - a[alo + i, 1]
        if ex * ex + ey * ey <= _EDGE_EPS * _EDGE_EPS:
            continue
        if _separated_on(-ey, ex, p, plo, phi, q, qlo, qhi):
            return True
        if count == 0:
            fx = -ey
            fy = ex
        elif fabs(fx * ex - fy * -ey) > _EDGE_EPS:
            independent = True
        count += 1
    if independent:
        return False
    for i in range(n):
        j = alo + (i + 1) % n
        ex = a[j, 0] - a[alo + i, 0]
        ey = a[j, 1] - a[alo + i, 1]
        if ex * ex + ey * ey <= _EDGE_EPS * _EDGE_EPS:
            continue
        if _separated_on(ex, ey, p, plo, phi, q, qlo, qhi):
            return True
    if _separated_on(1.0, 0.0, p, plo, phi, q, qlo, qhi):
        return True
    return _separated_on(0.0, 1.0, p, plo, phi, q, qlo, qhi)


cdef bint _overlap(const double[:, ::1] p, Py_ssize_t plo, Py_ssize_t phi,
                   const double[:, ::1] q, Py_ssize_t qlo, Py_ssize_t qhi) noexcept nogil:
    if _separated_by(p, plo, phi, p, plo, phi, q, qlo, qhi):
        return False
    if _separated_by(q, qlo, qhi, p, plo, phi, q, qlo, qhi):
        return False
    return True


cdef double _distance(const double[:, ::1] p, Py_ssize_t plo, Py_ssize_t phi,
                      const double[:, ::1] q, Py_ssize_t qlo, Py_ssize_t qhi) noexcept nogil:
    cdef double best = INFINITY, d2
    cdef Py_ssize_t i, k, m, kn
    if _overlap(p, plo, phi, q, qlo, qhi):
        return 0.0
    m = qhi - qlo
    for i in range(plo, phi):
        for k in range(m):
            kn = qlo + (k + 1) % m
            d2 = _seg_dist2(p[i, 0], p[i, 1], q[qlo + k, 0], q[qlo + k, 1], q[kn, 0], q[kn, 1])
            if d2 < best:
                best = d2
    m = phi - plo
    for i in range(qlo, qhi):
        for k in range(m):
            kn = plo + (k + 1) % m
            d2 = _seg_dist2(q[i, 0], q[i, 1], p[plo + k, 0], p[plo + k, 1], p[kn, 0], p[kn, 1])
            if d2 < best:
                best = d2
    return sqrt(best)


cdef inline double _aabb_gap2(double px, double py, const double[:, ::1] boxes,
                              Py_ssize_t k) noexcept nogil:
    cdef double dx = 0.0, dy = 0.0
    if boxes[k, 0] - px > dx:
        dx = boxes[k, 0] - px
    if px - boxes[k, 2] > dx:
        dx = px - boxes[k, 2]
    if boxes[k, 1] - py > dy:
        dy = boxes[k, 1] - py
    if py - boxes[k, 3] > dy:
        dy = py - boxes[k, 3]
    return dx * dx + dy * dy


cdef bint _point_clear(double px, double py, const double[:, ::1] verts,
                       const long long[::1] offsets, const double[:, ::1] aabbs,
                       double r) noexcept nogil:
    cdef Py_ssize_t k
    cdef Py_ssize_t npoly = offsets.shape[0] - 1
    for k in range(npoly):
        if _aabb_gap2(px, py, aabbs, k) >= r * r:
            continue
        if _point_dist(px, py, verts, offsets[k], offsets[k + 1]) < r:
            return False
    return True


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def point_polygon_distance(double px, double py, poly):
    cdef const double[:, ::1] v = _f64(poly)
    return _point_dist(px, py, v, 0, v.shape[0])


def polygons_overlap(p, q):
    cdef const double[:, ::1] a = _f64(p)
    cdef const double[:, ::1] b = _f64(q)
    return bool(_overlap(a, 0, a.shape[0], b, 0, b.shape[0]))


def polygon_distance(p, q):
    cdef const double[:, ::1] a = _f64(p)
    cdef const double[:, ::1] b = _f64(q)
    return _distance(a, 0, a.shape[0], b, 0, b.shape[0])


def point_clear(double px, double py, const double[:, ::1] verts,
                const long long[::1] offsets, const double[:, ::1] aabbs, double r):
    return bool(_point_clear(px, py, verts, offsets, aabbs, r))


def point_clearance(double px, double py, const double[:, ::1] verts,
                    const long long[::1] offsets):
    cdef Py_ssize_t k
    cdef double best = INFINITY, d
    for k in range(offsets.shape[0] - 1):
        d = _point_dist(px, py, verts, offsets[k], offsets[k + 1])
        if d < best:
            best = d
    return best


def box_clear(box, const double[:, ::1] verts, const long long[::1] offsets,
              const double[:, ::1] aabbs, double r):
    cdef const double[:, ::1] b = _f64(box)
    cdef Py_ssize_t nb = b.shape[0], i, k
    cdef double bxmin = INFINITY, bxmax = -INFINITY, bymin = INFINITY, bymax = -INFINITY
    cdef double gx, gy
    for i in range(nb):
        if b[i, 0] < bxmin:
            bxmin = b[i, 0]
        if b[i, 0] > bxmax:
            bxmax = b[i, 0]
        if b[i, 1] < bymin:
            bymin = b[i, 1]
        if b[i, 1] > bymax:
            bymax = b[i, 1]
    for k in range(offsets.shape[0] - 1):
        gx = 0.0
        gy = 0.0
        if aabbs[k, 0] - bxmax > gx:
            gx = aabbs[k, 0] - bxmax
        if bxmin - aabbs[k, 2] > gx:
            gx = bxmin - aabbs[k, 2]
        if aabbs[k, 1] - bymax > gy:
            gy = aabbs[k, 1] - bymax
        if bymin - aabbs[k, 3] > gy:
            gy = bymin - aabbs[k, 3]
        if gx * gx + gy * gy >= r * r:
            continue
        if _distance(b, 0, nb, verts, offsets[k], offsets[k + 1]) < r:
            return False
    return True


def arc_rollout(double x, double y, double theta, double step, double curvature,
                int n_samples, double off_f, double off_r,
                const double[:, ::1] verts, const long long[::1] offsets,
                const double[:, ::1] aabbs, double r):
    cdef int i
    cdef double s, xe = 0.0, ye = 0.0, te = 0.0, c, sn
    for i in range(1, n_samples + 1):
        s = step * i / n_samples
        if fabs(curvature) < 1e-12:
            te = theta
            xe = x + s * cos(theta)
            ye = y + s * sin(theta)
        else:
            te = theta + curvature * s
            xe = x + (sin(te) - sin(theta)) / curvature
            ye = y - (cos(te) - cos(theta)) / curvature
        c = cos(te)
        sn = sin(te)
        if not _point_clear(xe + off_f * c, ye + off_f * sn, verts, offsets, aabbs, r):
            return False, xe, ye, te
        if not _point_clear(xe + off_r * c, ye + off_r * sn, verts, offsets, aabbs, r):
            return False, xe, ye, te
    return True, xe, ye, te


def givens_drop(double[:, ::1] R, double[:, ::1] J, Py_ssize_t k, Py_ssize_t q):
    cdef Py_ssize_t n = J.shape[0], i, j, col
    cdef double a, b, rho, c, s, t1, t2
    for col in range(k, q - 1):
        for i in range(R.shape[0]):
            R[i, col] = R[i, col + 1]
    for i in range(R.shape[0]):
        R[i, q - 1] = 0.0
    for j in range(k, q - 1):
        a = R[j, j]
        b = R[j + 1, j]
        rho = sqrt(a * a + b * b)
        if rho == 0.0:
            continue
        c = a / rho
        s = b / rho
        for col in range(j, q - 1):
            t1 = R[j, col]
            t2 = R[j + 1, col]
            R[j, col] = c * t1 + s * t2
            R[j + 1, col] = -s * t1 + c * t2
        R[j + 1, j] = 0.0
        for i in range(n):
            t1 = J[i, j]
            t2 = J[i, j + 1]
            J[i, j] = c * t1 + s * t2
            J[i, j + 1] = -s * t1 + c * t2
