# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the kernels in ``_pykernels``.

Floating-point expressions mirror the Python fallback term for term so
the two backends agree bit for bit.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, INFINITY
from libcpp.queue cimport priority_queue
from libcpp.pair cimport pair
from libcpp.vector cimport vector

cnp.import_array()

cdef int RING_DY[8]
cdef int RING_DX[8]
RING_DY[:] = [0, 1, 1, 1, 0, -1, -1, -1]
RING_DX[:] = [-1, -1, 0, 1, 1, 1, 0, -1]


cdef inline int ring_index(int dy, int dx) noexcept nogil:
    cdef int d
    for d in range(8):
        if RING_DY[d] == dy and RING_DX[d] == dx:
            return d
    return -1


def trace_boundary(const cnp.uint8_t[:, ::1] mask, Py_ssize_t start_y, Py_ssize_t start_x):
    cdef vector[Py_ssize_t] ys, xs
    cdef Py_ssize_t cy = start_y, cx = start_x, ny, nx, by, bx
    cdef Py_ssize_t sy = -1, sx = -1
    cdef int back = 0, found, prev, j, d
    cdef bint have_second = False
    ys.push_back(cy)
    xs.push_back(cx)
    with nogil:
        while True:
            found = -1
            for j in range(1, 9):
                d = (back + j) & 7
                if mask[cy + RING_DY[d], cx + RING_DX[d]]:
                    found = d
                    break
            if found < 0:
                break
            prev = (found + 7) & 7
            ny = cy + RING_DY[found]
            nx = cx + RING_DX[found]
            by = cy + RING_DY[prev]
            bx = cx + RING_DX[prev]
            if not have_second:
                have_second = True
                sy = ny
                sx = nx
            elif cy == start_y and cx == start_x and ny == sy and nx == sx:
                ys.pop_back()
                xs.pop_back()
                break
            ys.push_back(ny)
            xs.push_back(nx)
            back = ring_index(<int>(by - ny), <int>(bx - nx))
            cy = ny
            cx = nx
    cdef Py_ssize_t m = ys.size(), i
    out = np.empty((m, 2), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] o = out
    for i in range(m):
        o[i, 0] = ys[i]
        o[i, 1] = xs[i]
    return out


cdef inline double curvature_int(long v1y, long v1x, long v2y, long v2x, double cap) noexcept nogil:
    cdef long cross = v1x * v2y - v1y * v2x
    cdef long dot = v1x * v2x + v1y * v2y
    cdef double l1, l2, den
    if cross == 0:
        return 0.0 if dot > 0 else cap
    l1 = sqrt(<double>(v1x * v1x + v1y * v1y))
    l2 = sqrt(<double>(v2x * v2x + v2y * v2y))
    den = l1 * l2 + <double>dot
    if den <= 0.0:
        return cap
    return 2.0 * fabs(<double>cross) / den


cdef inline long floor_half(long v) noexcept nogil:
    # floor(v / 2) for possibly negative v
    if v >= 0:
        return v >> 1
    return -((-v + 1) >> 1)


cdef inline bint inside_closed(const cnp.uint8_t[:, ::1] mask, long y2, long x2) noexcept nogil:
    cdef long h = mask.shape[0], w = mask.shape[1]
    cdef long y0, y1, x0, x1, y, x
    if y2 % 2 == 0:
        y0 = floor_half(y2)
        y1 = y0
    else:
        y0 = floor_half(y2 - 1)
        y1 = floor_half(y2 + 1)
    if x2 % 2 == 0:
        x0 = floor_half(x2)
        x1 = x0
    else:
        x0 = floor_half(x2 - 1)
        x1 = floor_half(x2 + 1)
    for y in range(y0, y1 + 1):
        if 0 <= y < h:
            for x in range(x0, x1 + 1):
                if 0 <= x < w and mask[y, x]:
                    return True
    return False


def contour_energies(const cnp.int64_t[:, ::1] points, const cnp.int64_t[::1] nbr_ptr,
                     const cnp.int64_t[:, ::1] nbr, const cnp.int64_t[:, ::1] ext,
                     const cnp.uint8_t[:, ::1] mask, double mu, double cap, bint test_concavity):
    cdef Py_ssize_t m = points.shape[0]
    kappa_a = np.zeros(m, dtype=np.float64)
    concave_a = np.zeros(m, dtype=np.uint8)
    energy_a = np.zeros(m, dtype=np.float64)
    chosen_a = np.full((m, 2), -1, dtype=np.int64)
    if m <= 2:
        return kappa_a, concave_a, energy_a, chosen_a
    cdef double[::1] kappa = kappa_a
    cdef cnp.uint8_t[::1] concave = concave_a
    cdef double[::1] energy = energy_a
    cdef cnp.int64_t[:, ::1] chosen = chosen_a
    cdef Py_ssize_t i, a, b, lo, hi
    cdef long cy, cx, ay, ax, by, bx, v1y, v1x, v2y, v2x, my, mx
    cdef double k, l1, l2, base, e, best_e, best_k
    cdef int c, best_c
    cdef Py_ssize_t best_a, best_b
    with nogil:
        for i in range(m):
            cy = points[i, 0]
            cx = points[i, 1]
            lo = nbr_ptr[i]
            hi = nbr_ptr[i + 1]
            best_e = INFINITY
            best_k = 0.0
            best_c = 0
            best_a = -1
            best_b = -1
            for a in range(lo, hi):
                ay = nbr[a, 0]
                ax = nbr[a, 1]
                for b in range(a + 1, hi):
                    by = nbr[b, 0]
                    bx = nbr[b, 1]
                    v1y = cy - ay
                    v1x = cx - ax
                    v2y = by - cy
                    v2x = bx - cx
                    k = curvature_int(v1y, v1x, v2y, v2x, cap)
                    l1 = sqrt(<double>(v1x * v1x + v1y * v1y))
                    l2 = sqrt(<double>(v2x * v2x + v2y * v2y))
                    base = k * k / (l1 + l2)
                    c = 0
                    if test_concavity:
                        if a == lo and b == lo + 1:
                            my = ext[i, 0] + ext[i, 2]
                            mx = ext[i, 1] + ext[i, 3]
                        else:
                            my = ay + by
                            mx = ax + bx
                        c = 0 if inside_closed(mask, my, mx) else 1
                    e = base * mu if c else base
                    if e < best_e:
                        best_e = e
                        best_k = k
                        best_c = c
                        best_a = a - lo
                        best_b = b - lo
            if best_a >= 0:
                kappa[i] = best_k
                concave[i] = best_c
                energy[i] = best_e
                chosen[i, 0] = best_a
                chosen[i, 1] = best_b
    return kappa_a, concave_a, energy_a, chosen_a


def flood(energy_in, markers, mask_in):
    cdef Py_ssize_t h = energy_in.shape[0], w = energy_in.shape[1]
    lab_a = np.ascontiguousarray(markers, dtype=np.int64).ravel().copy()
    en_a = np.ascontiguousarray(energy_in, dtype=np.float64).ravel()
    ok_a = np.ascontiguousarray(mask_in, dtype=np.uint8).ravel()
    cdef cnp.int64_t[::1] lab = lab_a
    cdef const double[::1] en = en_a
    cdef const cnp.uint8_t[::1] ok = ok_a
    # max-heap on negated keys == min-heap on (energy, index)
    cdef priority_queue[pair[double, cnp.int64_t]] heap
    cdef pair[double, cnp.int64_t] top
    cdef Py_ssize_t i, j, y, x, ny, nx, n = h * w
    cdef cnp.int64_t li
    cdef int d
    with nogil:
        for i in range(n):
            if lab[i] != 0:
                heap.push(pair[double, cnp.int64_t](-en[i], -i))
        while not heap.empty():
            top = heap.top()
            heap.pop()
            i = -top.second
            y = i // w
            x = i - y * w
            li = lab[i]
            for d in range(8):
                ny = y + RING_DY[d]
                nx = x + RING_DX[d]
                if 0 <= ny < h and 0 <= nx < w:
                    j = ny * w + nx
                    if ok[j] and lab[j] == 0:
                        lab[j] = li
                        heap.push(pair[double, cnp.int64_t](-en[j], -j))
    return lab_a.reshape(h, w)
