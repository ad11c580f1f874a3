# cython: language_level=3
"""Compiled versions of the kernels in ``_pykernels``.

Identical control flow.  The two matrix-vector products of a step go through
BLAS ``dgemv``; everything else is plain C loops without Python overhead.
"""

from libc.math cimport fabs, exp, expm1, isfinite
from libc.stdlib cimport malloc, free
from scipy.linalg.cython_blas cimport dgemv

cdef enum:
    PLUS = 1
    MINUS = -1
    UNRESOLVED = 0
    BLOWN_UP = 2

cdef enum:
    DONE = 0
    NEEDS_TEST = 1
    SEG_BLOWUP = 2
    DEV_EXCEEDED = 3


cdef inline void _matvec(const double[:, ::1] A, const double* x, double* y) noexcept nogil:
    # y = A x for row-major A, i.e. the transpose of a column-major (cols x rows) matrix.
    cdef int rows = <int> A.shape[0], cols = <int> A.shape[1], inc = 1
    cdef double one = 1.0, zero = 0.0
    cdef char trans = b'T'
    dgemv(&trans, &cols, &rows, &one, <double*> &A[0, 0], &cols, <double*> x, &inc,
          &zero, y, &inc)


cdef inline void _to_grid(const double[::1] a, const double[:, ::1] B, double* u) noexcept nogil:
    _matvec(B, &a[0], u)


cdef inline double _amax(const double* x, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i
    cdef double big = 0.0
    for i in range(n):
        if not fabs(x[i]) <= big:
            big = fabs(x[i]) if x[i] == x[i] else 1e300
    return big


cdef inline void _plain(double[::1] a, const double* u, double* f, const double* E,
                        const double* P1, const double[:, ::1] P, double lam) noexcept nogil:
    cdef Py_ssize_t N = P.shape[0], M = P.shape[1], j, k
    cdef double v
    cdef double* g = f + M
    for j in range(M):
        v = u[j]
        f[j] = lam * (v - v * v * v)
    _matvec(P, f, g)
    for k in range(N):
        a[k] = E[k] * a[k] + P1[k] * g[k]


cdef double _step(double[::1] a, double* u, double* f, const double[::1] E, const double[::1] P1,
                  const double[::1] eig, double h, const double[:, ::1] B,
                  const double[:, ::1] P, double lam) noexcept nogil:
    """One exponential Euler step of length ``h`` from grid values ``u``.

    ``f`` needs room for ``M + N`` doubles plus ``2N`` for substep factors.
    ``u`` is clobbered when substeps are taken.  Returns max |a|.
    """
    cdef Py_ssize_t N = P.shape[0], M = P.shape[1], k
    cdef double umax = _amax(u, M), rem, hs
    cdef double* Es
    cdef double* Ps
    if h * 3.0 * lam * umax * umax <= 1.0:
        _plain(a, u, f, &E[0], &P1[0], P, lam)
        return _amax(&a[0], N)
    Es = f + M + N
    Ps = Es + N
    rem = h
    while rem > 1e-15 * h:
        hs = 1.0 / (3.0 * lam * umax * umax)
        if rem < hs:
            hs = rem
        for k in range(N):
            Es[k] = exp(-eig[k] * hs)
            Ps[k] = -expm1(-eig[k] * hs) / eig[k]
        _plain(a, u, f, Es, Ps, P, lam)
        rem -= hs
        _to_grid(a, B, u)
        umax = _amax(u, M)
        if umax < 1e-300:
            umax = 1e-300
        if not isfinite(umax) or umax >= 1e300:
            break
    return _amax(&a[0], N)


def etd_advance(double[::1] a, Py_ssize_t n_steps, const double[::1] E, const double[::1] P1,
                const double[::1] eig, double h, const double[:, ::1] B, const double[:, ::1] P,
                double lam, double blowup):
    cdef Py_ssize_t M = B.shape[0], N = B.shape[1], i
    cdef double* u = <double*> malloc((2 * M + 3 * N) * sizeof(double))
    cdef double* f = u + M
    cdef bint ok = True
    if u == NULL:
        raise MemoryError()
    try:
        with nogil:
            for i in range(n_steps):
                _to_grid(a, B, u)
                if not _step(a, u, f, E, P1, eig, h, B, P, lam) < blowup:
                    ok = False
                    break
    finally:
        free(u)
    return ok


def etd_classify(double[::1] a, Py_ssize_t max_steps, const double[::1] E, const double[::1] P1,
                 const double[::1] eig, double h, const double[:, ::1] B, const double[:, ::1] P,
                 double lam, const double[::1] phi_grid, double tol, const double[::1] pos_floor,
                 bint use_pos):
    cdef Py_ssize_t M = B.shape[0], N = B.shape[1], j, step
    cdef double* u = <double*> malloc((2 * M + 3 * N) * sizeof(double))
    cdef double* f = u + M
    cdef double dp, dm, v
    cdef bint above, below
    cdef int code = UNRESOLVED
    cdef Py_ssize_t used = max_steps
    if u == NULL:
        raise MemoryError()
    try:
        with nogil:
            for step in range(max_steps + 1):
                _to_grid(a, B, u)
                dp = 0.0
                dm = 0.0
                above = use_pos
                below = use_pos
                for j in range(M):
                    v = u[j]
                    if fabs(v - phi_grid[j]) > dp:
                        dp = fabs(v - phi_grid[j])
                    if fabs(v + phi_grid[j]) > dm:
                        dm = fabs(v + phi_grid[j])
                    if not v >= pos_floor[j]:
                        above = False
                    if not v <= -pos_floor[j]:
                        below = False
                if dp < tol or above:
                    code = PLUS
                    used = step
                    break
                if dm < tol or below:
                    code = MINUS
                    used = step
                    break
                if step == max_steps:
                    break
                if not _step(a, u, f, E, P1, eig, h, B, P, lam) < 1e6:
                    code = BLOWN_UP
                    used = step
                    break
    finally:
        free(u)
    return code, used


def noisy_segment(double[::1] a, Py_ssize_t start, Py_ssize_t stop, const double[:, ::1] noise,
                  const double[:, ::1] V, double eps, const double[::1] E, const double[::1] P1,
                  const double[::1] eig, double h, const double[:, ::1] B, const double[:, ::1] P,
                  double lam, Py_ssize_t probe_every, const double[::1] barrier, int sign,
                  bint use_barrier, double[::1] dev, bint track_dev, double dev_stop,
                  double blowup):
    cdef Py_ssize_t M = B.shape[0], N = B.shape[1], n_axes = noise.shape[1]
    cdef Py_ssize_t s = start, j, k, m
    cdef Py_ssize_t width = 2 * M + 3 * N
    cdef double* u = <double*> malloc(2 * width * sizeof(double))
    cdef double* f = u + M
    cdef double* w = u + width
    cdef double* g = w + M
    cdef double maxdev = 0.0, d, c
    cdef int status = DONE
    cdef bint bad
    if u == NULL:
        raise MemoryError()
    try:
        with nogil:
            while True:
                _to_grid(a, B, u)
                if track_dev:
                    _to_grid(dev, B, w)
                    for j in range(M):
                        d = fabs(u[j] - w[j])
                        if d > maxdev:
                            maxdev = d
                    if maxdev >= dev_stop:
                        status = DEV_EXCEEDED
                        break
                if use_barrier and s > start and s % probe_every == 0:
                    bad = False
                    for j in range(M):
                        if sign * (u[j] - barrier[j]) < 0.0:
                            bad = True
                            break
                    if bad:
                        status = NEEDS_TEST
                        break
                if s >= stop:
                    status = DONE
                    break
                d = _step(a, u, f, E, P1, eig, h, B, P, lam)
                if n_axes:
                    for m in range(n_axes):
                        c = eps * noise[s, m]
                        if c != 0.0:
                            for k in range(N):
                                a[k] = a[k] + c * V[m, k]
                    d = _amax(&a[0], N)
                if not d < blowup:
                    s = s + 1
                    status = SEG_BLOWUP
                    break
                if track_dev:
                    _step(dev, w, g, E, P1, eig, h, B, P, lam)
                s = s + 1
    finally:
        free(u)
    return s, status, maxdev
