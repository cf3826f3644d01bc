# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled integration kernels; same algorithms and signatures as ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos, tanh, fabs, ceil, pow, isfinite
from libc.stdlib cimport malloc, realloc, free

cnp.import_array()

DEF OK = 0
DEF STEP_FAILURE = 1
DEF NON_FINITE = 2
DEF ESCAPED = 3

BACKEND = "cython"

cdef double A21 = 1.0 / 4.0
cdef double A31 = 3.0 / 32.0, A32 = 9.0 / 32.0
cdef double A41 = 1932.0 / 2197.0, A42 = -7200.0 / 2197.0, A43 = 7296.0 / 2197.0
cdef double A51 = 439.0 / 216.0, A52 = -8.0, A53 = 3680.0 / 513.0, A54 = -845.0 / 4104.0
cdef double A61 = -8.0 / 27.0, A62 = 2.0, A63 = -3544.0 / 2565.0, A64 = 1859.0 / 4104.0, A65 = -11.0 / 40.0
cdef double C2 = 1.0 / 4.0, C3 = 3.0 / 8.0, C4 = 12.0 / 13.0, C5 = 1.0, C6 = 1.0 / 2.0
cdef double B1 = 25.0 / 216.0, B3 = 1408.0 / 2565.0, B4 = 2197.0 / 4104.0, B5 = -1.0 / 5.0
cdef double E1 = 25.0 / 216.0 - 16.0 / 135.0
cdef double E3 = 1408.0 / 2565.0 - 6656.0 / 12825.0
cdef double E4 = 2197.0 / 4104.0 - 28561.0 / 56430.0
cdef double E5 = -1.0 / 5.0 + 9.0 / 50.0
cdef double E6 = -2.0 / 55.0


cdef inline void _rhs(const double* p, double t, double x1, double x3, double* f1, double* f3) noexcept nogil:
    cdef double kp = p[0], ki = p[1], x2m = p[2], r = p[3], L = p[4], wg = p[5], dwg = p[6]
    cdef double dt = t - p[7]
    cdef double did = p[10], diq = p[11], dvf = p[13]
    cdef double id_c = p[8] + did * dt
    cdef double iq_c = p[9] + diq * dt
    cdef double vf = p[12] + dvf * dt
    cdef double m_eq = 1.0 - kp * L * id_c
    cdef double t_m = kp * (r * diq + L * did * wg + L * id_c * dwg) + ki * (r * iq_c + L * diq + L * id_c * wg)
    cdef double t_e = (ki * vf + kp * dvf) * sin(x1) + m_eq * dwg
    cdef double d_eq = kp * vf * cos(x1) - kp * L * did - ki * L * id_c
    cdef double x2 = x2m * tanh(x3 / x2m)
    f1[0] = x2
    f3[0] = (t_m - t_e - d_eq * x2) / m_eq


cdef inline void _srhs(const double* p, double t, double x1, double x3, double sign,
                       double* f1, double* f3) noexcept nogil:
    _rhs(p, t, x1, x3, f1, f3)
    f1[0] = sign * f1[0]
    f3[0] = sign * f3[0]


cdef inline void _rkf45_step(const double* p, double t, double x1, double x3, double h, double sign,
                             bint frozen, double tc, double* out) noexcept nogil:
    cdef double k11, k13, k21, k23, k31, k33, k41, k43, k51, k53, k61, k63
    _srhs(p, tc if frozen else t, x1, x3, sign, &k11, &k13)
    _srhs(p, tc if frozen else t + C2 * h, x1 + h * A21 * k11, x3 + h * A21 * k13, sign, &k21, &k23)
    _srhs(p, tc if frozen else t + C3 * h, x1 + h * (A31 * k11 + A32 * k21),
          x3 + h * (A31 * k13 + A32 * k23), sign, &k31, &k33)
    _srhs(p, tc if frozen else t + C4 * h, x1 + h * (A41 * k11 + A42 * k21 + A43 * k31),
          x3 + h * (A41 * k13 + A42 * k23 + A43 * k33), sign, &k41, &k43)
    _srhs(p, tc if frozen else t + C5 * h, x1 + h * (A51 * k11 + A52 * k21 + A53 * k31 + A54 * k41),
          x3 + h * (A51 * k13 + A52 * k23 + A53 * k33 + A54 * k43), sign, &k51, &k53)
    _srhs(p, tc if frozen else t + C6 * h,
          x1 + h * (A61 * k11 + A62 * k21 + A63 * k31 + A64 * k41 + A65 * k51),
          x3 + h * (A61 * k13 + A62 * k23 + A63 * k33 + A64 * k43 + A65 * k53), sign, &k61, &k63)
    out[0] = x1 + h * (B1 * k11 + B3 * k31 + B4 * k41 + B5 * k51)
    out[1] = x3 + h * (B1 * k13 + B3 * k33 + B4 * k43 + B5 * k53)
    out[2] = h * (E1 * k11 + E3 * k31 + E4 * k41 + E5 * k51 + E6 * k61)
    out[3] = h * (E1 * k13 + E3 * k33 + E4 * k43 + E5 * k53 + E6 * k63)


cdef inline double _err_norm(double x1, double x3, double y1, double y3, double e1, double e3,
                             double rtol, double atol) noexcept nogil:
    cdef double n1 = fabs(e1) / (atol + rtol * (fabs(x1) if fabs(x1) > fabs(y1) else fabs(y1)))
    cdef double n3 = fabs(e3) / (atol + rtol * (fabs(x3) if fabs(x3) > fabs(y3) else fabs(y3)))
    return n1 if n1 > n3 else n3


cdef inline int _check(double y1, double y3, double escape, double s1, double s3) noexcept nogil:
    if not (isfinite(y1) and isfinite(y3)):
        return NON_FINITE
    if fabs(y1) / s1 > escape or fabs(y3) / s3 > escape:
        return ESCAPED
    return OK


cdef inline double _grow(double h, double errn) noexcept nogil:
    cdef double f
    if errn == 0.0:
        return h * 5.0
    f = 0.9 * pow(errn, -0.2)
    if f < 0.2:
        f = 0.2
    if f > 5.0:
        f = 5.0
    return h * f


cdef inline double _shrink(double h, double errn) noexcept nogil:
    cdef double f = 0.9 * pow(errn, -0.25)
    if f < 0.2:
        f = 0.2
    return h * f


cdef struct Buffer:
    double* t
    double* x
    double* f
    Py_ssize_t n
    Py_ssize_t cap


cdef int _push(Buffer* b, double t, double x1, double x3, double f1, double f3) noexcept nogil:
    cdef Py_ssize_t newcap
    cdef double* nt
    cdef double* nx
    cdef double* nf
    if b.n == b.cap:
        newcap = b.cap * 2
        nt = <double*> realloc(b.t, newcap * sizeof(double))
        nx = <double*> realloc(b.x, 2 * newcap * sizeof(double))
        nf = <double*> realloc(b.f, 2 * newcap * sizeof(double))
        if nt == NULL or nx == NULL or nf == NULL:
            return -1
        b.t, b.x, b.f, b.cap = nt, nx, nf, newcap
    b.t[b.n] = t
    b.x[2 * b.n] = x1
    b.x[2 * b.n + 1] = x3
    b.f[2 * b.n] = f1
    b.f[2 * b.n + 1] = f3
    b.n += 1
    return 0


cdef _export(Buffer* b):
    cdef Py_ssize_t i
    ts = np.empty(b.n)
    xs = np.empty((b.n, 2))
    fs = np.empty((b.n, 2))
    cdef double[::1] tv = ts
    cdef double[:, ::1] xv = xs
    cdef double[:, ::1] fv = fs
    for i in range(b.n):
        tv[i] = b.t[i]
        xv[i, 0] = b.x[2 * i]
        xv[i, 1] = b.x[2 * i + 1]
        fv[i, 0] = b.f[2 * i]
        fv[i, 1] = b.f[2 * i + 1]
    return ts, xs, fs


cdef void _init(Buffer* b) noexcept nogil:
    b.cap = 256
    b.n = 0
    b.t = <double*> malloc(b.cap * sizeof(double))
    b.x = <double*> malloc(2 * b.cap * sizeof(double))
    b.f = <double*> malloc(2 * b.cap * sizeof(double))


cdef void _release(Buffer* b) noexcept nogil:
    free(b.t)
    free(b.x)
    free(b.f)


def rhs(double[::1] p, double t, double x1, double x3):
    cdef double f1, f3
    _rhs(&p[0], t, x1, x3, &f1, &f3)
    return f1, f3


def rkf45(double[::1] p, double t0, double t1, double x1, double x3, double sign, double h0,
          double rtol, double atol, double hmin, double hmax, double escape, double s1, double s3,
          bint frozen):
    cdef Buffer b
    cdef double out[4]
    cdef double t = t0, tc = t0, h, errn, f1, f3, max_err = 0.0
    cdef Py_ssize_t n_acc = 0, n_rej = 0
    cdef int status = OK
    cdef bint last
    cdef const double* pp = &p[0]
    _init(&b)
    if b.t == NULL or b.x == NULL or b.f == NULL:
        _release(&b)
        raise MemoryError()
    with nogil:
        _srhs(pp, t0, x1, x3, sign, &f1, &f3)
        _push(&b, t0, x1, x3, f1, f3)
        h = h0
        if hmax < h:
            h = hmax
        if t1 - t0 < h:
            h = t1 - t0
        while t < t1:
            last = False
            if t + h >= t1 - 1e-12 * (fabs(t1) if fabs(t1) > 1.0 else 1.0):
                h = t1 - t
                last = True
            _rkf45_step(pp, t, x1, x3, h, sign, frozen, tc, out)
            errn = _err_norm(x1, x3, out[0], out[1], out[2], out[3], rtol, atol)
            if errn != errn:
                status = NON_FINITE
                break
            if errn <= 1.0:
                t = t1 if last else t + h
                x1 = out[0]
                x3 = out[1]
                n_acc += 1
                if errn > max_err:
                    max_err = errn
                status = _check(x1, x3, escape, s1, s3)
                _srhs(pp, tc if frozen else t, x1, x3, sign, &f1, &f3)
                if _push(&b, t, x1, x3, f1, f3) != 0:
                    status = -1
                    break
                if status != OK:
                    break
                h = _grow(h, errn)
                if h > hmax:
                    h = hmax
            else:
                n_rej += 1
                h = _shrink(h, errn)
                if h < hmin:
                    status = STEP_FAILURE
                    break
    if status == -1:
        _release(&b)
        raise MemoryError()
    ts, xs, fs = _export(&b)
    _release(&b)
    return ts, xs, fs, n_acc, n_rej, max_err, status


def rk4(double[::1] p, double t0, double t1, double x1, double x3, double sign, double h,
        double escape, double s1, double s3, bint frozen):
    cdef Buffer b
    cdef double tc = t0, t = t0, t_next, hk, f1, f3
    cdef double a1, a3, b1, b3, c1, c3, d1, d3
    cdef Py_ssize_t n = <Py_ssize_t> ceil((t1 - t0) / h - 1e-9), k
    cdef int status = OK
    cdef const double* pp = &p[0]
    if n < 1:
        n = 1
    _init(&b)
    if b.t == NULL or b.x == NULL or b.f == NULL:
        _release(&b)
        raise MemoryError()
    with nogil:
        _srhs(pp, t0, x1, x3, sign, &f1, &f3)
        _push(&b, t0, x1, x3, f1, f3)
        for k in range(n):
            t_next = t1 if k == n - 1 else t0 + (k + 1) * h
            hk = t_next - t
            _srhs(pp, tc if frozen else t, x1, x3, sign, &a1, &a3)
            _srhs(pp, tc if frozen else t + 0.5 * hk, x1 + 0.5 * hk * a1, x3 + 0.5 * hk * a3, sign, &b1, &b3)
            _srhs(pp, tc if frozen else t + 0.5 * hk, x1 + 0.5 * hk * b1, x3 + 0.5 * hk * b3, sign, &c1, &c3)
            _srhs(pp, tc if frozen else t_next, x1 + hk * c1, x3 + hk * c3, sign, &d1, &d3)
            x1 = x1 + hk / 6.0 * (a1 + 2.0 * b1 + 2.0 * c1 + d1)
            x3 = x3 + hk / 6.0 * (a3 + 2.0 * b3 + 2.0 * c3 + d3)
            t = t_next
            status = _check(x1, x3, escape, s1, s3)
            _srhs(pp, tc if frozen else t, x1, x3, sign, &f1, &f3)
            if _push(&b, t, x1, x3, f1, f3) != 0:
                status = -1
                break
            if status != OK:
                break
    if status == -1:
        _release(&b)
        raise MemoryError()
    ts, xs, fs = _export(&b)
    _release(&b)
    return ts, xs, fs, n, 0, 0.0, status


cdef int _endpoint(const double* p, double x1, double x3, double duration, double sign, double h0,
                   double rtol, double atol, double hmin, double hmax, double escape,
                   double s1, double s3, double* y) noexcept nogil:
    cdef double out[4]
    cdef double tc = p[7], t = 0.0, h = h0, errn
    cdef bint last
    cdef int st
    if hmax < h:
        h = hmax
    if duration < h:
        h = duration
    y[0] = x1
    y[1] = x3
    while t < duration:
        last = False
        if t + h >= duration - 1e-12 * (duration if duration > 1.0 else 1.0):
            h = duration - t
            last = True
        _rkf45_step(p, t, y[0], y[1], h, sign, True, tc, out)
        errn = _err_norm(y[0], y[1], out[0], out[1], out[2], out[3], rtol, atol)
        if errn != errn:
            return NON_FINITE
        if errn <= 1.0:
            t = duration if last else t + h
            y[0] = out[0]
            y[1] = out[1]
            st = _check(y[0], y[1], escape, s1, s3)
            if st != OK:
                return st
            h = _grow(h, errn)
            if h > hmax:
                h = hmax
        else:
            h = _shrink(h, errn)
            if h < hmin:
                return STEP_FAILURE
    return OK


def endpoints(double[::1] p, X, double duration, double sign, double h0, double rtol, double atol,
              double hmin, double hmax, double escape, double s1, double s3):
    cdef double[:, ::1] xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef Py_ssize_t i, n = xv.shape[0]
    out = np.empty((n, 2))
    status = np.zeros(n, dtype=np.int64)
    cdef double[:, ::1] ov = out
    cdef cnp.int64_t[::1] sv = status
    cdef double y[2]
    cdef const double* pp = &p[0]
    with nogil:
        for i in range(n):
            if duration <= 0.0:
                ov[i, 0] = xv[i, 0]
                ov[i, 1] = xv[i, 1]
                continue
            sv[i] = _endpoint(pp, xv[i, 0], xv[i, 1], duration, sign, h0, rtol, atol, hmin, hmax,
                              escape, s1, s3, y)
            ov[i, 0] = y[0]
            ov[i, 1] = y[1]
    return out, status


cdef double _settle(const double* p, double x1, double x3, double e1, double e3, double radius,
                    double dwell, double horizon, double h0, double rtol, double atol, double hmin,
                    double hmax, double escape, double s1, double s3) noexcept nogil:
    cdef double out[4]
    cdef double tc = p[7], t = 0.0, h = h0, errn, d1, d3, entry
    cdef double r2 = radius * radius
    cdef bint last
    if hmax < h:
        h = hmax
    if horizon < h:
        h = horizon
    d1 = (x1 - e1) / s1
    d3 = (x3 - e3) / s3
    entry = 0.0 if d1 * d1 + d3 * d3 <= r2 else -1.0
    while t < horizon:
        last = False
        if t + h >= horizon - 1e-12 * (horizon if horizon > 1.0 else 1.0):
            h = horizon - t
            last = True
        _rkf45_step(p, t, x1, x3, h, 1.0, True, tc, out)
        errn = _err_norm(x1, x3, out[0], out[1], out[2], out[3], rtol, atol)
        if errn != errn:
            return -1.0
        if errn <= 1.0:
            t = horizon if last else t + h
            x1 = out[0]
            x3 = out[1]
            if _check(x1, x3, escape, s1, s3) != OK:
                return -1.0
            d1 = (x1 - e1) / s1
            d3 = (x3 - e3) / s3
            if d1 * d1 + d3 * d3 <= r2:
                if entry < 0.0:
                    entry = t
                elif t - entry >= dwell:
                    return entry
            else:
                entry = -1.0
            h = _grow(h, errn)
            if h > hmax:
                h = hmax
        else:
            h = _shrink(h, errn)
            if h < hmin:
                return -1.0
    return -1.0


def settle(double[::1] p, double x1, double x3, double e1, double e3, double radius, double dwell,
           double horizon, double h0, double rtol, double atol, double hmin, double hmax,
           double escape, double s1, double s3):
    cdef double r
    with nogil:
        r = _settle(&p[0], x1, x3, e1, e3, radius, dwell, horizon, h0, rtol, atol, hmin, hmax,
                    escape, s1, s3)
    return r


def settle_many(double[::1] p, X, double e1, double e3, double radius, double dwell, double horizon,
                double h0, double rtol, double atol, double hmin, double hmax, double escape,
                double s1, double s3):
    cdef double[:, ::1] xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef Py_ssize_t i, n = xv.shape[0]
    out = np.empty(n)
    cdef double[::1] ov = out
    cdef const double* pp = &p[0]
    with nogil:
        for i in range(n):
            ov[i] = _settle(pp, xv[i, 0], xv[i, 1], e1, e3, radius, dwell, horizon, h0, rtol, atol,
                            hmin, hmax, escape, s1, s3)
    return out
