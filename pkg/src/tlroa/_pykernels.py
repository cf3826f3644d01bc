"""Pure-Python integration kernels.

Reference implementation of the hot loops; ``_ckernels.pyx`` mirrors it
operation for operation. Parameter vector layout is documented in
:func:`tlroa.model.segment_params`.

Status codes: 0 ok, 1 step-size underflow, 2 non-finite state, 3 escape.
"""

import math

import numpy as np

OK, STEP_FAILURE, NON_FINITE, ESCAPED = 0, 1, 2, 3

# Fehlberg 4(5) tableau
_A21 = 1.0 / 4.0
_A31, _A32 = 3.0 / 32.0, 9.0 / 32.0
_A41, _A42, _A43 = 1932.0 / 2197.0, -7200.0 / 2197.0, 7296.0 / 2197.0
_A51, _A52, _A53, _A54 = 439.0 / 216.0, -8.0, 3680.0 / 513.0, -845.0 / 4104.0
_A61, _A62, _A63, _A64, _A65 = -8.0 / 27.0, 2.0, -3544.0 / 2565.0, 1859.0 / 4104.0, -11.0 / 40.0
_C2, _C3, _C4, _C5, _C6 = 1.0 / 4.0, 3.0 / 8.0, 12.0 / 13.0, 1.0, 1.0 / 2.0
_B1, _B3, _B4, _B5 = 25.0 / 216.0, 1408.0 / 2565.0, 2197.0 / 4104.0, -1.0 / 5.0
_E1, _E3, _E4, _E5, _E6 = (
    25.0 / 216.0 - 16.0 / 135.0,
    1408.0 / 2565.0 - 6656.0 / 12825.0,
    2197.0 / 4104.0 - 28561.0 / 56430.0,
    -1.0 / 5.0 + 9.0 / 50.0,
    -2.0 / 55.0,
)

BACKEND = "python"


def rhs(p, t, x1, x3):
    kp, ki, x2m, r, L, wg, dwg, ts, id0, iq0, did, diq, vf0, dvf = p
    dt = t - ts
    id_c = id0 + did * dt
    iq_c = iq0 + diq * dt
    vf = vf0 + dvf * dt
    m_eq = 1.0 - kp * L * id_c
    t_m = kp * (r * diq + L * did * wg + L * id_c * dwg) + ki * (r * iq_c + L * diq + L * id_c * wg)
    t_e = (ki * vf + kp * dvf) * math.sin(x1) + m_eq * dwg
    d_eq = kp * vf * math.cos(x1) - kp * L * did - ki * L * id_c
    x2 = x2m * math.tanh(x3 / x2m)
    return x2, (t_m - t_e - d_eq * x2) / m_eq


def _rkf45_step(p, t, x1, x3, h, sign, frozen, tc):
    c = tc if frozen else t
    k11, k13 = rhs(p, c, x1, x3)
    k11 *= sign; k13 *= sign
    c = tc if frozen else t + _C2 * h
    k21, k23 = rhs(p, c, x1 + h * _A21 * k11, x3 + h * _A21 * k13)
    k21 *= sign; k23 *= sign
    c = tc if frozen else t + _C3 * h
    k31, k33 = rhs(p, c, x1 + h * (_A31 * k11 + _A32 * k21), x3 + h * (_A31 * k13 + _A32 * k23))
    k31 *= sign; k33 *= sign
    c = tc if frozen else t + _C4 * h
    k41, k43 = rhs(p, c, x1 + h * (_A41 * k11 + _A42 * k21 + _A43 * k31),
                   x3 + h * (_A41 * k13 + _A42 * k23 + _A43 * k33))
    k41 *= sign; k43 *= sign
    c = tc if frozen else t + _C5 * h
    k51, k53 = rhs(p, c, x1 + h * (_A51 * k11 + _A52 * k21 + _A53 * k31 + _A54 * k41),
                   x3 + h * (_A51 * k13 + _A52 * k23 + _A53 * k33 + _A54 * k43))
    k51 *= sign; k53 *= sign
    c = tc if frozen else t + _C6 * h
    k61, k63 = rhs(p, c, x1 + h * (_A61 * k11 + _A62 * k21 + _A63 * k31 + _A64 * k41 + _A65 * k51),
                   x3 + h * (_A61 * k13 + _A62 * k23 + _A63 * k33 + _A64 * k43 + _A65 * k53))
    k61 *= sign; k63 *= sign
    y1 = x1 + h * (_B1 * k11 + _B3 * k31 + _B4 * k41 + _B5 * k51)
    y3 = x3 + h * (_B1 * k13 + _B3 * k33 + _B4 * k43 + _B5 * k53)
    e1 = h * (_E1 * k11 + _E3 * k31 + _E4 * k41 + _E5 * k51 + _E6 * k61)
    e3 = h * (_E1 * k13 + _E3 * k33 + _E4 * k43 + _E5 * k53 + _E6 * k63)
    return y1, y3, e1, e3


def _err_norm(x1, x3, y1, y3, e1, e3, rtol, atol):
    n1 = abs(e1) / (atol + rtol * max(abs(x1), abs(y1)))
    n3 = abs(e3) / (atol + rtol * max(abs(x3), abs(y3)))
    return n1 if n1 > n3 else n3


def _check(y1, y3, escape, s1, s3):
    if not (math.isfinite(y1) and math.isfinite(y3)):
        return NON_FINITE
    if abs(y1) / s1 > escape or abs(y3) / s3 > escape:
        return ESCAPED
    return OK


def _grow(h, errn):
    if errn == 0.0:
        return h * 5.0
    return h * min(5.0, max(0.2, 0.9 * errn ** -0.2))


def rkf45(p, t0, t1, x1, x3, sign, h0, rtol, atol, hmin, hmax, escape, s1, s3, frozen):
    """Adaptive Fehlberg 4(5) from ``t0`` to ``t1`` storing accepted steps.

    Returns ``(ts, xs, fs, n_accept, n_reject, max_err, status)`` where
    ``fs`` holds the (signed) vector field at each stored point.
    """
    tc = t0
    ts = [t0]
    xs = [(x1, x3)]
    f1, f3 = rhs(p, t0, x1, x3)
    fs = [(sign * f1, sign * f3)]
    n_acc = n_rej = 0
    max_err = 0.0
    status = OK
    t = t0
    h = min(h0, hmax, t1 - t0)
    while t < t1:
        last = False
        if t + h >= t1 - 1e-12 * max(1.0, abs(t1)):
            h = t1 - t
            last = True
        y1, y3, e1, e3 = _rkf45_step(p, t, x1, x3, h, sign, frozen, tc)
        errn = _err_norm(x1, x3, y1, y3, e1, e3, rtol, atol)
        if errn != errn:
            status = NON_FINITE
            break
        if errn <= 1.0:
            t = t1 if last else t + h
            x1, x3 = y1, y3
            n_acc += 1
            if errn > max_err:
                max_err = errn
            status = _check(x1, x3, escape, s1, s3)
            f1, f3 = rhs(p, tc if frozen else t, x1, x3)
            ts.append(t)
            xs.append((x1, x3))
            fs.append((sign * f1, sign * f3))
            if status != OK:
                break
            h = min(_grow(h, errn), hmax)
        else:
            n_rej += 1
            h = h * max(0.2, 0.9 * errn ** -0.25)
            if h < hmin:
                status = STEP_FAILURE
                break
    return (np.array(ts), np.array(xs, dtype=np.float64).reshape(-1, 2),
            np.array(fs, dtype=np.float64).reshape(-1, 2), n_acc, n_rej, max_err, status)


def rk4(p, t0, t1, x1, x3, sign, h, escape, s1, s3, frozen):
    """Classic fixed-step RK4; the last step is shortened to land on ``t1``."""
    tc = t0
    n = max(1, int(math.ceil((t1 - t0) / h - 1e-9)))
    ts = [t0]
    xs = [(x1, x3)]
    f1, f3 = rhs(p, t0, x1, x3)
    fs = [(sign * f1, sign * f3)]
    status = OK
    t = t0
    for k in range(n):
        t_next = t1 if k == n - 1 else t0 + (k + 1) * h
        hk = t_next - t
        a1, a3 = rhs(p, tc if frozen else t, x1, x3)
        a1 *= sign; a3 *= sign
        b1, b3 = rhs(p, tc if frozen else t + 0.5 * hk, x1 + 0.5 * hk * a1, x3 + 0.5 * hk * a3)
        b1 *= sign; b3 *= sign
        c1, c3 = rhs(p, tc if frozen else t + 0.5 * hk, x1 + 0.5 * hk * b1, x3 + 0.5 * hk * b3)
        c1 *= sign; c3 *= sign
        d1, d3 = rhs(p, tc if frozen else t_next, x1 + hk * c1, x3 + hk * c3)
        d1 *= sign; d3 *= sign
        x1 = x1 + hk / 6.0 * (a1 + 2.0 * b1 + 2.0 * c1 + d1)
        x3 = x3 + hk / 6.0 * (a3 + 2.0 * b3 + 2.0 * c3 + d3)
        t = t_next
        status = _check(x1, x3, escape, s1, s3)
        f1, f3 = rhs(p, tc if frozen else t, x1, x3)
        ts.append(t)
        xs.append((x1, x3))
        fs.append((sign * f1, sign * f3))
        if status != OK:
            break
    return (np.array(ts), np.array(xs, dtype=np.float64).reshape(-1, 2),
            np.array(fs, dtype=np.float64).reshape(-1, 2), n, 0, 0.0, status)


def _endpoint(p, x1, x3, duration, sign, h0, rtol, atol, hmin, hmax, escape, s1, s3):
    tc = p[7]
    t = 0.0
    h = min(h0, hmax, duration)
    while t < duration:
        last = False
        if t + h >= duration - 1e-12 * max(1.0, duration):
            h = duration - t
            last = True
        y1, y3, e1, e3 = _rkf45_step(p, t, x1, x3, h, sign, True, tc)
        errn = _err_norm(x1, x3, y1, y3, e1, e3, rtol, atol)
        if errn != errn:
            return x1, x3, NON_FINITE
        if errn <= 1.0:
            t = duration if last else t + h
            x1, x3 = y1, y3
            st = _check(x1, x3, escape, s1, s3)
            if st != OK:
                return x1, x3, st
            h = min(_grow(h, errn), hmax)
        else:
            h = h * max(0.2, 0.9 * errn ** -0.25)
            if h < hmin:
                return x1, x3, STEP_FAILURE
    return x1, x3, OK


def endpoints(p, X, duration, sign, h0, rtol, atol, hmin, hmax, escape, s1, s3):
    """Propagate every row of ``X`` for ``duration`` under frozen coefficients."""
    X = np.asarray(X, dtype=np.float64)
    out = np.empty_like(X)
    status = np.zeros(X.shape[0], dtype=np.int64)
    for i in range(X.shape[0]):
        if duration <= 0.0:
            out[i] = X[i]
            continue
        y1, y3, st = _endpoint(p, X[i, 0], X[i, 1], duration, sign, h0, rtol, atol, hmin, hmax, escape, s1, s3)
        out[i, 0], out[i, 1], status[i] = y1, y3, st
    return out, status


def settle(p, x1, x3, e1, e3, radius, dwell, horizon, h0, rtol, atol, hmin, hmax, escape, s1, s3):
    """Forward time at which the state enters the ball around ``(e1, e3)`` and stays
    there for ``dwell``; ``-1.0`` if that does not happen within ``horizon``."""
    tc = p[7]
    t = 0.0
    h = min(h0, hmax, horizon)
    r2 = radius * radius
    d1 = (x1 - e1) / s1
    d3 = (x3 - e3) / s3
    entry = 0.0 if d1 * d1 + d3 * d3 <= r2 else -1.0
    while t < horizon:
        last = False
        if t + h >= horizon - 1e-12 * max(1.0, horizon):
            h = horizon - t
            last = True
        y1, y3, er1, er3 = _rkf45_step(p, t, x1, x3, h, 1.0, True, tc)
        errn = _err_norm(x1, x3, y1, y3, er1, er3, rtol, atol)
        if errn != errn:
            return -1.0
        if errn <= 1.0:
            t = horizon if last else t + h
            x1, x3 = y1, y3
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
            h = min(_grow(h, errn), hmax)
        else:
            h = h * max(0.2, 0.9 * errn ** -0.25)
            if h < hmin:
                return -1.0
    return -1.0


def settle_many(p, X, e1, e3, radius, dwell, horizon, h0, rtol, atol, hmin, hmax, escape, s1, s3):
    X = np.asarray(X, dtype=np.float64)
    out = np.empty(X.shape[0])
    for i in range(X.shape[0]):
        out[i] = settle(p, X[i, 0], X[i, 1], e1, e3, radius, dwell, horizon, h0, rtol, atol, hmin, hmax,
                        escape, s1, s3)
    return out
