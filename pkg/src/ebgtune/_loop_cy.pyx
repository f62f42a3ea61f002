# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled twin of ebgtune._loop_py.run_span.

Keep the arithmetic and its order byte-for-byte identical to the pure
Python kernel: the selection between the two happens at import time and
results must not depend on which one ran.
"""

REASON_END = 0
REASON_TRIGGER = 1
REASON_RESET = 2
REASON_DIVERGED = 3

cdef double _DWELL_EPS = 1e-9
cdef double _SANITY_LOW = 250.0
cdef double _SANITY_HIGH = 400.0


def run_span(
    double[::1] sv,
    double[::1] pp,
    double[::1] ev,
    double[:, ::1] trace,
    bint has_trace,
    double[::1] mb,
    Py_ssize_t n_delay,
    double kp,
    double ki,
    double kd,
    double u_min,
    double u_max,
    double load_w,
    double t_set,
    double t_z_supply,
    double theta_h,
    double theta_l,
    double t_w,
    double dt,
    Py_ssize_t i_start,
    Py_ssize_t i_end,
):
    cdef double t_t = sv[0]
    cdef double t_z = sv[1]
    cdef double valve = sv[2]
    cdef double integral = sv[3]
    cdef double prev_e = sv[4]
    cdef double c_t = pp[0]
    cdef double c_z = pp[1]
    cdef double q_max = pp[2]
    cdef double cp = pp[3]
    cdef double k_amb = pp[4]
    cdef double t_u = pp[5]
    cdef double chiller_gain = pp[6]
    cdef double valve_tau = pp[7]
    cdef double phase = ev[0]
    cdef double t_ws = ev[2]
    cdef double acc1 = ev[3]
    cdef double acc2 = ev[4]
    cdef double peak = ev[5]
    cdef double ttmin = ev[6]
    cdef double ttmax = ev[7]

    cdef int reason = REASON_END
    cdef Py_ssize_t i = i_start
    cdef double t, e, s1, s2, e_c, integral_new, u_raw, u, flux_t, flux_z
    cdef double t_meas

    while i < i_end:
        t = i * dt
        if n_delay > 0:
            t_meas = mb[i % n_delay]
            mb[i % n_delay] = t_t
        else:
            t_meas = t_t
        e = t_set - t_meas
        if phase == 0.0:
            if e > theta_h or e < theta_l:
                reason = REASON_TRIGGER
                break
        else:
            s1 = e if e >= 0.0 else -e
            s2 = t_z - t_set
            if s2 < 0.0:
                s2 = -s2
            acc1 += s1
            acc2 += s2
            if s1 > peak:
                peak = s1
            if t_t < ttmin:
                ttmin = t_t
            if t_t > ttmax:
                ttmax = t_t
            if theta_l <= e <= theta_h:
                if t_ws < 0.0:
                    t_ws = t
                if t - t_ws >= t_w - _DWELL_EPS:
                    reason = REASON_RESET
                    break
            else:
                t_ws = -1.0

        e_c = -e
        integral_new = integral + e_c * dt
        u_raw = kp * e_c + ki * integral_new + kd * (e_c - prev_e) / dt
        if not ((u_raw > u_max and e_c > 0.0) or (u_raw < u_min and e_c < 0.0)):
            integral = integral_new
        u = u_raw
        if u > u_max:
            u = u_max
        elif u < u_min:
            u = u_min
        prev_e = e_c

        if has_trace:
            trace[i, 0] = t
            trace[i, 1] = t_t
            trace[i, 2] = t_z
            trace[i, 3] = t_set
            trace[i, 4] = u
            trace[i, 5] = kp
            trace[i, 6] = ki
            trace[i, 7] = phase

        flux_t = load_w + valve * q_max * cp * (t_z - t_t) + k_amb * (t_u - t_t)
        flux_z = chiller_gain * (t_z_supply - t_z) + valve * q_max * cp * (t_t - t_z)
        t_t = t_t + dt * flux_t / c_t
        t_z = t_z + dt * flux_z / c_z
        if valve_tau > 0.0:
            valve = valve + dt / valve_tau * (u / 10.0 - valve)
        else:
            valve = u / 10.0
        if valve > 1.0:
            valve = 1.0
        elif valve < 0.0:
            valve = 0.0

        i += 1
        if not (
            _SANITY_LOW <= t_t <= _SANITY_HIGH
            and _SANITY_LOW <= t_z <= _SANITY_HIGH
        ):
            if t_t < _SANITY_LOW:
                t_t = _SANITY_LOW
            elif t_t > _SANITY_HIGH:
                t_t = _SANITY_HIGH
            if t_z < _SANITY_LOW:
                t_z = _SANITY_LOW
            elif t_z > _SANITY_HIGH:
                t_z = _SANITY_HIGH
            reason = REASON_DIVERGED
            break

    sv[0] = t_t
    sv[1] = t_z
    sv[2] = valve
    sv[3] = integral
    sv[4] = prev_e
    ev[0] = phase
    ev[2] = t_ws
    ev[3] = acc1
    ev[4] = acc2
    ev[5] = peak
    ev[6] = ttmin
    ev[7] = ttmax
    return reason, i
