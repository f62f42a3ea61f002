"""Pure-Python closed-loop stepping kernel.

``run_span`` advances the fused PID + plant + event state machine from one
sample index to the next boundary that needs a decision from the
orchestrator (event trigger, event reset, divergence, or span end).  The
compiled twin in ``_loop_cy.pyx`` implements the identical arithmetic in
the same order; both must stay in lockstep.

Array layouts (float64):
  sv[5]: t_t, t_z, valve_pos, integral, prev_error
  pp[8]: c_t, c_z, q_max, cp, k_amb, t_ambient, chiller_gain, valve_tau
  ev[8]: phase, t_start, t_within_since (-1 = unset), accum_s1, accum_s2,
         peak, t_t_min, t_t_max
  mb[n_delay]: measurement ring buffer for the sensor transport delay;
         slot i % n_delay holds T_T from n_delay samples ago (the
         controller and trigger see this delayed value; n_delay = 0
         bypasses the buffer)
  trace[n, 8]: t, t_t, t_z, t_set, u, kp, ki, event_flag  (row per sample)
"""

REASON_END = 0
REASON_TRIGGER = 1
REASON_RESET = 2
REASON_DIVERGED = 3

PHASE_IDLE = 0.0
PHASE_OPEN = 1.0

_DWELL_EPS = 1e-9
_SANITY_LOW = 250.0
_SANITY_HIGH = 400.0


def run_span(
    sv,
    pp,
    ev,
    trace,
    has_trace,
    mb,
    n_delay,
    kp,
    ki,
    kd,
    u_min,
    u_max,
    load_w,
    t_set,
    t_z_supply,
    theta_h,
    theta_l,
    t_w,
    dt,
    i_start,
    i_end,
):
    t_t = sv[0]
    t_z = sv[1]
    valve = sv[2]
    integral = sv[3]
    prev_e = sv[4]
    c_t = pp[0]
    c_z = pp[1]
    q_max = pp[2]
    cp = pp[3]
    k_amb = pp[4]
    t_u = pp[5]
    chiller_gain = pp[6]
    valve_tau = pp[7]
    phase = ev[0]
    t_ws = ev[2]
    acc1 = ev[3]
    acc2 = ev[4]
    peak = ev[5]
    ttmin = ev[6]
    ttmax = ev[7]

    reason = REASON_END
    i = i_start
    while i < i_end:
        t = i * dt
        if n_delay > 0:
            t_meas = mb[i % n_delay]
            mb[i % n_delay] = t_t
        else:
            t_meas = t_t
        e = t_set - t_meas
        if phase == PHASE_IDLE:
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

        # PID with conditional-integration anti-windup
        e_c = -e
        integral_new = integral + e_c * dt
        u_raw = kp * e_c + ki * integral_new + kd * (e_c - prev_e) / dt
        if not (
            (u_raw > u_max and e_c > 0.0) or (u_raw < u_min and e_c < 0.0)
        ):
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

        # explicit-Euler plant update, fluxes at the pre-step state
        flux_t = (
            load_w
            + valve * q_max * cp * (t_z - t_t)
            + k_amb * (t_u - t_t)
        )
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
