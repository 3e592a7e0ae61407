"""Numba kernels for the hot loops: closed-loop simulation and Q-table fill.

These are private implementation details behind `control.closed_loop_sim`
and `policy_nn.build_qtable`.  All math is strict IEEE double precision
(fastmath is off) so results are bit-reproducible and, for the Q-table,
bit-identical to the straightforward scalar loops they mirror.
"""
import numpy as np
from numba import njit

MODEL_LINEAR = 0
MODEL_NONLINEAR = 1

FB_NONE = 0
FB_GAIN = 1
FB_NET = 2

# closed_loop_sim flags a trajectory as divergent once any state magnitude
# passes this bound (long before float overflow, so bad tuner candidates
# fail fast and with a usable failure time).
DIVERGENCE_BOUND = 1e9


@njit(cache=True, nogil=True)
def _derivative(model_kind, a, b, mM, mm, ml, mg,
                s0, s1, s2, s3, u):
    if model_kind == MODEL_LINEAR:
        d0 = a[0, 0] * s0 + a[0, 1] * s1 + a[0, 2] * s2 + a[0, 3] * s3 + b[0] * u
        d1 = a[1, 0] * s0 + a[1, 1] * s1 + a[1, 2] * s2 + a[1, 3] * s3 + b[1] * u
        d2 = a[2, 0] * s0 + a[2, 1] * s1 + a[2, 2] * s2 + a[2, 3] * s3 + b[2] * u
        d3 = a[3, 0] * s0 + a[3, 1] * s1 + a[3, 2] * s2 + a[3, 3] * s3 + b[3] * u
        return d0, d1, d2, d3
    sin_t = np.sin(s0)
    cos_t = np.cos(s0)
    a11 = mM + mm
    a12 = mm * ml * cos_t
    a21 = mm * cos_t
    a22 = mm * ml
    r1 = u + mm * ml * sin_t * s1 * s1
    r2 = mm * mg * sin_t
    det = a11 * a22 - a12 * a21
    x_dd = (r1 * a22 - a12 * r2) / det
    th_dd = (a11 * r2 - r1 * a21) / det
    return s1, th_dd, s3, x_dd


@njit(cache=True, nogil=True)
def simulate_loop(a, b, model_kind, mM, mm, ml, mg, dt, n,
                  gains, theta_ref, x_ref,
                  fb_mode, kvec, w1, b1, w2, b2,
                  in_lo, in_hi, u_lo, u_hi,
                  out):
    """Run the two-loop PID (+ optional state feedback) closed loop.

    out has shape (n+1, 7): theta, theta_dot, x, x_dot, u, u_pid, u_fb,
    sampled at t_k = k*dt.  The controller runs at the integrator rate;
    u is held over each RK4 step.  State feedback acts on the deviation
    (theta - theta_ref, theta_dot, x - x_ref, x_dot).

    Returns -1 on success, else the step index at which the state first
    became non-finite or exceeded DIVERGENCE_BOUND.
    """
    kpt, kit, kdt, kpx, kix, kdx = gains[0], gains[1], gains[2], gains[3], gains[4], gains[5]
    s0 = 0.0
    s1 = 0.0
    s2 = 0.0
    s3 = 0.0
    int_t = 0.0
    int_x = 0.0
    pe_t = 0.0
    pe_x = 0.0
    n_hidden = w1.shape[0]
    h = np.empty(n_hidden)
    for k in range(n + 1):
        e_t = theta_ref[k] - s0
        e_x = x_ref[k] - s2
        if k == 0:
            d_t = 0.0
            d_x = 0.0
        else:
            int_t += dt * (e_t + pe_t) / 2.0
            int_x += dt * (e_x + pe_x) / 2.0
            d_t = (e_t - pe_t) / dt
            d_x = (e_x - pe_x) / dt
        pe_t = e_t
        pe_x = e_x
        u_pid = (kpt * e_t + kit * int_t + kdt * d_t
                 + kpx * e_x + kix * int_x + kdx * d_x)

        u_fb = 0.0
        if fb_mode != FB_NONE:
            dev0 = s0 - theta_ref[k]
            dev1 = s1
            dev2 = s2 - x_ref[k]
            dev3 = s3
            if fb_mode == FB_GAIN:
                u_fb = -(kvec[0] * dev0 + kvec[1] * dev1
                         + kvec[2] * dev2 + kvec[3] * dev3)
            else:
                # clamp into the training box, scale to [-1, 1], tanh net
                z0 = min(max(dev0, in_lo[0]), in_hi[0])
                z1 = min(max(dev1, in_lo[1]), in_hi[1])
                z2 = min(max(dev2, in_lo[2]), in_hi[2])
                z3 = min(max(dev3, in_lo[3]), in_hi[3])
                z0 = 2.0 * (z0 - in_lo[0]) / (in_hi[0] - in_lo[0]) - 1.0
                z1 = 2.0 * (z1 - in_lo[1]) / (in_hi[1] - in_lo[1]) - 1.0
                z2 = 2.0 * (z2 - in_lo[2]) / (in_hi[2] - in_lo[2]) - 1.0
                z3 = 2.0 * (z3 - in_lo[3]) / (in_hi[3] - in_lo[3]) - 1.0
                acc = b2[0]
                for i in range(n_hidden):
                    zi = w1[i, 0] * z0 + w1[i, 1] * z1 + w1[i, 2] * z2 + w1[i, 3] * z3 + b1[i]
                    acc += w2[i] * np.tanh(zi)
                u_fb = min(max(acc, u_lo), u_hi)

        u = u_pid + u_fb
        out[k, 0] = s0
        out[k, 1] = s1
        out[k, 2] = s2
        out[k, 3] = s3
        out[k, 4] = u
        out[k, 5] = u_pid
        out[k, 6] = u_fb

        if k < n:
            k10, k11, k12, k13 = _derivative(model_kind, a, b, mM, mm, ml, mg, s0, s1, s2, s3, u)
            a0 = s0 + dt / 2.0 * k10
            a1 = s1 + dt / 2.0 * k11
            a2 = s2 + dt / 2.0 * k12
            a3 = s3 + dt / 2.0 * k13
            k20, k21, k22, k23 = _derivative(model_kind, a, b, mM, mm, ml, mg, a0, a1, a2, a3, u)
            a0 = s0 + dt / 2.0 * k20
            a1 = s1 + dt / 2.0 * k21
            a2 = s2 + dt / 2.0 * k22
            a3 = s3 + dt / 2.0 * k23
            k30, k31, k32, k33 = _derivative(model_kind, a, b, mM, mm, ml, mg, a0, a1, a2, a3, u)
            a0 = s0 + dt * k30
            a1 = s1 + dt * k31
            a2 = s2 + dt * k32
            a3 = s3 + dt * k33
            k40, k41, k42, k43 = _derivative(model_kind, a, b, mM, mm, ml, mg, a0, a1, a2, a3, u)
            s0 = s0 + dt / 6.0 * (k10 + 2.0 * k20 + 2.0 * k30 + k40)
            s1 = s1 + dt / 6.0 * (k11 + 2.0 * k21 + 2.0 * k31 + k41)
            s2 = s2 + dt / 6.0 * (k12 + 2.0 * k22 + 2.0 * k32 + k42)
            s3 = s3 + dt / 6.0 * (k13 + 2.0 * k23 + 2.0 * k33 + k43)
            bound = DIVERGENCE_BOUND
            if (not (np.isfinite(s0) and np.isfinite(s1) and np.isfinite(s2) and np.isfinite(s3))
                    or abs(s0) > bound or abs(s1) > bound
                    or abs(s2) > bound or abs(s3) > bound):
                return k + 1
    return -1


@njit(cache=True, nogil=True)
def one_step_cost_scalar(state, u, a, b, dt, q_nn, r_nn):
    """Quadratic one-step-ahead cost with a forward-Euler state prediction.

    Plain ordered loops so the result is bit-identical to the obvious
    hand-written evaluation.
    """
    x1 = np.empty(4)
    for i in range(4):
        acc = 0.0
        for j in range(4):
            acc += a[i, j] * state[j]
        acc += b[i] * u
        x1[i] = state[i] + dt * acc
    cost = 0.0
    for i in range(4):
        for j in range(4):
            cost += x1[i] * q_nn[i, j] * x1[j]
    return cost + r_nn * u * u


@njit(cache=True, nogil=True)
def qtable_fill(states, actions, a, b, dt, q_nn, r_nn, out):
    """Fill out[ai, si] = one_step_cost_scalar(states[si], actions[ai], ...)."""
    for ai in range(actions.shape[0]):
        u = actions[ai]
        for si in range(states.shape[0]):
            out[ai, si] = one_step_cost_scalar(states[si], u, a, b, dt, q_nn, r_nn)
