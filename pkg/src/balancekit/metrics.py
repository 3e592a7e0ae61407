"""Step-response characteristics and the tuning objective functions.

All time integrals use the trapezoidal rule on the trace's sampling grid.
Four objective kinds are supported: plain integrated squared error (ISE),
ISE plus integrated absolute error (ISE-AB), ISE plus a settling-time
penalty on the cart channel (ISE-ST), and ISE plus an overshoot penalty in
percent (ISE-OS).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .control import SimTrace

OBJECTIVE_KINDS = ("ise", "ise-ab", "ise-st", "ise-os")

# Cost assigned when a run cannot be scored (divergence, or an undefined
# settling time / overshoot under the ST/OS kinds).  Finite so the tuner
# can always compare candidates.
PENALTY_COST = 1e6

# Objective weights as published for each criterion.
_DEFAULT_WEIGHTS = {
    "ise": dict(w_theta=0.5, w_x=0.5),
    "ise-ab": dict(w_theta=0.25, w_x=0.25, w_theta_abs=0.25, w_x_abs=0.25),
    "ise-st": dict(w_theta=0.5, w_x=0.5, w_settle=0.1),
    "ise-os": dict(w_theta=0.5, w_x=0.5, w_overshoot=0.1),
}


class MetricsUndefinedError(ValueError):
    """Step metrics are undefined (zero step amplitude)."""


@dataclass(frozen=True)
class StepMetrics:
    """Step-response summary for one channel.

    rise_time and settling_time are None when undefined (the signal never
    reaches the crossing levels, or never returns to the band within the
    trace).  overshoot is in percent of the step amplitude, floored at 0.
    """

    rise_time: Optional[float]
    settling_time: Optional[float]
    overshoot: float
    steady_state_error: float

    def __post_init__(self):
        if self.overshoot < 0.0:
            raise ValueError("overshoot must be >= 0")
        if self.rise_time is not None and self.settling_time is not None:
            if self.rise_time > self.settling_time + 1e-12:
                raise ValueError("rise_time must not exceed settling_time")


@dataclass(frozen=True)
class ObjectiveSpec:
    """Objective kind plus its weights; use `ObjectiveSpec.default(kind)`
    for the published weight values."""

    kind: str = "ise"
    w_theta: float = 0.5
    w_x: float = 0.5
    w_theta_abs: float = 0.0
    w_x_abs: float = 0.0
    w_settle: float = 0.0
    w_overshoot: float = 0.0

    def __post_init__(self):
        if self.kind not in OBJECTIVE_KINDS:
            raise ValueError(f"kind must be one of {OBJECTIVE_KINDS}, got {self.kind!r}")
        for name in ("w_theta", "w_x", "w_theta_abs", "w_x_abs", "w_settle", "w_overshoot"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0.0):
                raise ValueError(f"{name} must be a nonnegative finite weight, got {v!r}")

    @classmethod
    def default(cls, kind: str) -> "ObjectiveSpec":
        if kind not in _DEFAULT_WEIGHTS:
            raise ValueError(f"kind must be one of {OBJECTIVE_KINDS}, got {kind!r}")
        return cls(kind=kind, **_DEFAULT_WEIGHTS[kind])


def _first_crossing(t: np.ndarray, y: np.ndarray, level: float) -> Optional[float]:
    """First time y reaches `level`, linearly interpolated between samples."""
    idx = np.nonzero(y >= level)[0]
    if idx.size == 0:
        return None
    i = int(idx[0])
    if i == 0:
        return float(t[0])
    y0, y1 = y[i - 1], y[i]
    frac = (level - y0) / (y1 - y0)
    return float(t[i - 1] + frac * (t[i] - t[i - 1]))


def step_metrics(trace: SimTrace, channel: str = "x", band: float = 0.02) -> StepMetrics:
    """Rise time (10%..90%), settling time (last exit from the +-band tube),
    overshoot (% of amplitude), and final tracking error for one channel.

    The channel's reference must be a step: constant after t = 0.  The
    step amplitude is the final reference minus the channel's initial
    value; a zero amplitude raises MetricsUndefinedError.
    """
    if len(trace) == 0:
        raise ValueError("trace is empty")
    if channel == "x":
        y = trace.x
        ref = trace.x_ref
    elif channel == "theta":
        y = trace.theta
        ref = trace.theta_ref
    else:
        raise ValueError(f"channel must be 'x' or 'theta', got {channel!r}")
    if not (0.0 < band < 1.0):
        raise ValueError(f"band must be a fraction in (0, 1), got {band!r}")

    t = trace.t
    ref_final = float(ref[-1])
    amplitude = ref_final - float(y[0])
    if amplitude == 0.0:
        raise MetricsUndefinedError("zero-amplitude step: metrics undefined")

    # work with the normalized rise 0 -> 1 so falling steps behave the same
    z = (y - y[0]) / amplitude
    t10 = _first_crossing(t, z, 0.1)
    t90 = _first_crossing(t, z, 0.9)
    rise = None if (t10 is None or t90 is None) else max(0.0, t90 - t10)

    tube = band * abs(amplitude)
    dev = np.abs(y - ref_final)
    outside = dev > tube
    if not outside.any():
        settling: Optional[float] = 0.0
    elif outside[-1]:
        settling = None
    else:
        i = int(np.nonzero(outside)[0][-1])
        # interpolate the crossing back into the tube on (t[i], t[i+1])
        a_out, b_in = dev[i] - tube, dev[i + 1] - tube
        frac = a_out / (a_out - b_in)
        settling = float(t[i] + frac * (t[i + 1] - t[i]))

    overshoot = max(0.0, float(z.max()) - 1.0) * 100.0
    sse = ref_final - float(y[-1])
    if rise is not None and settling is not None and rise > settling:
        # a signal can graze 90% inside the band on pathological traces
        rise = settling
    return StepMetrics(rise, settling, overshoot, sse)


def evaluate_objective(trace: SimTrace, spec: ObjectiveSpec, band: float = 0.02) -> float:
    """Score a closed-loop run under the given objective kind.

    ISE terms integrate w_theta*e_theta^2 + w_x*e_x^2 over the trace; the
    AB variant adds integrated absolute errors, ST adds w_settle times the
    cart settling time, OS adds w_overshoot times the cart overshoot in
    percent.  Runs whose settling time (ST) or overshoot (OS) is undefined
    score PENALTY_COST.
    """
    e_theta, e_x = trace.errors()
    t = trace.t
    integrand = spec.w_theta * e_theta**2 + spec.w_x * e_x**2
    if spec.kind == "ise-ab":
        integrand = integrand + spec.w_theta_abs * np.abs(e_theta) + spec.w_x_abs * np.abs(e_x)
    cost = float(np.trapezoid(integrand, t))
    if spec.kind == "ise-st":
        m = step_metrics(trace, "x", band)
        if m.settling_time is None:
            return PENALTY_COST
        cost += spec.w_settle * m.settling_time
    elif spec.kind == "ise-os":
        m = step_metrics(trace, "x", band)
        cost += spec.w_overshoot * m.overshoot
    if not np.isfinite(cost):
        return PENALTY_COST
    return cost


def quadratic_integrals(trace: SimTrace, q: np.ndarray, r: float,
                        q_nn: np.ndarray, r_nn: float) -> tuple[float, float]:
    """The two benchmark energy integrals over a trace.

    int_U = trapz of 0.5*(X'QX + R u^2); int_F = trapz of X'Q_nn X
    + R_nn u^2, both using the trace's state columns as stored.  Pass a
    deviation trace (`SimTrace.deviation_trace`) to take the quadratic
    forms about the setpoint.
    """
    if len(trace) == 0:
        raise ValueError("trace is empty")
    states = trace.states()
    u2 = trace.u**2
    qx = np.einsum("ij,jk,ik->i", states, np.asarray(q, dtype=float), states)
    qx_nn = np.einsum("ij,jk,ik->i", states, np.asarray(q_nn, dtype=float), states)
    int_u = float(np.trapezoid(0.5 * (qx + r * u2), trace.t))
    int_f = float(np.trapezoid(qx_nn + r_nn * u2, trace.t))
    return int_u, int_f
