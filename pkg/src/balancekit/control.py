"""Two-loop PID control, LQR synthesis via the continuous Riccati equation,
and the closed-loop simulator that combines them with the plant.

The control law sums an angle loop and a position loop,
u_pid = u_theta + u_x, each a discrete PID on its tracking error
(trapezoidal integral, backward-difference derivative, derivative defined
as zero on the first sample after reset).  Optional state feedback adds
u_fb on top: either -K @ deviation from an LQR gain, or a trained policy
network evaluated on the deviation.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from . import _kernels
from .plant import (
    DivergenceError,
    LinearModel,
    PlantParams,
    SimConfig,
    linearize,
)


@dataclass(frozen=True)
class PidGains:
    """The six controller gains, angle loop then position loop."""

    kp_theta: float
    ki_theta: float
    kd_theta: float
    kp_x: float
    ki_x: float
    kd_x: float

    def __post_init__(self):
        if not np.isfinite(self.as_array()).all():
            raise ValueError("all six gains must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.kp_theta, self.ki_theta, self.kd_theta,
                         self.kp_x, self.ki_x, self.kd_x])

    @classmethod
    def from_array(cls, arr) -> "PidGains":
        a = np.asarray(arr, dtype=float)
        if a.shape != (6,):
            raise ValueError(f"expected 6 gains, got shape {a.shape}")
        return cls(*a.tolist())


@dataclass(frozen=True)
class PidState:
    """Controller accumulators, passed and returned by value."""

    integral_theta: float = 0.0
    integral_x: float = 0.0
    prev_error_theta: float = 0.0
    prev_error_x: float = 0.0
    initialized: bool = False

    @classmethod
    def reset(cls) -> "PidState":
        return cls()


def pid_update(gains: PidGains, state: PidState, e_theta: float, e_x: float,
               dt: float) -> tuple[float, PidState]:
    """One controller sample; returns (u_pid, updated state).

    Integral term: trapezoidal accumulation of the error.  Derivative
    term: backward difference, zero on the first call after reset.
    """
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    if not (np.isfinite(e_theta) and np.isfinite(e_x)):
        raise ValueError(f"error inputs must be finite, got ({e_theta!r}, {e_x!r})")
    if state.initialized:
        int_t = state.integral_theta + dt * (e_theta + state.prev_error_theta) / 2.0
        int_x = state.integral_x + dt * (e_x + state.prev_error_x) / 2.0
        d_t = (e_theta - state.prev_error_theta) / dt
        d_x = (e_x - state.prev_error_x) / dt
    else:
        int_t = state.integral_theta
        int_x = state.integral_x
        d_t = 0.0
        d_x = 0.0
    u = (gains.kp_theta * e_theta + gains.ki_theta * int_t + gains.kd_theta * d_t
         + gains.kp_x * e_x + gains.ki_x * int_x + gains.kd_x * d_x)
    new_state = PidState(int_t, int_x, e_theta, e_x, True)
    return u, new_state


@dataclass(frozen=True)
class LqrWeights:
    """Quadratic cost weights: symmetric PSD Q and a positive scalar R."""

    q: np.ndarray = field(default_factory=lambda: np.diag([1.0, 1.0, 500.0, 250.0]))
    r: float = 1.0

    def __post_init__(self):
        q = np.array(self.q, dtype=float)
        if q.ndim != 2 or q.shape[0] != q.shape[1]:
            raise ValueError(f"Q must be square, got {q.shape}")
        if not np.isfinite(q).all():
            raise ValueError("Q must be finite")
        if np.abs(q - q.T).max() > 1e-12:
            raise ValueError("Q must be symmetric within 1e-12")
        if np.linalg.eigvalsh(q).min() < -1e-12:
            raise ValueError("Q must be positive semidefinite (eigenvalues >= -1e-12)")
        if not (np.isfinite(self.r) and self.r > 0.0):
            raise ValueError(f"R must be a positive scalar, got {self.r!r}")
        q.setflags(write=False)
        object.__setattr__(self, "q", q)


@dataclass(frozen=True)
class LqrGain:
    """State-feedback gain K with the Riccati solution P that produced it."""

    k: np.ndarray
    p: np.ndarray
    residual: float

    def __post_init__(self):
        k = np.array(self.k, dtype=float).reshape(-1)
        p = np.array(self.p, dtype=float)
        k.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "p", p)


class RiccatiSolverError(RuntimeError):
    """The differential Riccati integration failed to converge."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


def _care_rhs(p, a, b_col, q, r_inv):
    return a.T @ p + p @ a - p @ b_col @ (r_inv * b_col.T) @ p + q


def solve_care(model, weights: LqrWeights, step: float = 1e-3,
               tol: float = 1e-10, max_steps: int = 10_000_000) -> LqrGain:
    """Solve A'P + PA - P B R^-1 B' P + Q = 0 for the stabilizing P.

    Integrates the differential Riccati equation dP/ds = rhs(P) from P = 0
    with fixed-step RK4 until ||dP/ds||_inf <= tol (this limit is the
    matrix Riccati flow run backward in time from a zero terminal
    condition, which converges to the stabilizing solution for
    stabilizable/detectable pairs).  Returns K = R^-1 B'P.
    """
    if isinstance(model, LinearModel):
        a, b = model.a, model.b
    else:
        a, b = model
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
    n = a.shape[0]
    b_col = b.reshape(n, 1)
    q = weights.q
    if q.shape != (n, n):
        raise ValueError(f"Q shape {q.shape} does not match model dimension {n}")
    r_inv = 1.0 / weights.r

    p = np.zeros((n, n))
    residual = np.inf
    converged = False
    for _ in range(max_steps):
        k1 = _care_rhs(p, a, b_col, q, r_inv)
        residual = np.abs(k1).max()
        if residual <= tol:
            converged = True
            break
        k2 = _care_rhs(p + 0.5 * step * k1, a, b_col, q, r_inv)
        k3 = _care_rhs(p + 0.5 * step * k2, a, b_col, q, r_inv)
        k4 = _care_rhs(p + step * k3, a, b_col, q, r_inv)
        p = p + (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        p = 0.5 * (p + p.T)  # keep the iterate exactly symmetric
        if not np.isfinite(p).all():
            raise RiccatiSolverError("Riccati iterate became non-finite", residual=residual)
    if not converged:
        raise RiccatiSolverError(
            f"no convergence within {max_steps} steps (residual {residual:.3e})",
            residual=residual)

    k_gain = (r_inv * (b_col.T @ p)).reshape(-1)

    # contract checks on the returned gain
    final_residual = float(np.abs(_care_rhs(p, a, b_col, q, r_inv)).max())
    if final_residual > 1e-8:
        raise RiccatiSolverError(f"ARE residual {final_residual:.3e} exceeds 1e-8",
                                 residual=final_residual)
    if np.abs(p - p.T).max() > 1e-9 or np.linalg.eigvalsh(0.5 * (p + p.T)).min() < -1e-9:
        raise RiccatiSolverError("Riccati solution is not symmetric PSD within 1e-9")
    closed = a - b_col @ k_gain.reshape(1, n)
    if np.real(np.linalg.eigvals(closed)).max() >= 0.0:
        raise RiccatiSolverError("closed-loop matrix A - BK is not Hurwitz")
    return LqrGain(k_gain, p, final_residual)


def lqr_feedback(gain: LqrGain, state) -> float:
    """Optimal state-feedback force -K @ X."""
    s = np.asarray(state, dtype=float).reshape(-1) if not hasattr(state, "as_array") \
        else state.as_array()
    return float(-(gain.k @ s))


class StepReference:
    """Constant setpoints from t = 0: x_ref = amplitude, theta_ref as given."""

    def __init__(self, amplitude: float, theta_ref: float = 0.0):
        self.amplitude = float(amplitude)
        self.theta_ref_value = float(theta_ref)

    def x_ref(self, t: np.ndarray) -> np.ndarray:
        return np.full_like(t, self.amplitude)

    def theta_ref(self, t: np.ndarray) -> np.ndarray:
        return np.full_like(t, self.theta_ref_value)


class SquareWaveReference:
    """Cart setpoint alternating low/high with 50% duty, starting low."""

    def __init__(self, low: float, high: float, period: float):
        if period <= 0.0:
            raise ValueError("period must be positive")
        self.low = float(low)
        self.high = float(high)
        self.period = float(period)

    def x_ref(self, t: np.ndarray) -> np.ndarray:
        phase = np.mod(t, self.period)
        return np.where(phase < 0.5 * self.period, self.low, self.high)

    def theta_ref(self, t: np.ndarray) -> np.ndarray:
        return np.zeros_like(t)


ReferenceSignal = Union[StepReference, SquareWaveReference]


@dataclass(frozen=True)
class SimTrace:
    """Time-indexed record of one closed-loop run.

    Columns: t, theta, theta_dot, x, x_dot, u (total force), u_pid,
    u_fb (state-feedback part), theta_ref, x_ref.
    """

    t: np.ndarray
    theta: np.ndarray
    theta_dot: np.ndarray
    x: np.ndarray
    x_dot: np.ndarray
    u: np.ndarray
    u_pid: np.ndarray
    u_fb: np.ndarray
    theta_ref: np.ndarray
    x_ref: np.ndarray

    COLUMNS = ("t", "theta", "theta_dot", "x", "x_dot",
               "u", "u_pid", "u_fb", "theta_ref", "x_ref")

    def __post_init__(self):
        n = self.t.shape[0]
        for name in self.COLUMNS:
            col = getattr(self, name)
            if col.shape != (n,):
                raise ValueError(f"column {name} has shape {col.shape}, expected ({n},)")

    def __len__(self) -> int:
        return self.t.shape[0]

    def states(self) -> np.ndarray:
        """(N, 4) state matrix in (theta, theta_dot, x, x_dot) order."""
        return np.column_stack([self.theta, self.theta_dot, self.x, self.x_dot])

    def errors(self) -> tuple[np.ndarray, np.ndarray]:
        """Tracking errors (theta_ref - theta, x_ref - x)."""
        return self.theta_ref - self.theta, self.x_ref - self.x

    def deviation_trace(self) -> "SimTrace":
        """Same trace with the state expressed relative to the references.

        theta and x become theta - theta_ref and x - x_ref with zero
        reference columns; rates and forces are unchanged.  Used when
        quadratic state costs should be taken about the setpoint.
        """
        return SimTrace(self.t, self.theta - self.theta_ref, self.theta_dot,
                        self.x - self.x_ref, self.x_dot, self.u, self.u_pid,
                        self.u_fb, np.zeros_like(self.t), np.zeros_like(self.t))

    def as_matrix(self) -> np.ndarray:
        return np.column_stack([getattr(self, c) for c in self.COLUMNS])


def _feedback_kernel_args(feedback):
    """Map a feedback object (None, LqrGain, or policy net) to kernel inputs."""
    empty = np.zeros(0)
    empty2 = np.zeros((0, 0))
    if feedback is None:
        return (_kernels.FB_NONE, np.zeros(4), empty2, empty, empty, empty,
                np.zeros(4), np.ones(4), 0.0, 0.0)
    if isinstance(feedback, LqrGain):
        return (_kernels.FB_GAIN, np.ascontiguousarray(feedback.k, dtype=float),
                empty2, empty, empty, empty, np.zeros(4), np.ones(4), 0.0, 0.0)
    # duck-typed policy network: forward pass data + clamp box
    needed = ("w1", "b1", "w2", "b2", "in_lo", "in_hi", "u_lo", "u_hi")
    if all(hasattr(feedback, n) for n in needed):
        return (_kernels.FB_NET, np.zeros(4),
                np.ascontiguousarray(feedback.w1, dtype=float),
                np.ascontiguousarray(feedback.b1, dtype=float),
                np.ascontiguousarray(feedback.w2, dtype=float),
                np.atleast_1d(np.asarray(feedback.b2, dtype=float)),
                np.ascontiguousarray(feedback.in_lo, dtype=float),
                np.ascontiguousarray(feedback.in_hi, dtype=float),
                float(feedback.u_lo), float(feedback.u_hi))
    raise TypeError(f"unsupported feedback object: {type(feedback)!r}")


def closed_loop_sim(gains: PidGains, plant, config: SimConfig,
                    reference: ReferenceSignal, feedback=None) -> SimTrace:
    """Simulate the closed loop from the origin over the configured horizon.

    At every sample: errors are formed against the reference, the two PID
    loops produce u_pid, optional feedback adds u_fb on the deviation
    state, and the plant advances one RK4 step with the total force held.

    `plant` may be a LinearModel (used when config.model_kind is
    "linear") or PlantParams (linearized automatically for "linear",
    used directly for "nonlinear").

    Raises DivergenceError (with the failure time and the offending gains
    attached) if the state leaves the finite/bounded domain.
    """
    if config.model_kind == "nonlinear":
        if not isinstance(plant, PlantParams):
            raise TypeError("nonlinear simulation requires PlantParams")
        params = plant
        a = np.zeros((4, 4))
        b = np.zeros(4)
        model_kind = _kernels.MODEL_NONLINEAR
        mM, mm = params.cart_mass, params.bob_mass
        ml, mg = params.pendulum_length, params.gravity
    else:
        model = plant if isinstance(plant, LinearModel) else linearize(plant)
        a = np.ascontiguousarray(model.a, dtype=float)
        b = np.ascontiguousarray(model.b, dtype=float)
        model_kind = _kernels.MODEL_LINEAR
        mM = mm = ml = mg = 1.0

    n = config.n_steps
    t = np.arange(n + 1) * config.dt
    theta_ref = np.ascontiguousarray(reference.theta_ref(t), dtype=float)
    x_ref = np.ascontiguousarray(reference.x_ref(t), dtype=float)

    fb_mode, kvec, w1, b1, w2, b2, in_lo, in_hi, u_lo, u_hi = _feedback_kernel_args(feedback)

    out = np.empty((n + 1, 7))
    bad = _kernels.simulate_loop(a, b, model_kind, mM, mm, ml, mg, config.dt, n,
                                 gains.as_array(), theta_ref, x_ref,
                                 fb_mode, kvec, w1, b1, w2, b2,
                                 in_lo, in_hi, u_lo, u_hi, out)
    if bad >= 0:
        raise DivergenceError(
            f"closed-loop state diverged at t = {bad * config.dt:.6g} s",
            time=bad * config.dt, gains=gains)
    return SimTrace(t, out[:, 0].copy(), out[:, 1].copy(), out[:, 2].copy(),
                    out[:, 3].copy(), out[:, 4].copy(), out[:, 5].copy(),
                    out[:, 6].copy(), theta_ref, x_ref)
