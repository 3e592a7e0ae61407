"""Inverted-pendulum-on-a-cart dynamics: nonlinear equations of motion,
small-angle linearization, and a fixed-step RK4 integrator.

State ordering is fixed everywhere as (theta, theta_dot, x, x_dot):
pendulum angle from upright [rad], its rate, cart position [m], cart
velocity. A single horizontal force u [N] on the cart is the only input.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

STATE_DIM = 4
STATE_LABELS = ("theta", "theta_dot", "x", "x_dot")

# Determinant floor for the 2x2 mass matrix of the nonlinear equations.
# For any positive masses the determinant is >= m*l*M > 0, so this guard
# can only fire on pathological inputs.
_DET_FLOOR = 1e-12


class DegenerateConfigurationError(ValueError):
    """The nonlinear equations of motion became numerically singular."""


class DivergenceError(RuntimeError):
    """A simulated trajectory left the finite (or bounded) domain.

    Attributes
    ----------
    time : float or None
        Simulation time at which divergence was detected.
    gains : object or None
        The controller gains in effect, attached by closed-loop callers.
    """

    def __init__(self, message, time=None, gains=None):
        super().__init__(message)
        self.time = time
        self.gains = gains


@dataclass(frozen=True)
class PlantParams:
    """Physical constants of the cart-pendulum rig.

    Defaults are the benchmark values M=2.4 kg, m=0.23 kg, l=0.36 m,
    g=9.8 m/s^2.  Note the published state-space matrices for this rig are
    consistent with g=9.81 rather than the tabulated 9.8; use
    :func:`paper_model` to get those exact matrices.
    """

    cart_mass: float = 2.4
    bob_mass: float = 0.23
    pendulum_length: float = 0.36
    gravity: float = 9.8

    def __post_init__(self):
        for name in ("cart_mass", "bob_mass", "pendulum_length", "gravity"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0.0):
                raise ValueError(f"{name} must be strictly positive, got {v!r}")


@dataclass(frozen=True)
class StateVector:
    """Plant state (theta, theta_dot, x, x_dot); all components finite."""

    theta: float = 0.0
    theta_dot: float = 0.0
    x: float = 0.0
    x_dot: float = 0.0

    def __post_init__(self):
        vals = (self.theta, self.theta_dot, self.x, self.x_dot)
        if not all(np.isfinite(v) for v in vals):
            raise ValueError(f"state components must be finite, got {vals}")

    def as_array(self) -> np.ndarray:
        return np.array([self.theta, self.theta_dot, self.x, self.x_dot])

    @classmethod
    def from_array(cls, arr) -> "StateVector":
        a = np.asarray(arr, dtype=float)
        if a.shape != (STATE_DIM,):
            raise ValueError(f"expected shape (4,), got {a.shape}")
        return cls(*a.tolist())


def _state_array(state) -> np.ndarray:
    if isinstance(state, StateVector):
        return state.as_array()
    a = np.asarray(state, dtype=float)
    if a.shape != (STATE_DIM,):
        raise ValueError(f"expected a 4-component state, got shape {a.shape}")
    return a


@dataclass(frozen=True)
class LinearModel:
    """Linearized dynamics x_dot = A x + B u about the upright equilibrium."""

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = np.array(self.a, dtype=float)
        b = np.array(self.b, dtype=float).reshape(-1)
        if a.shape != (STATE_DIM, STATE_DIM) or b.shape != (STATE_DIM,):
            raise ValueError(f"need A (4,4) and B (4,), got {a.shape}, {b.shape}")
        if not (np.isfinite(a).all() and np.isfinite(b).all()):
            raise ValueError("A and B must be finite")
        # structural entries of the upright linearization
        if a[0, 1] != 1.0 or a[2, 3] != 1.0:
            raise ValueError("A must have A[0,1] = A[2,3] = 1 exactly")
        if b[0] != 0.0 or b[2] != 0.0:
            raise ValueError("B must have B[0] = B[2] = 0 exactly")
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)


@dataclass(frozen=True)
class SimConfig:
    """Fixed-step integration settings for closed-loop runs."""

    dt: float = 1e-3
    horizon: float = 15.0
    model_kind: str = "linear"

    MAX_STEPS = 100_000_000

    def __post_init__(self):
        if not (np.isfinite(self.dt) and self.dt > 0.0):
            raise ValueError(f"dt must be positive, got {self.dt!r}")
        if not (np.isfinite(self.horizon) and self.horizon >= self.dt):
            raise ValueError("horizon must be at least one step")
        if self.model_kind not in ("linear", "nonlinear"):
            raise ValueError(f"model_kind must be 'linear' or 'nonlinear', got {self.model_kind!r}")
        if self.n_steps > self.MAX_STEPS:
            raise ValueError(f"horizon/dt = {self.n_steps} exceeds {self.MAX_STEPS} steps")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))


# State matrices exactly as printed for the benchmark rig (g = 9.81 implied).
PAPER_A = np.array([
    [0.0, 1.0, 0.0, 0.0],
    [29.8615, 0.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, 1.0],
    [-0.9401, 0.0, 0.0, 0.0],
])
PAPER_B = np.array([0.0, -1.1574, 0.0, 0.4167])
PAPER_A.setflags(write=False)
PAPER_B.setflags(write=False)


def paper_model() -> LinearModel:
    """The published numeric A/B for the benchmark rig.

    These are kept verbatim (not re-derived) so that benchmark reproduction
    is anchored to the exact printed matrices; they correspond to Table-1
    masses/length with g = 9.81, not the tabulated g = 9.8.
    """
    return LinearModel(PAPER_A, PAPER_B)


def linearize(params: PlantParams) -> LinearModel:
    """Small-angle linearization about the upright equilibrium.

    A[1,0] = (M+m)g/(Ml), A[3,0] = -mg/M, B[1] = -1/(Ml), B[3] = 1/M,
    with the integrator rows A[0,1] = A[2,3] = 1.
    """
    M, m = params.cart_mass, params.bob_mass
    l, g = params.pendulum_length, params.gravity
    a = np.zeros((STATE_DIM, STATE_DIM))
    a[0, 1] = 1.0
    a[2, 3] = 1.0
    a[1, 0] = (M + m) * g / (M * l)
    a[3, 0] = -m * g / M
    b = np.zeros(STATE_DIM)
    b[1] = -1.0 / (M * l)
    b[3] = 1.0 / M
    return LinearModel(a, b)


def nonlinear_derivative(params: PlantParams, state, u: float) -> np.ndarray:
    """Full nonlinear state derivative (theta_dot, theta_ddot, x_dot, x_ddot).

    Solves the coupled force/torque balance

        (M+m) x_dd - m l sin(th) th_d^2 + m l cos(th) th_dd = u
        m x_dd cos(th) + m l th_dd = m g sin(th)

    as a 2x2 linear system in (x_dd, th_dd) at the given state.
    """
    s = _state_array(state)
    th, th_d = s[0], s[1]
    x_d = s[3]
    M, m = params.cart_mass, params.bob_mass
    l, g = params.pendulum_length, params.gravity
    sin_t, cos_t = np.sin(th), np.cos(th)

    # rows: [a11 a12; a21 a22] @ [x_dd, th_dd] = [r1, r2]
    a11 = M + m
    a12 = m * l * cos_t
    a21 = m * cos_t
    a22 = m * l
    r1 = u + m * l * sin_t * th_d * th_d
    r2 = m * g * sin_t
    det = a11 * a22 - a12 * a21
    if abs(det) < _DET_FLOOR:
        raise DegenerateConfigurationError(
            f"mass matrix determinant {det:.3e} below {_DET_FLOOR:.0e} at theta={th!r}"
        )
    x_dd = (r1 * a22 - a12 * r2) / det
    th_dd = (a11 * r2 - r1 * a21) / det
    return np.array([th_d, th_dd, x_d, x_dd])


def linear_derivative(model: LinearModel, state, u: float) -> np.ndarray:
    """State derivative A x + B u of the linearized model."""
    s = _state_array(state)
    return model.a @ s + model.b * u


def step_rk4(model_or_params, state, u: float, dt: float) -> np.ndarray:
    """One classical 4-stage Runge-Kutta step with u held constant (ZOH).

    `model_or_params` selects the derivative: a LinearModel integrates the
    linearized dynamics, a PlantParams the nonlinear ones.  Raises
    DivergenceError if the advanced state is not finite.
    """
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    s = _state_array(state)
    if isinstance(model_or_params, LinearModel):
        f = lambda y: linear_derivative(model_or_params, y, u)
    elif isinstance(model_or_params, PlantParams):
        f = lambda y: nonlinear_derivative(model_or_params, y, u)
    else:
        raise TypeError(f"expected LinearModel or PlantParams, got {type(model_or_params)!r}")
    k1 = f(s)
    k2 = f(s + 0.5 * dt * k1)
    k3 = f(s + 0.5 * dt * k2)
    k4 = f(s + dt * k3)
    out = s + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.isfinite(out).all():
        raise DivergenceError("RK4 step produced a non-finite state")
    return out
