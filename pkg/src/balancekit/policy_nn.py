"""State-feedback optimizer distilled from an exhaustive one-step cost table.

Pipeline: discretize the state box and the force interval on uniform
grids, tabulate the quadratic one-step-ahead cost for every (action,
state) pair, take the per-state argmin action as a supervised label, and
fit a small 4 -> 13 -> 1 tanh network to that label map with
Levenberg-Marquardt.  The trained net, evaluated on the deviation from
the setpoint and clamped to the force interval, is the u_nn feedback
term of the combined control scheme.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels
from .plant import LinearModel

# Cost weights used to build the policy table.
DEFAULT_Q_NN = np.diag([1.0, 1.0, 50.0, 25.0])
DEFAULT_Q_NN.setflags(write=False)
DEFAULT_R_NN = 0.016

# One-step state prediction horizon for the tabulated cost.  At short
# horizons the per-state argmin spans only a few force levels and the
# action-grid quantization dominates any regression fit; 50 ms keeps the
# labels spread across the full force interval.
DEFAULT_DT_NN = 0.05

DEFAULT_STATE_MAX = np.array([0.175, 0.35, 0.1, 0.2])
DEFAULT_STATE_MAX.setflags(write=False)
DEFAULT_FORCE_MAX = 5.0
DEFAULT_HIDDEN = 13

_MAGIC = b"BKPN"
_FORMAT_VERSION = 1


class CapacityError(MemoryError):
    """The requested cost table would exceed the configured memory budget."""

    def __init__(self, message, required_bytes):
        super().__init__(message)
        self.required_bytes = required_bytes


class TrainingFailure(RuntimeError):
    """Levenberg-Marquardt training could not proceed."""

    def __init__(self, message, epoch=None, damping=None):
        super().__init__(message)
        self.epoch = epoch
        self.damping = damping


def _axis(lo: float, hi: float, n: int) -> np.ndarray:
    """n uniform grid points on [lo, hi]; exactly sign-symmetric (including
    an exact 0) when the interval is symmetric and n is odd."""
    if lo == -hi and n % 2 == 1:
        m = (n - 1) // 2
        step = hi / m
        pos = step * np.arange(m + 1)
        return np.concatenate([-pos[:0:-1], pos])
    step = (hi - lo) / (n - 1)
    return lo + step * np.arange(n)


@dataclass(frozen=True)
class GridSpec:
    """Uniform discretization of the state box and the action interval."""

    state_min: np.ndarray = field(default_factory=lambda: -DEFAULT_STATE_MAX.copy())
    state_max: np.ndarray = field(default_factory=lambda: DEFAULT_STATE_MAX.copy())
    delta_x: Optional[np.ndarray] = None
    u_min: float = -DEFAULT_FORCE_MAX
    u_max: float = DEFAULT_FORCE_MAX
    delta_u: Optional[float] = None

    def __post_init__(self):
        lo = np.asarray(self.state_min, dtype=float)
        hi = np.asarray(self.state_max, dtype=float)
        if lo.shape != (4,) or hi.shape != (4,):
            raise ValueError("state bounds must have 4 components")
        if not (hi > lo).all():
            raise ValueError("state_max must exceed state_min componentwise")
        dx = np.asarray(self.delta_x, dtype=float) if self.delta_x is not None \
            else (hi - lo) / 20.0
        if dx.shape != (4,) or not (dx > 0).all():
            raise ValueError("delta_x must be 4 positive steps")
        if not self.u_max > self.u_min:
            raise ValueError("u_max must exceed u_min")
        du = float(self.delta_u) if self.delta_u is not None \
            else (self.u_max - self.u_min) / 20.0
        if not du > 0:
            raise ValueError("delta_u must be positive")
        for span, step in list(zip(hi - lo, dx)) + [(self.u_max - self.u_min, du)]:
            ratio = span / step
            if abs(ratio - round(ratio)) > 1e-9:
                raise ValueError(f"step {step} does not evenly divide span {span}")
        lo.setflags(write=False)
        hi.setflags(write=False)
        dx.setflags(write=False)
        object.__setattr__(self, "state_min", lo)
        object.__setattr__(self, "state_max", hi)
        object.__setattr__(self, "delta_x", dx)
        object.__setattr__(self, "delta_u", du)

    def points_per_state_axis(self) -> tuple:
        span = self.state_max - self.state_min
        return tuple(int(round(s / d)) + 1 for s, d in zip(span, self.delta_x))

    @property
    def n_actions(self) -> int:
        return int(round((self.u_max - self.u_min) / self.delta_u)) + 1

    @property
    def n_states(self) -> int:
        n = 1
        for k in self.points_per_state_axis():
            n *= k
        return n

    def state_axes(self) -> list:
        return [_axis(self.state_min[i], self.state_max[i], n)
                for i, n in enumerate(self.points_per_state_axis())]

    def action_axis(self) -> np.ndarray:
        return _axis(self.u_min, self.u_max, self.n_actions)

    def enumerate_states(self) -> np.ndarray:
        """(n_states, 4) array; the first state axis varies slowest."""
        mesh = np.meshgrid(*self.state_axes(), indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=1)


@dataclass(frozen=True)
class QTable:
    """Exhaustive cost table, shape (n_actions, n_states).

    Column si corresponds to grid.enumerate_states()[si]; row ai to
    grid.action_axis()[ai].  Entries are the one-step quadratic cost by
    definition, tabulated, not learned.
    """

    costs: np.ndarray
    grid: GridSpec

    def __post_init__(self):
        c = np.asarray(self.costs, dtype=float)
        if c.shape != (self.grid.n_actions, self.grid.n_states):
            raise ValueError(f"cost table shape {c.shape} does not match grid "
                             f"({self.grid.n_actions}, {self.grid.n_states})")
        if not np.isfinite(c).all():
            raise ValueError("cost table contains non-finite entries")
        if c.min() < 0.0:
            raise ValueError("cost table contains negative entries")
        c.setflags(write=False)
        object.__setattr__(self, "costs", c)

    def to_csv(self) -> str:
        """Render the table (toy sizes only) as CSV: one row per action."""
        if self.costs.size > 200_000:
            raise CapacityError("CSV export is for toy tables only",
                                required_bytes=self.costs.size * 8)
        lines = [",".join(["u"] + [f"s{j}" for j in range(self.costs.shape[1])])]
        actions = self.grid.action_axis()
        for ai in range(self.costs.shape[0]):
            row = [format(actions[ai], ".17g")]
            row += [format(v, ".17g") for v in self.costs[ai]]
            lines.append(",".join(row))
        return "\n".join(lines) + "\n"


def one_step_cost(state, u: float, model: LinearModel, dt_nn: float = DEFAULT_DT_NN,
                  q_nn=DEFAULT_Q_NN, r_nn: float = DEFAULT_R_NN) -> float:
    """Cost of applying force u for one forward-Euler step from `state`:
    X1' Q_nn X1 + R_nn u^2 with X1 = X + dt_nn (A X + B u)."""
    if dt_nn <= 0.0:
        raise ValueError("dt_nn must be positive")
    s = np.ascontiguousarray(state, dtype=float).reshape(4)
    return float(_kernels.one_step_cost_scalar(
        s, float(u), np.ascontiguousarray(model.a), np.ascontiguousarray(model.b),
        dt_nn, np.ascontiguousarray(q_nn, dtype=float), float(r_nn)))


def build_qtable(grid: GridSpec, model: LinearModel, dt_nn: float = DEFAULT_DT_NN,
                 q_nn=DEFAULT_Q_NN, r_nn: float = DEFAULT_R_NN,
                 memory_limit_bytes: int = 1 << 30) -> QTable:
    """Tabulate the one-step cost for every (action, state) pair."""
    required = grid.n_actions * grid.n_states * 8
    if required > memory_limit_bytes:
        raise CapacityError(
            f"cost table needs {required} bytes "
            f"({grid.n_actions} x {grid.n_states} float64), "
            f"limit is {memory_limit_bytes}", required_bytes=required)
    states = np.ascontiguousarray(grid.enumerate_states())
    actions = np.ascontiguousarray(grid.action_axis())
    out = np.empty((grid.n_actions, grid.n_states))
    _kernels.qtable_fill(states, actions, np.ascontiguousarray(model.a),
                         np.ascontiguousarray(model.b), float(dt_nn),
                         np.ascontiguousarray(q_nn, dtype=float), float(r_nn), out)
    return QTable(out, grid)


def extract_policy(qtable: QTable) -> tuple[np.ndarray, np.ndarray]:
    """Per-state lowest-cost action as a supervised dataset.

    Exact cost ties break toward the action of smallest magnitude, then
    toward the lower action index.  Returns (states (N,4), actions (N,)).
    """
    costs = qtable.costs
    actions = qtable.grid.action_axis()
    min_cost = costs.min(axis=0)
    is_min = costs == min_cost[None, :]
    abs_u = np.abs(actions)[:, None]
    keyed = np.where(is_min, abs_u, np.inf)
    min_abs = keyed.min(axis=0)
    # argmax returns the first (lowest-index) True
    best_idx = np.argmax(keyed == min_abs[None, :], axis=0)
    return qtable.grid.enumerate_states(), actions[best_idx]


@dataclass(frozen=True)
class PolicyNet:
    """4 -> n_hidden -> 1 feedforward net, tanh hidden layer, linear output.

    Inputs are clamped into [in_lo, in_hi] and scaled to [-1, 1] before the
    forward pass; the output force is clamped to [u_lo, u_hi] at inference.
    """

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: float
    in_lo: np.ndarray
    in_hi: np.ndarray
    u_lo: float
    u_hi: float

    def __post_init__(self):
        w1 = np.asarray(self.w1, dtype=float)
        b1 = np.asarray(self.b1, dtype=float)
        w2 = np.asarray(self.w2, dtype=float)
        in_lo = np.asarray(self.in_lo, dtype=float)
        in_hi = np.asarray(self.in_hi, dtype=float)
        h = w1.shape[0]
        if w1.shape != (h, 4) or b1.shape != (h,) or w2.shape != (h,):
            raise ValueError("inconsistent layer shapes")
        if in_lo.shape != (4,) or in_hi.shape != (4,) or not (in_hi > in_lo).all():
            raise ValueError("normalization box must have in_hi > in_lo")
        arrays = (w1, b1, w2, in_lo, in_hi)
        if not all(np.isfinite(a).all() for a in arrays) or not np.isfinite(self.b2):
            raise ValueError("parameters must be finite")
        for a in arrays:
            a.setflags(write=False)
        object.__setattr__(self, "w1", w1)
        object.__setattr__(self, "b1", b1)
        object.__setattr__(self, "w2", w2)
        object.__setattr__(self, "in_lo", in_lo)
        object.__setattr__(self, "in_hi", in_hi)

    @property
    def n_hidden(self) -> int:
        return self.w1.shape[0]

    def normalize(self, states: np.ndarray) -> np.ndarray:
        clipped = np.clip(states, self.in_lo, self.in_hi)
        return 2.0 * (clipped - self.in_lo) / (self.in_hi - self.in_lo) - 1.0

    def forward_normalized(self, z: np.ndarray) -> np.ndarray:
        """Raw net output on pre-normalized inputs (no output clamp)."""
        hidden = np.tanh(z @ self.w1.T + self.b1)
        return hidden @ self.w2 + self.b2

    def predict(self, states) -> np.ndarray:
        """Clamped force for raw states; accepts (4,) or (N, 4)."""
        arr = np.asarray(states, dtype=float)
        single = arr.ndim == 1
        arr = np.atleast_2d(arr)
        out = self.forward_normalized(self.normalize(arr))
        out = np.clip(out, self.u_lo, self.u_hi)
        return out[0] if single else out


def nn_feedback(net: PolicyNet, state) -> float:
    """Policy-net force for one state (clamped into the training box and
    to the force interval)."""
    s = state.as_array() if hasattr(state, "as_array") else np.asarray(state, dtype=float)
    return float(net.predict(s))


@dataclass(frozen=True)
class TrainingReport:
    train_mse: float
    val_mse: float
    test_mse: float
    label_variance: float
    normalized_test_mse: float
    epochs: int
    final_damping: float
    stop_reason: str


def _param_layout(n_hidden: int):
    n_w1 = n_hidden * 4
    return n_w1, n_w1 + n_hidden, n_w1 + 2 * n_hidden, n_w1 + 2 * n_hidden + 1


def _unpack(pvec: np.ndarray, n_hidden: int):
    e1, e2, e3, _ = _param_layout(n_hidden)
    w1 = pvec[:e1].reshape(n_hidden, 4)
    b1 = pvec[e1:e2]
    w2 = pvec[e2:e3]
    b2 = pvec[e3]
    return w1, b1, w2, b2


def net_output_and_jacobian(pvec: np.ndarray, n_hidden: int, z: np.ndarray):
    """Net output and its Jacobian w.r.t. the parameter vector.

    z: (N, 4) normalized inputs.  Parameter order: W1 rows (row-major),
    b1, w2, b2.  Returns (out (N,), J (N, P)).
    """
    w1, b1, w2, b2 = _unpack(pvec, n_hidden)
    hidden = np.tanh(z @ w1.T + b1)            # (N, h)
    out = hidden @ w2 + b2
    sech2 = 1.0 - hidden**2                     # (N, h)
    back = w2 * sech2                           # (N, h)
    n = z.shape[0]
    jac = np.empty((n, pvec.shape[0]))
    e1, e2, e3, _ = _param_layout(n_hidden)
    jac[:, :e1] = (back[:, :, None] * z[:, None, :]).reshape(n, e1)
    jac[:, e1:e2] = back
    jac[:, e2:e3] = hidden
    jac[:, e3] = 1.0
    return out, jac


def _net_forward(pvec: np.ndarray, n_hidden: int, z: np.ndarray) -> np.ndarray:
    w1, b1, w2, b2 = _unpack(pvec, n_hidden)
    return np.tanh(z @ w1.T + b1) @ w2 + b2


def train_policy_net(states: np.ndarray, labels: np.ndarray,
                     in_lo=None, in_hi=None,
                     u_lo: float = -DEFAULT_FORCE_MAX, u_hi: float = DEFAULT_FORCE_MAX,
                     n_hidden: int = DEFAULT_HIDDEN,
                     split: tuple = (0.70, 0.15, 0.15),
                     rng_seed: int = 0,
                     max_epochs: int = 200,
                     damping0: float = 1e-3,
                     damping_max: float = 1e10,
                     val_patience: int = 6) -> tuple[PolicyNet, TrainingReport]:
    """Fit the policy net to (state, force) samples with Levenberg-Marquardt.

    Inputs are normalized to [-1, 1] per axis over [in_lo, in_hi] (the
    data range by default); labels stay in Newtons.  Each epoch solves
    (J'J + damping I) d = J'r on the training split; the damping is
    divided by 10 on accepted steps and multiplied by 10 on rejections,
    failing once it passes damping_max.  Training stops on max_epochs or
    after `val_patience` consecutive validation-MSE increases.
    """
    states = np.asarray(states, dtype=float)
    labels = np.asarray(labels, dtype=float).reshape(-1)
    n = states.shape[0]
    if n == 0 or states.shape != (n, 4) or labels.shape != (n,):
        raise ValueError("need states (N, 4) and labels (N,), N >= 1")
    if abs(sum(split) - 1.0) > 1e-9 or len(split) != 3:
        raise ValueError("split must be three fractions summing to 1")

    lo = np.asarray(in_lo, dtype=float) if in_lo is not None else states.min(axis=0)
    hi = np.asarray(in_hi, dtype=float) if in_hi is not None else states.max(axis=0)
    span = hi - lo
    span = np.where(span > 0, span, 1.0)
    hi = lo + span
    z_all = 2.0 * (np.clip(states, lo, hi) - lo) / span - 1.0

    rng = np.random.default_rng(rng_seed)
    order = rng.permutation(n)
    n_train = max(1, int(round(split[0] * n)))
    n_val = int(round(split[1] * n))
    n_train = min(n_train, n)
    n_val = min(n_val, n - n_train)
    idx_train = order[:n_train]
    idx_val = order[n_train:n_train + n_val]
    idx_test = order[n_train + n_val:]
    z_tr, y_tr = z_all[idx_train], labels[idx_train]
    z_va, y_va = z_all[idx_val], labels[idx_val]
    z_te, y_te = z_all[idx_test], labels[idx_test]

    n_params = _param_layout(n_hidden)[3]
    pvec = np.empty(n_params)
    e1, e2, e3, _ = _param_layout(n_hidden)
    pvec[:e1] = rng.uniform(-0.5, 0.5, e1)
    pvec[e1:e2] = rng.uniform(-0.5, 0.5, e2 - e1)
    pvec[e2:e3] = rng.uniform(-1.0, 1.0, e3 - e2) / np.sqrt(n_hidden)
    pvec[e3] = 0.0

    def mse(p, z, y):
        if z.shape[0] == 0:
            return 0.0
        r = y - _net_forward(p, n_hidden, z)
        return float(np.mean(r * r))

    damping = damping0
    train_mse = mse(pvec, z_tr, y_tr)
    val_prev = mse(pvec, z_va, y_va)
    val_fail = 0
    epochs = 0
    stop_reason = "max_epochs"
    eye = np.eye(n_params)
    for epoch in range(max_epochs):
        out, jac = net_output_and_jacobian(pvec, n_hidden, z_tr)
        resid = y_tr - out
        if not np.isfinite(resid).all():
            raise TrainingFailure("non-finite loss", epoch=epoch, damping=damping)
        jtj = jac.T @ jac
        jtr = jac.T @ resid
        accepted = False
        while damping <= damping_max:
            try:
                delta = np.linalg.solve(jtj + damping * eye, jtr)
            except np.linalg.LinAlgError:
                damping *= 10.0
                continue
            if not np.isfinite(delta).all():
                damping *= 10.0
                continue
            p_try = pvec + delta
            m_try = mse(p_try, z_tr, y_tr)
            if np.isfinite(m_try) and m_try <= train_mse:
                pvec = p_try
                train_mse = m_try
                damping = max(damping / 10.0, 1e-300)
                accepted = True
                break
            damping *= 10.0
        epochs = epoch + 1
        if not accepted:
            if damping > damping_max:
                stop_reason = "damping_exceeded"
                break
        val_now = mse(pvec, z_va, y_va)
        if z_va.shape[0] > 0 and val_now > val_prev:
            val_fail += 1
            if val_fail >= val_patience:
                val_prev = val_now
                stop_reason = "validation"
                break
        else:
            val_fail = 0
        val_prev = val_now
        if train_mse <= 1e-14:
            stop_reason = "train_converged"
            break

    if stop_reason == "damping_exceeded":
        raise TrainingFailure(f"damping exceeded {damping_max:g}",
                              epoch=epochs, damping=damping)

    w1, b1, w2, b2 = _unpack(pvec, n_hidden)
    net = PolicyNet(w1.copy(), b1.copy(), w2.copy(), float(b2),
                    lo, hi, float(u_lo), float(u_hi))
    label_var = float(np.var(labels))
    test_mse = mse(pvec, z_te, y_te)
    report = TrainingReport(
        train_mse=train_mse,
        val_mse=val_prev,
        test_mse=test_mse,
        label_variance=label_var,
        normalized_test_mse=test_mse / label_var if label_var > 0 else 0.0,
        epochs=epochs,
        final_damping=damping,
        stop_reason=stop_reason,
    )
    return net, report


def save_policy_net(net: PolicyNet, path) -> None:
    """Self-describing flat binary: magic, version, JSON header, then the
    row-major weight/bias arrays as little-endian float64."""
    header = {
        "format_version": _FORMAT_VERSION,
        "layer_sizes": [4, net.n_hidden, 1],
        "activations": ["tanh", "linear"],
        "in_lo": net.in_lo.tolist(),
        "in_hi": net.in_hi.tolist(),
        "u_lo": net.u_lo,
        "u_hi": net.u_hi,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _FORMAT_VERSION, len(blob)))
        fh.write(blob)
        for arr in (net.w1, net.b1, net.w2):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        fh.write(struct.pack("<d", net.b2))


def load_policy_net(path) -> PolicyNet:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != _MAGIC:
        raise ValueError("not a policy-net file (bad magic)")
    version, hlen = struct.unpack_from("<II", data, 4)
    if version != _FORMAT_VERSION:
        raise ValueError(f"unsupported format version {version}")
    header = json.loads(data[12:12 + hlen].decode("utf-8"))
    sizes = header["layer_sizes"]
    if len(sizes) != 3 or sizes[0] != 4 or sizes[2] != 1:
        raise ValueError(f"unsupported layer sizes {sizes}")
    h = sizes[1]
    off = 12 + hlen
    def take(count):
        nonlocal off
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=off).astype(float)
        off += count * 8
        return arr
    w1 = take(h * 4).reshape(h, 4)
    b1 = take(h)
    w2 = take(h)
    b2 = float(take(1)[0])
    return PolicyNet(w1, b1, w2, b2,
                     np.array(header["in_lo"], dtype=float),
                     np.array(header["in_hi"], dtype=float),
                     float(header["u_lo"]), float(header["u_hi"]))
