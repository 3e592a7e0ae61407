"""Nonlinear-threshold-accepting search over the six PID gains.

The tuner runs `n_o` independent searches.  Each starts from a uniform
random gain tuple inside the bounds box, then for `n_t` iterations
resamples one randomly chosen gain across its whole interval and accepts
the candidate whenever

    cost_new <= cost_old / ||H(omega)||,   ||H(omega)|| = 1/sqrt(1 + (omega/omega0)^2),

so mildly worse moves pass while the probe frequency omega is high.  omega
decreases by delta_omega after each iteration while that keeps it
positive.  The run's result is its final accepted point; the best run
(lowest final cost, first one on ties) wins.
"""
from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .control import PidGains
from .metrics import PENALTY_COST

# Gain search box, ordered like PidGains:
# (kp_theta, ki_theta, kd_theta, kp_x, ki_x, kd_x)
DEFAULT_BOUNDS = (
    (-44.0, -36.0),
    (-2.0, 2.0),
    (-10.0, -6.0),
    (-3.0, 1.0),
    (-2.0, 2.0),
    (-5.0, -1.0),
)


@dataclass(frozen=True)
class NltaConfig:
    bounds: tuple = DEFAULT_BOUNDS
    omega0: float = 200.0
    omega1: float = 50.0
    delta_omega: float = 0.005
    n_t: int = 1000
    n_o: int = 10
    rng_seed: int = 0
    # Optional local-move variant: when set, the mutated gain moves by a
    # uniform step of at most move_scale * interval width instead of a
    # full-range redraw.  Off by default.
    move_scale: Optional[float] = None

    def __post_init__(self):
        if len(self.bounds) != 6:
            raise ValueError("bounds must give 6 (lo, hi) intervals")
        for lo, hi in self.bounds:
            if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                raise ValueError(f"each interval needs lo < hi, got ({lo}, {hi})")
        if not self.omega0 > 0.0:
            raise ValueError("omega0 must be positive")
        if self.omega1 < 0.0:
            raise ValueError("omega1 must be nonnegative")
        if not self.delta_omega > 0.0:
            raise ValueError("delta_omega must be positive")
        if self.n_t < 0 or self.n_o < 1:
            raise ValueError("need n_t >= 0 and n_o >= 1")
        if self.move_scale is not None and not (0.0 < self.move_scale <= 1.0):
            raise ValueError("move_scale must be in (0, 1]")


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    omega: float
    cost_old: float
    cost_new: float
    accepted: bool


@dataclass(frozen=True)
class NltaRunRecord:
    run_index: int
    best_gains: PidGains
    best_cost: float
    iterations: tuple = ()


def threshold(omega: float, omega0: float) -> float:
    """Low-pass magnitude ||H(omega)|| = 1/sqrt(1 + (omega/omega0)^2)."""
    if omega < 0.0 or omega0 <= 0.0:
        raise ValueError("need omega >= 0 and omega0 > 0")
    return 1.0 / math.sqrt(1.0 + (omega / omega0) ** 2)


def accept(of_new: float, of_old: float, omega: float, omega0: float) -> bool:
    """Accept improvements and any worsening within the threshold envelope."""
    if of_new <= of_old:
        return True
    return of_new <= of_old / threshold(omega, omega0)


def propose_neighbor(current: PidGains, bounds, rng: np.random.Generator,
                     move_scale: Optional[float] = None) -> PidGains:
    """Resample exactly one uniformly chosen gain inside its own interval.

    With move_scale set, the chosen gain instead takes a uniform step of
    at most move_scale times its interval width, clipped to the bounds.
    """
    vals = current.as_array()
    j = int(rng.integers(0, 6))
    lo, hi = bounds[j]
    if move_scale is None:
        vals[j] = rng.uniform(lo, hi)
    else:
        width = (hi - lo) * move_scale
        vals[j] = float(np.clip(vals[j] + rng.uniform(-width, width), lo, hi))
    return PidGains.from_array(vals)


def _uniform_point(bounds, rng: np.random.Generator) -> PidGains:
    return PidGains.from_array([rng.uniform(lo, hi) for lo, hi in bounds])


def _safe_cost(evaluate: Callable[[PidGains], float], gains: PidGains) -> float:
    """Score a candidate; failed or non-finite evaluations get the penalty."""
    from .plant import DivergenceError

    try:
        cost = float(evaluate(gains))
    except DivergenceError:
        return PENALTY_COST
    if not np.isfinite(cost):
        return PENALTY_COST
    return cost


def _single_run(run_index: int, config: NltaConfig, evaluate, seed_seq,
                keep_log: bool) -> NltaRunRecord:
    rng = np.random.default_rng(seed_seq)
    gains = _uniform_point(config.bounds, rng)
    cost = _safe_cost(evaluate, gains)
    omega = config.omega1
    log = []
    for it in range(config.n_t):
        candidate = propose_neighbor(gains, config.bounds, rng, config.move_scale)
        cost_new = _safe_cost(evaluate, candidate)
        ok = accept(cost_new, cost, omega, config.omega0)
        if keep_log:
            log.append(IterationRecord(it, omega, cost, cost_new, ok))
        if ok:
            gains = candidate
            cost = cost_new
        if omega - config.delta_omega > 0.0:
            omega -= config.delta_omega
    return NltaRunRecord(run_index, gains, cost, tuple(log))


def run(config: NltaConfig, evaluate: Callable[[PidGains], float],
        keep_log: bool = True, max_workers: Optional[int] = None
        ) -> tuple[PidGains, list[NltaRunRecord]]:
    """Execute the full multi-run search against an objective evaluator.

    `evaluate` maps PidGains to a scalar cost; divergence or non-finite
    scores become PENALTY_COST so the search always continues.  The n_o
    runs use split substreams of rng_seed and may execute concurrently;
    results are deterministic for a fixed (config, seed).
    Returns (gains of the run with the lowest final cost, all run records).
    """
    seeds = np.random.SeedSequence(config.rng_seed).spawn(config.n_o)
    if max_workers is None:
        max_workers = min(config.n_o, os.cpu_count() or 1)
    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            records = list(pool.map(
                lambda i: _single_run(i, config, evaluate, seeds[i], keep_log),
                range(config.n_o)))
    else:
        records = [_single_run(i, config, evaluate, seeds[i], keep_log)
                   for i in range(config.n_o)]
    best = min(records, key=lambda r: (r.best_cost, r.run_index))
    return best.best_gains, records


LOG_HEADER = ("run", "iter", "omega", "cost_old", "cost_new", "accepted")


def write_log_csv(records: Sequence[NltaRunRecord], path) -> None:
    """Dump all per-iteration logs as CSV: run, iter, omega, cost_old,
    cost_new, accepted."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(LOG_HEADER)
        for rec in records:
            for it in rec.iterations:
                w.writerow([rec.run_index, it.iteration,
                            format(it.omega, ".17g"),
                            format(it.cost_old, ".17g"),
                            format(it.cost_new, ".17g"),
                            int(it.accepted)])


def render_log_csv(records: Sequence[NltaRunRecord]) -> str:
    """Same content as write_log_csv, returned as a string."""
    import io

    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(LOG_HEADER)
    for rec in records:
        for it in rec.iterations:
            w.writerow([rec.run_index, it.iteration,
                        format(it.omega, ".17g"),
                        format(it.cost_old, ".17g"),
                        format(it.cost_new, ".17g"),
                        int(it.accepted)])
    return buf.getvalue()
