from __future__ import annotations

import datetime
import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from stickyflow.cone_projection import periodic_rearrange
from stickyflow.transport_core import Grid, InvalidState, frozen_array

DEFAULT_GRID_SIZE = 400
DEFAULT_TAU = 0.001
DEFAULT_STEPS = 5000
ENERGY_SLACK = 1e-12
PROGRESS_PERIOD = datetime.timedelta(seconds=5)


@dataclass(frozen=True, eq=False)
class PeriodicState:
    """Positions X(m_i) with X - id 1-periodic, and velocities V(m_i)."""

    grid: Grid
    x_values: np.ndarray
    v_values: np.ndarray

    def __post_init__(self):
        x = frozen_array(self.x_values, "periodic positions")
        v = frozen_array(self.v_values, "periodic velocities")
        if not x.size == v.size == self.grid.n_cells:
            raise InvalidState(f"Expected {self.grid.n_cells} positions and velocities, got {x.size} and {v.size}")
        object.__setattr__(self, "x_values", x)
        object.__setattr__(self, "v_values", v)

    def displacement(self) -> np.ndarray:
        return self.x_values - self.grid.midpoints()

    def energy(self) -> float:
        return float(np.mean(self.displacement() ** 2 + self.v_values**2))

    def is_sorted(self) -> bool:
        return bool(np.all(np.diff(self.x_values) >= 0))


def trivial_state(grid: Grid) -> PeriodicState:
    return PeriodicState(grid, grid.midpoints(), np.zeros(grid.n_cells))


def fig123_initial(grid: Optional[Grid] = None) -> PeriodicState:
    """X0 = id, V0 = 4 sin(2 pi m) on the default 400-point grid."""
    grid = grid or Grid(DEFAULT_GRID_SIZE)
    m = grid.midpoints()
    return PeriodicState(grid, m, 4 * np.sin(2 * np.pi * m))


def _rotate(s: PeriodicState, angle: float) -> PeriodicState:
    m = s.grid.midpoints()
    d = s.x_values - m
    cos, sin = math.cos(angle), math.sin(angle)
    return PeriodicState(s.grid, m + d * cos + s.v_values * sin, -d * sin + s.v_values * cos)


def predictor(s: PeriodicState, tau: float) -> PeriodicState:
    """Exact rotation of (X - m, V) by the angle tau, point by point."""
    if tau <= 0:
        raise ValueError(f"Time step must be positive, got {tau}")
    return _rotate(s, tau)


def corrector(s: PeriodicState) -> PeriodicState:
    return PeriodicState(s.grid, periodic_rearrange(s.x_values), s.v_values)


def pendulum_solution(initial: PeriodicState, t: float) -> PeriodicState:
    """Independent pendulums, the exact solution while no two of them cross."""
    return _rotate(initial, t)


@dataclass(frozen=True, eq=False)
class PeriodicRun:
    tau: float
    steps: np.ndarray
    energies: np.ndarray
    sample_steps: np.ndarray
    states: Tuple[PeriodicState, ...]

    @property
    def sample_times(self) -> np.ndarray:
        return self.sample_steps * self.tau

    @property
    def times(self) -> np.ndarray:
        return self.steps * self.tau

    def state_at(self, t: float) -> PeriodicState:
        """The sampled state closest to t."""
        return self.states[int(np.argmin(np.abs(self.sample_times - t)))]

    def energy_violations(self, slack: float = ENERGY_SLACK) -> np.ndarray:
        return np.flatnonzero(np.diff(self.energies) > slack * self.energies[0])


def run(initial: PeriodicState, tau: float, n_steps: int, sample_every: int = 1) -> PeriodicRun:
    if tau <= 0:
        raise ValueError(f"Time step must be positive, got {tau}")
    if n_steps < 0 or sample_every < 1:
        raise ValueError(f"Need n_steps >= 0 and sample_every >= 1, got {n_steps}, {sample_every}")
    state = initial
    energies = [state.energy()]
    sample_steps = [0]
    states = [state]
    for step in range(1, n_steps + 1):
        state = corrector(predictor(state, tau))
        energies.append(state.energy())
        if step % sample_every == 0 or step == n_steps:
            sample_steps.append(step)
            states.append(state)
        logging.info(
            "Periodic step %s/%s, energy %s",
            step,
            n_steps,
            energies[-1],
            extra={"rate_limit_tag": "periodic-progress", "rate_limit_timeout": PROGRESS_PERIOD},
        )
    res = PeriodicRun(tau, np.arange(n_steps + 1), np.array(energies), np.array(sample_steps), tuple(states))
    violations = res.energy_violations()
    if violations.size:
        logging.warning("Energy grew at %s steps, first at step %s", violations.size, violations[0] + 1)
    return res


def joint_distance(a: PeriodicState, b: PeriodicState) -> float:
    return math.sqrt(float(np.mean((a.x_values - b.x_values) ** 2 + (a.v_values - b.v_values) ** 2)))


def run_pair(a: PeriodicState, b: PeriodicState, tau: float, n_steps: int) -> np.ndarray:
    """Joint L2 distance between two lock-step runs, one entry per step including step 0."""
    if a.grid != b.grid:
        raise InvalidState("Paired runs need the same grid")
    distances = [joint_distance(a, b)]
    for _ in range(n_steps):
        a = corrector(predictor(a, tau))
        b = corrector(predictor(b, tau))
        distances.append(joint_distance(a, b))
    return np.array(distances)


def cluster_fraction(s: PeriodicState, gap_tol: float) -> float:
    """Fraction of points with a neighbour closer than gap_tol."""
    gaps = np.diff(s.x_values)
    close = gaps < gap_tol
    crowded = np.zeros(s.x_values.size, dtype=bool)
    crowded[:-1] |= close
    crowded[1:] |= close
    return float(np.mean(crowded))


def metric_inequality_gap(
    state_prev: PeriodicState,
    state_next: PeriodicState,
    tau: float,
    y: Sequence[float],
    w: Sequence[float],
) -> float:
    """Excess of one step over the discrete metric inequality against a comparison pair (Y, W).

    Returns D_next - D_prev - 2 tau int[(X - Y) V - (X - m)(V - W)], with D the squared joint
    distance to (Y, W) and the integral taken at the earlier state. Y must be nondecreasing with
    Y - id periodic; the excess is O(tau^2).
    """
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    if np.any(np.diff(y) < 0):
        raise InvalidState("Comparison positions must be nondecreasing")
    m = state_prev.grid.midpoints()

    def distance(s: PeriodicState) -> float:
        return float(np.mean((s.x_values - y) ** 2 + (s.v_values - w) ** 2))

    x, v = state_prev.x_values, state_prev.v_values
    slope = 2 * float(np.mean((x - y) * v - (x - m) * (v - w)))
    return distance(state_next) - distance(state_prev) - tau * slope


def periodicity_defect(res: PeriodicRun, t_a: float, t_b: float) -> float:
    """Relative joint L2 distance between the sampled states nearest t_a and t_b."""
    a, b = res.state_at(t_a), res.state_at(t_b)
    scale = math.sqrt(max(a.energy(), b.energy()))
    return joint_distance(a, b) / scale if scale else 0.0


def energy_series(res: PeriodicRun) -> List[Tuple[int, float, float]]:
    return list(zip(res.steps.tolist(), res.times.tolist(), res.energies.tolist()))
