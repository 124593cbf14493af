from __future__ import annotations

import datetime
import logging
import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import optimize

from stickyflow.cone_projection import project_cone
from stickyflow.force_fields import (
    ForceEvaluationError,
    ForceField,
    discrete_projected_force,
)
from stickyflow.transport_core import (
    LagrangianState,
    ParticleSystem,
    TransportMap,
    VelocityField,
    check_same_grid,
    plateaus,
    project_plateau_average,
)

SIMULTANEITY_TOLERANCE = 1e-12
EVENT_TIME_TOLERANCE = 1e-12
DEFAULT_RK_STEP = 1e-3
MIN_RK_STEP = 1e-12
RK_TOLERANCE = 1e-10
PROGRESS_PERIOD = datetime.timedelta(seconds=5)

Members = Tuple[Tuple[int, ...], ...]


class NumericalFailure(ArithmeticError):
    def __init__(self, message: str, step: int, time: float):
        super().__init__(f"{message} (step {step}, t={time!r})")
        self.step = step
        self.time = time


class EventCascadeError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class CollisionEvent:
    time: float
    merged_groups: Members
    pre_masses: Tuple[np.ndarray, ...]
    pre_velocities: Tuple[np.ndarray, ...]
    post_velocities: np.ndarray
    system_after: ParticleSystem

    def momentum_defect(self) -> float:
        before = sum(float(np.dot(m, v)) for m, v in zip(self.pre_masses, self.pre_velocities))
        after = sum(float(m.sum()) * v for m, v in zip(self.pre_masses, self.post_velocities.tolist()))
        return abs(before - after)


@dataclass(frozen=True, eq=False)
class Trajectory:
    sample_times: np.ndarray
    states: Tuple[Union[ParticleSystem, LagrangianState], ...]
    events: Tuple[CollisionEvent, ...] = ()
    groups: Optional[Tuple[Members, ...]] = None
    n_initial: int = 0

    def __post_init__(self):
        times = np.asarray(self.sample_times, dtype=float)
        if times.size != len(self.states):
            raise ValueError(f"{times.size} sample times for {len(self.states)} states")
        if np.any(np.diff(times) <= 0):
            raise ValueError("Sample times must be strictly increasing")
        if self.n_initial and len(self.events) > self.n_initial - 1:
            raise EventCascadeError(f"{len(self.events)} events for {self.n_initial} particles")
        object.__setattr__(self, "sample_times", times)

    def __len__(self) -> int:
        return len(self.states)

    @property
    def final(self):
        return self.states[-1]


def sample_ladder(t_end: float, sample_dt: float) -> np.ndarray:
    if t_end <= 0 or sample_dt <= 0:
        raise ValueError(f"Need t_end > 0 and sample_dt > 0, got {t_end}, {sample_dt}")
    count = int(math.ceil(t_end / sample_dt - 1e-9))
    times = np.arange(count + 1) * sample_dt
    times[-1] = t_end
    return times


def _gap_root(dx: float, dv: float, da: float) -> Optional[float]:
    """Smallest t >= 0 with dx + dv t + da t^2 / 2 = 0, for a gap that closes."""
    if dx <= 0:
        return 0.0 if dv < 0 or (dv == 0 and da < 0) else None
    if da == 0:
        return -dx / dv if dv < 0 else None
    disc = dv * dv - 2 * da * dx
    if disc < 0:
        return None
    # cancellation-free pair of roots of (da/2) t^2 + dv t + dx
    q = -0.5 * (dv + math.copysign(math.sqrt(disc), dv))
    roots = [r for r in (q / (0.5 * da), dx / q) if r >= 0]
    return min(roots) if roots else None


def next_collision_time(sys: ParticleSystem, accelerations: np.ndarray) -> Optional[Tuple[float, Tuple[int, ...]]]:
    """First closing of an adjacent gap under constant accelerations.

    Pair i is the gap between particles i and i+1. All pairs whose root lies within the
    simultaneity tolerance of the first one are returned.
    """
    dx = np.diff(sys.positions).tolist()
    dv = np.diff(sys.velocities).tolist()
    da = np.diff(np.asarray(accelerations, dtype=float)).tolist()
    roots = [(_gap_root(*gap), i) for i, gap in enumerate(zip(dx, dv, da))]
    roots = [(t, i) for t, i in roots if t is not None]
    if not roots:
        return None
    first = min(t for t, _ in roots)
    return first, tuple(i for t, i in roots if t <= first + SIMULTANEITY_TOLERANCE)


def _blocks(joined: np.ndarray) -> np.ndarray:
    """Block start indices plus end sentinel, given which adjacent pairs are joined."""
    breaks = np.flatnonzero(~joined) + 1
    return np.concatenate(([0], breaks, [joined.size + 1]))


def _merge_joined(sys: ParticleSystem, joined: np.ndarray) -> Tuple[ParticleSystem, np.ndarray]:
    bounds = _blocks(joined)
    starts, sizes = bounds[:-1], np.diff(bounds)
    masses = np.add.reduceat(sys.masses, starts)
    base = sys.positions[starts]
    shift = np.add.reduceat(sys.masses * (sys.positions - np.repeat(base, sizes)), starts)
    positions = base + shift / masses
    velocities = np.add.reduceat(sys.masses * sys.velocities, starts) / masses
    single = sizes == 1
    masses = np.where(single, sys.masses[starts], masses)
    positions = np.where(single, base, positions)
    velocities = np.where(single, sys.velocities[starts], velocities)
    return ParticleSystem(masses, np.maximum.accumulate(positions), velocities), bounds


def merge_groups(sys: ParticleSystem, groups: Sequence[Sequence[int]]) -> ParticleSystem:
    """Merge contiguous groups of particles into single particles, conserving mass and momentum."""
    joined = np.zeros(max(len(sys) - 1, 0), dtype=bool)
    for group in groups:
        indices = sorted(int(i) for i in group)
        if indices != list(range(indices[0], indices[-1] + 1)):
            raise ValueError(f"Group {indices} is not contiguous")
        joined[indices[0] : indices[-1]] = True
    return _merge_joined(sys, joined)[0]


def momentum(sys: ParticleSystem) -> float:
    return sys.momentum()


def kinetic_energy(sys: ParticleSystem) -> float:
    return sys.kinetic_energy()


class _StickyRun:
    """Mutable bookkeeping of one event-driven run."""

    def __init__(self, sys: ParticleSystem, f: ForceField):
        self.f = f
        self.sys = sys
        self.members: Members = tuple((i,) for i in range(len(sys)))
        self.n_initial = len(sys)
        self.time = 0.0
        self.step = 0
        self.events: List[CollisionEvent] = []
        self.samples: List[ParticleSystem] = []
        self.sample_groups: List[Members] = []

    def accelerations(self, positions: Optional[np.ndarray] = None) -> np.ndarray:
        try:
            if positions is None:
                return discrete_projected_force(self.f, self.sys)
            acc = self.f.accelerations(self.sys.masses, positions)
        except ForceEvaluationError as ex:
            raise NumericalFailure(str(ex), self.step, self.time) from ex
        if not np.all(np.isfinite(acc)):
            raise NumericalFailure("Non-finite accelerations", self.step, self.time)
        return acc

    def system(self, positions: np.ndarray, velocities: np.ndarray) -> ParticleSystem:
        if not (np.all(np.isfinite(positions)) and np.all(np.isfinite(velocities))):
            raise NumericalFailure("Non-finite particle state", self.step, self.time)
        return ParticleSystem(self.sys.masses, np.maximum.accumulate(positions), velocities)

    def record(self, state: ParticleSystem) -> None:
        self.samples.append(state)
        self.sample_groups.append(self.members)

    def collide(self, positions: np.ndarray, velocities: np.ndarray, pairs: Sequence[int]) -> None:
        joined = np.zeros(len(self.sys) - 1, dtype=bool)
        joined[list(pairs)] = True
        # pairs that crossed by rounding collide as well
        joined |= np.diff(positions) < 0
        arrived = self.system(positions, velocities)
        merged, bounds = _merge_joined(arrived, joined)
        starts, ends = bounds[:-1].tolist(), bounds[1:].tolist()
        members = tuple(sum(self.members[a:b], ()) for a, b in zip(starts, ends))
        hit = [k for k, (a, b) in enumerate(zip(starts, ends)) if b - a > 1]
        event = CollisionEvent(
            time=self.time,
            merged_groups=tuple(members[k] for k in hit),
            pre_masses=tuple(np.array(arrived.masses[starts[k] : ends[k]]) for k in hit),
            pre_velocities=tuple(np.array(arrived.velocities[starts[k] : ends[k]]) for k in hit),
            post_velocities=np.array(merged.velocities[hit]),
            system_after=merged,
        )
        self.events.append(event)
        if len(self.events) > self.n_initial - 1:
            raise EventCascadeError(f"{len(self.events)} collisions among {self.n_initial} particles")
        logging.debug("t=%s: merged %s, %s particles left", self.time, event.merged_groups, len(merged))
        self.sys = merged
        self.members = members

    def trajectory(self, times: np.ndarray) -> Trajectory:
        return Trajectory(times, tuple(self.samples), tuple(self.events), tuple(self.sample_groups), self.n_initial)


def _advance_exact(sys: ParticleSystem, acc: np.ndarray, dt: float) -> Tuple[np.ndarray, np.ndarray]:
    return sys.positions + sys.velocities * dt + 0.5 * acc * dt * dt, sys.velocities + acc * dt


def _evolve_exact(run: _StickyRun, times: np.ndarray) -> None:
    pending = list(times)
    while True:
        acc = run.accelerations()
        hit = next_collision_time(run.sys, acc)
        t_event = run.time + hit[0] if hit is not None else math.inf
        while pending and pending[0] < t_event:
            run.record(run.system(*_advance_exact(run.sys, acc, pending.pop(0) - run.time)))
        if not pending:
            return
        positions, velocities = _advance_exact(run.sys, acc, t_event - run.time)
        run.time = t_event
        run.step += 1
        run.collide(positions, velocities, hit[1])


def _rk4(run: _StickyRun, positions: np.ndarray, velocities: np.ndarray, h: float) -> Tuple[np.ndarray, np.ndarray]:
    k1x, k1v = velocities, run.accelerations(positions)
    k2x, k2v = velocities + 0.5 * h * k1v, run.accelerations(positions + 0.5 * h * k1x)
    k3x, k3v = velocities + 0.5 * h * k2v, run.accelerations(positions + 0.5 * h * k2x)
    k4x, k4v = velocities + h * k3v, run.accelerations(positions + h * k3x)
    return (
        positions + h / 6 * (k1x + 2 * k2x + 2 * k3x + k4x),
        velocities + h / 6 * (k1v + 2 * k2v + 2 * k3v + k4v),
    )


def _rk4_halves(run: _StickyRun, positions: np.ndarray, velocities: np.ndarray, h: float) -> Tuple[np.ndarray, np.ndarray]:
    mid_x, mid_v = _rk4(run, positions, velocities, h / 2)
    return _rk4(run, mid_x, mid_v, h / 2)


def _controlled_step(
    run: _StickyRun, positions: np.ndarray, velocities: np.ndarray, h: float
) -> Tuple[np.ndarray, np.ndarray, float, float]:
    """Step doubling: accept two half steps once they agree with the full step to RK_TOLERANCE.

    Returns the new positions and velocities, the step taken and the proposed next step.
    """
    while True:
        full_x, full_v = _rk4(run, positions, velocities, h)
        new_x, new_v = _rk4_halves(run, positions, velocities, h)
        err = max(float(np.max(np.abs(new_x - full_x))), float(np.max(np.abs(new_v - full_v)))) / 15
        scale = 1.0 + max(float(np.max(np.abs(new_x))), float(np.max(np.abs(new_v))))
        if not math.isfinite(err):
            raise NumericalFailure("Non-finite RK4 error estimate", run.step, run.time)
        ratio = err / (RK_TOLERANCE * scale)
        if ratio <= 1:
            grow = 2.0 if ratio == 0 else min(2.0, 0.9 * ratio**-0.2)
            return new_x, new_v, h, h * grow
        if h <= MIN_RK_STEP:
            raise NumericalFailure(f"RK4 step fell below {MIN_RK_STEP}", run.step, run.time)
        h = max(h * max(0.1, 0.9 * ratio**-0.25), MIN_RK_STEP)


def _localize(gap: Callable[[float], float], h: float) -> float:
    return optimize.brentq(gap, 0.0, h, xtol=EVENT_TIME_TOLERANCE)


def _evolve_rk4(run: _StickyRun, times: np.ndarray, rk_step: float) -> None:
    pending = list(times)
    h_next = rk_step
    while pending:
        hit = next_collision_time(run.sys, run.accelerations())
        if hit is not None and hit[0] == 0.0:
            run.step += 1
            run.collide(run.sys.positions, run.sys.velocities, hit[1])
            continue
        if pending[0] <= run.time:
            run.record(run.sys)
            pending.pop(0)
            continue

        target = pending[0]
        room = target - run.time
        x, v = run.sys.positions, run.sys.velocities
        open_pairs = np.flatnonzero(np.diff(x) > 0)
        new_x, new_v, h, h_next = _controlled_step(run, x, v, min(h_next, rk_step, room))
        closed = [int(i) for i in open_pairs if new_x[i + 1] - new_x[i] <= 0]
        run.step += 1
        if not closed:
            run.time = target if h == room else run.time + h
            run.sys = run.system(new_x, new_v)
            logging.info(
                "t=%s, %s particles",
                run.time,
                len(run.sys),
                extra={"rate_limit_tag": "sticky-progress", "rate_limit_timeout": PROGRESS_PERIOD},
            )
            continue

        def pair_gap(s: float, i: int) -> float:
            stage_x, _ = _rk4_halves(run, x, v, s)
            return float(stage_x[i + 1] - stage_x[i])

        roots = {i: _localize(lambda s, i=i: pair_gap(s, i), h) for i in closed}
        first = min(roots.values())
        pairs = [i for i, r in roots.items() if r <= first + SIMULTANEITY_TOLERANCE]
        run.time += first
        run.collide(*_rk4_halves(run, x, v, first), pairs)


def evolve_sticky(
    sys: ParticleSystem,
    f: ForceField,
    t_end: float,
    sample_dt: float,
    rk_step: Optional[float] = None,
) -> Trajectory:
    """Event-driven sticky particle evolution.

    Accelerations that are constant between collisions are advanced exactly with closed-form
    collision times; any other force goes through RK4 with step-doubling error control (rk_step is the
    largest step) and root-finding on gaps.
    Merged particles never split.
    """
    times = sample_ladder(t_end, sample_dt)
    run = _StickyRun(sys, f)
    if f.has_constant_accelerations:
        _evolve_exact(run, times)
    else:
        _evolve_rk4(run, times, min(rk_step or DEFAULT_RK_STEP, sample_dt))
    logging.info("Sticky run to t=%s: %s collisions, %s particles left", t_end, len(run.events), len(run.sys))
    return run.trajectory(times)


def _inclusion_state(x: TransportMap, y: np.ndarray) -> LagrangianState:
    v = project_plateau_average(VelocityField(x.grid, y), plateaus(x))
    return LagrangianState(x, v)


def evolve_inclusion(
    x0: TransportMap,
    v0: VelocityField,
    f: ForceField,
    t_end: float,
    tau: float,
    sample_every: int = 1,
) -> Trajectory:
    """Projected splitting for the first-order inclusion.

    Y_{n+1} = Y_n + tau F[X_n], X_{n+1} = P_K(X_n + tau Y_{n+1}); the recorded velocity is Y
    averaged over the plateaus of X. tau is shrunk so that a whole number of steps ends at t_end.
    """
    check_same_grid(x0, v0)
    if t_end <= 0 or tau <= 0:
        raise ValueError(f"Need t_end > 0 and tau > 0, got {t_end}, {tau}")
    if sample_every < 1:
        raise ValueError(f"sample_every must be positive, got {sample_every}")
    n_steps = int(math.ceil(t_end / tau - 1e-9))
    tau = t_end / n_steps

    x = x0
    y = np.array(v0.values)
    times = [0.0]
    states = [_inclusion_state(x, y)]
    for step in range(1, n_steps + 1):
        try:
            force = f.on_values(x.values)
        except ForceEvaluationError as ex:
            raise NumericalFailure(str(ex), step, (step - 1) * tau) from ex
        y = y + tau * force
        trial = x.values + tau * y
        if not np.all(np.isfinite(trial)):
            raise NumericalFailure("Non-finite inclusion iterate", step, step * tau)
        x = project_cone(trial, x.grid)
        if step % sample_every == 0 or step == n_steps:
            times.append(t_end if step == n_steps else step * tau)
            states.append(_inclusion_state(x, y))
        logging.info(
            "Inclusion step %s/%s",
            step,
            n_steps,
            extra={"rate_limit_tag": "inclusion-progress", "rate_limit_timeout": PROGRESS_PERIOD},
        )
    return Trajectory(np.array(times), tuple(states))
