from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np

from stickyflow.force_fields import ForceField, discrete_projected_force, eval_force
from stickyflow.particle_dynamics import Trajectory
from stickyflow.transport_core import (
    EulerianMeasure,
    LagrangianState,
    ParticleSystem,
    TransportMap,
    VelocityField,
    check_same_grid,
    constant_runs,
    u2_semidistance,
    wasserstein2,
)

TEST_FUNCTION_KINDS = ("bump", "x-bump", "sin-bump")


class SupportOutsideWindow(ValueError):
    pass


def _bump(s: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(1 - s^2)^2 on |s| < 1 and its derivative in s."""
    inside = np.abs(s) < 1
    one_minus = np.where(inside, 1 - s * s, 0.0)
    return one_minus**2, -4 * s * one_minus


@dataclass(frozen=True)
class TestFunction:
    """phi(t, x) = T(t) B(x), a C1 bump in time times a spatial profile B."""

    __test__ = False

    t_start: float
    t_end: float
    x_center: float
    x_radius: float
    kind: str = "bump"
    wavenumber: float = 2 * np.pi

    def __post_init__(self):
        if self.kind not in TEST_FUNCTION_KINDS:
            raise ValueError(f"Unknown test function kind {self.kind!r}")
        if not self.t_start < self.t_end or self.x_radius <= 0:
            raise ValueError("Test function needs t_start < t_end and a positive radius")

    @property
    def support(self) -> Tuple[Tuple[float, float], Tuple[float, float]]:
        return (self.t_start, self.t_end), (self.x_center - self.x_radius, self.x_center + self.x_radius)

    def _s(self, t):
        return (2 * np.asarray(t, dtype=float) - self.t_start - self.t_end) / (self.t_end - self.t_start)

    def time_profile(self, t) -> np.ndarray:
        return _bump(self._s(t))[0]

    def time_integral(self, a, b) -> np.ndarray:
        """Exact integral of T over [a, b]."""

        def antiderivative(s):
            s = np.clip(s, -1.0, 1.0)
            return s - 2 * s**3 / 3 + s**5 / 5

        half = (self.t_end - self.t_start) / 2
        return (antiderivative(self._s(b)) - antiderivative(self._s(a))) * half

    def space_profile(self, x) -> Tuple[np.ndarray, np.ndarray]:
        """B(x) and B'(x)."""
        x = np.asarray(x, dtype=float)
        b, db = _bump((x - self.x_center) / self.x_radius)
        db = db / self.x_radius
        if self.kind == "bump":
            return b, db
        if self.kind == "x-bump":
            return x * b, b + x * db
        k = self.wavenumber
        return np.sin(k * x) * b, k * np.cos(k * x) * b + np.sin(k * x) * db

    def describe(self) -> Dict:
        return {
            "kind": self.kind,
            "t": [self.t_start, self.t_end],
            "x_center": self.x_center,
            "x_radius": self.x_radius,
        }


def default_test_functions(t_end: float, x_center: float, x_radius: float) -> List[TestFunction]:
    t_a, t_b = 0.1 * t_end, 0.9 * t_end
    return [TestFunction(t_a, t_b, x_center, x_radius, kind) for kind in TEST_FUNCTION_KINDS]


def to_eulerian(x: TransportMap, v: VelocityField) -> EulerianMeasure:
    check_same_grid(x, v)
    bounds = constant_runs(x.values)
    starts = bounds[:-1]
    n_cells = x.grid.n_cells
    masses = np.diff(bounds) / n_cells
    momenta = np.add.reduceat(v.values, starts) / n_cells
    return EulerianMeasure(x.values[starts], masses, momenta)


def d2_distance(x1: TransportMap, v1: VelocityField, x2: TransportMap, v2: VelocityField) -> float:
    return max(wasserstein2(x1, x2), u2_semidistance(x1, v1, x2, v2))


State = Union[ParticleSystem, LagrangianState]


def _atoms(state: State, f: ForceField) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Positions, masses, velocities and force per atom (mass times acceleration)."""
    if isinstance(state, ParticleSystem):
        acc = discrete_projected_force(f, state)
        return state.positions, state.masses, state.velocities, state.masses * acc
    n_cells = state.grid.n_cells
    weights = np.full(n_cells, 1.0 / n_cells)
    return state.x.values, weights, state.v.values, eval_force(f, state.x) / n_cells


def _nodes(traj: Trajectory) -> List[Tuple[float, State]]:
    nodes = list(zip(traj.sample_times.tolist(), traj.states))
    nodes.extend((event.time, event.system_after) for event in traj.events)
    # stable: at equal times the sample (recorded after the merge) goes first
    return sorted(nodes, key=lambda node: node[0])


def weak_residual(traj: Trajectory, f: ForceField, phi: TestFunction) -> Tuple[float, float]:
    """Mass and momentum residuals of the weak conservation laws against phi.

    The state is held constant between consecutive nodes (samples and collision times) and phi
    is integrated exactly in time on each piece.
    """
    (t_a, t_b), _ = phi.support
    if t_a < traj.sample_times[0] or t_b > traj.sample_times[-1]:
        raise SupportOutsideWindow(
            f"Test function lives on [{t_a}, {t_b}], trajectory covers "
            f"[{traj.sample_times[0]}, {traj.sample_times[-1]}]"
        )
    nodes = _nodes(traj)
    r_mass = r_momentum = 0.0
    for (t0, state), (t1, _) in zip(nodes[:-1], nodes[1:]):
        if t1 <= t0 or t1 <= t_a or t0 >= t_b:
            continue
        d_profile = float(phi.time_profile(t1) - phi.time_profile(t0))
        integral = float(phi.time_integral(t0, t1))
        x, masses, v, force = _atoms(state, f)
        b, db = phi.space_profile(x)
        r_mass += d_profile * float(np.dot(masses, b)) + integral * float(np.dot(masses * v, db))
        r_momentum += (
            d_profile * float(np.dot(masses * v, b))
            + integral * float(np.dot(masses * v * v, db))
            + integral * float(np.dot(force, b))
        )
    logging.debug("Weak residuals against %s: mass %s, momentum %s", phi.describe(), r_mass, r_momentum)
    return r_mass, r_momentum


def richardson_ratios(residuals: Sequence[float]) -> List[float]:
    """Successive ratios |r_k| / |r_{k+1}| for residuals under dt halving."""
    res = []
    for coarse, fine in zip(residuals[:-1], residuals[1:]):
        res.append(abs(coarse) / abs(fine) if fine else float("inf"))
    return res
