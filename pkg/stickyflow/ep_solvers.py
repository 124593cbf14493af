from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from stickyflow.cone_projection import project_cone
from stickyflow.transport_core import (
    Grid,
    LagrangianState,
    TransportMap,
    VelocityField,
    check_same_grid,
    plateaus,
    project_plateau_average,
)

CERTIFICATE_TOLERANCE = 1e-10
TWO_RAREFACTION_LAMBDA = -2.0


class WrongRegime(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class EPInitialData:
    x0: TransportMap
    v0: VelocityField
    lam: float

    def __post_init__(self):
        check_same_grid(self.x0, self.v0)

    @property
    def grid(self) -> Grid:
        return self.x0.grid


def _check_time(t: float) -> None:
    if t < 0:
        raise ValueError(f"Time must be nonnegative, got {t}")


def free_flow_profile(data: EPInitialData, t: float) -> np.ndarray:
    """X0 + t V0 - lam (t^2/4)(2m - 1): the unconstrained flow whose primitive gets convexified."""
    m = data.grid.midpoints()
    return data.x0.values + t * data.v0.values - data.lam * (t * t / 4) * (2 * m - 1)


def free_flow_velocity(data: EPInitialData, t: float) -> np.ndarray:
    m = data.grid.midpoints()
    return data.v0.values - data.lam * t * (m - 0.5)


def convexified_flow(data: EPInitialData, t: float) -> TransportMap:
    """Monotone projection of the free flow, for any sign of lam."""
    _check_time(t)
    if t == 0:
        return data.x0
    return project_cone(free_flow_profile(data, t), data.grid)


def attractive_ep_solution(data: EPInitialData, t: float) -> TransportMap:
    if data.lam < 0:
        raise WrongRegime(f"Closed-form sticky solution needs lam >= 0, got {data.lam}")
    return convexified_flow(data, t)


def attractive_ep_state(data: EPInitialData, t: float) -> LagrangianState:
    x = attractive_ep_solution(data, t)
    if t == 0:
        return LagrangianState(x, data.v0)
    y = VelocityField(data.grid, free_flow_velocity(data, t))
    return LagrangianState(x, project_plateau_average(y, plateaus(x)))


def two_rarefaction_data(grid: Grid) -> EPInitialData:
    """X0 = m - 1/2, V0 = -sign(m - 1/2), with lam = -2."""
    m = grid.midpoints()
    return EPInitialData(
        TransportMap(grid, m - 0.5), VelocityField(grid, -np.sign(m - 0.5)), TWO_RAREFACTION_LAMBDA
    )


def two_rarefaction_free_flow(t: float, grid: Grid) -> np.ndarray:
    _check_time(t)
    return free_flow_profile(two_rarefaction_data(grid), t)


def two_rarefaction_half_width(t: float) -> float:
    return t / (1 + t * t)


def repulsive_two_rarefaction_oracle(t: float, grid: Grid) -> TransportMap:
    """(1 + t^2)(m - 1/2) - t sign(m - 1/2) outside |m - 1/2| <= t/(1 + t^2), zero inside."""
    _check_time(t)
    m = grid.midpoints()
    outer = (1 + t * t) * (m - 0.5) - t * np.sign(m - 0.5)
    inside = np.abs(m - 0.5) <= two_rarefaction_half_width(t)
    return TransportMap(grid, np.where(inside, 0.0, outer))


def dirac_diffusion_solution(x_bar: float, v_bar: float, lam: float, t: float, grid: Grid) -> TransportMap:
    """A point mass spreading under repulsion: x + v t - (lam t^2 / 2)(m - 1/2)."""
    if lam >= 0:
        raise WrongRegime(f"A Dirac mass only spreads for lam < 0, got {lam}")
    _check_time(t)
    m = grid.midpoints()
    return TransportMap(grid, x_bar + v_bar * t - (lam * t * t / 2) * (m - 0.5))


def certificate_window(delta: float) -> Tuple[float, float]:
    """Times t- < t+ at which the two-rarefaction plateau half-width equals delta."""
    if not 0 < delta < 0.5:
        raise ValueError(f"Half-width must lie in (0, 1/2), got {delta}")
    root = math.sqrt(1 - 4 * delta * delta)
    return (1 - root) / (2 * delta), (1 + root) / (2 * delta)


def plateau_half_width(x_map: TransportMap, center: float = 0.5) -> float:
    """Half the mass length of the plateau whose cells cover the mass coordinate center."""
    n_cells = x_map.grid.n_cells
    for start, end in plateaus(x_map):
        if start / n_cells <= center <= end / n_cells:
            return (end - start) / (2 * n_cells)
    return 0.0


@dataclass(frozen=True, eq=False)
class CertificateReport:
    passed: bool
    min_increment: float
    increments: np.ndarray
    worst_pair: Optional[int]
    worst_node: Optional[int]


def _primitive_gap(x: TransportMap, y: np.ndarray) -> np.ndarray:
    # primitive of the free flow minus its convex envelope, at the cell edges
    return np.concatenate(([0.0], np.cumsum(np.asarray(y, dtype=float) - x.values))) / x.grid.n_cells


def _interior_nodes(x: TransportMap) -> np.ndarray:
    nodes = [np.arange(start + 1, end) for start, end in plateaus(x)]
    return np.concatenate(nodes) if nodes else np.zeros(0, dtype=int)


def check_inclusion_certificate(
    xs: Sequence[TransportMap],
    ys: Sequence[np.ndarray],
    times: Optional[Sequence[float]] = None,
    tol: float = CERTIFICATE_TOLERANCE,
) -> CertificateReport:
    """Plateau-wise test that the primitive gap between free flow and solution never shrinks.

    For each consecutive pair of samples the gap increment is taken at the nodes strictly inside
    the plateaus of the earlier map (divided by the time step when times are given).
    """
    if len(xs) != len(ys):
        raise ValueError(f"{len(xs)} maps for {len(ys)} free-flow samples")
    if times is not None and np.any(np.diff(np.asarray(times, dtype=float)) <= 0):
        raise ValueError("Sample times must be strictly increasing")
    for x in xs[1:]:
        check_same_grid(xs[0], x)

    gaps = [_primitive_gap(x, y) for x, y in zip(xs, ys)]
    increments = np.full(max(len(xs) - 1, 0), np.inf)
    worst_pair = worst_node = None
    for k in range(len(xs) - 1):
        nodes = _interior_nodes(xs[k])
        if not nodes.size:
            continue
        delta = gaps[k + 1][nodes] - gaps[k][nodes]
        if times is not None:
            delta = delta / (times[k + 1] - times[k])
        i = int(np.argmin(delta))
        increments[k] = delta[i]
        if worst_pair is None or delta[i] < increments[worst_pair]:
            worst_pair, worst_node = k, int(nodes[i])

    min_increment = float(increments.min()) if increments.size else math.inf
    passed = min_increment >= -tol
    if not passed:
        logging.debug("Certificate fails between samples %s and %s at node %s", worst_pair, worst_pair + 1, worst_node)
    return CertificateReport(passed, min_increment, increments, worst_pair, worst_node)
