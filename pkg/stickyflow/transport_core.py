from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence, Tuple

import numpy as np

MASS_TOLERANCE = 1e-12
DIAGNOSTIC_PLATEAU_TOLERANCE = 1e-12


class InvalidState(ValueError):
    pass


class GridMismatch(ValueError):
    pass


def frozen_array(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim != 1:
        raise InvalidState(f"{name} must be one-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidState(f"{name} contains non-finite values")
    arr.setflags(write=False)
    return arr


def block_mean(values: np.ndarray) -> float:
    """Mean of a block, returning the common value exactly when the block is constant."""
    base = values[0]
    return float(base + np.mean(values - base))


def check_same_grid(*items) -> None:
    grids = {item.grid for item in items}
    if len(grids) != 1:
        raise GridMismatch(f"Expected a single grid, got {sorted(g.n_cells for g in grids)} cells")


@dataclass(frozen=True)
class Grid:
    n_cells: int

    def __post_init__(self):
        if isinstance(self.n_cells, bool) or int(self.n_cells) != self.n_cells or self.n_cells < 1:
            raise InvalidState(f"Grid needs a positive integer cell count, got {self.n_cells!r}")
        object.__setattr__(self, "n_cells", int(self.n_cells))

    @property
    def width(self) -> float:
        return 1.0 / self.n_cells

    def edges(self) -> np.ndarray:
        return np.arange(self.n_cells + 1) / self.n_cells

    def midpoints(self) -> np.ndarray:
        return (np.arange(self.n_cells) + 0.5) / self.n_cells


@dataclass(frozen=True, eq=False)
class TransportMap:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = frozen_array(self.values, "TransportMap values")
        if values.size != self.grid.n_cells:
            raise InvalidState(f"TransportMap has {values.size} values for {self.grid.n_cells} cells")
        drops = np.flatnonzero(np.diff(values) < 0)
        if drops.size:
            i = int(drops[0])
            raise InvalidState(
                f"TransportMap is not nondecreasing at cell {i}: {values[i]!r} > {values[i + 1]!r}"
            )
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.grid.n_cells


@dataclass(frozen=True, eq=False)
class VelocityField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = frozen_array(self.values, "VelocityField values")
        if values.size != self.grid.n_cells:
            raise InvalidState(f"VelocityField has {values.size} values for {self.grid.n_cells} cells")
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.grid.n_cells


@dataclass(frozen=True, eq=False)
class LagrangianState:
    x: TransportMap
    v: VelocityField

    def __post_init__(self):
        check_same_grid(self.x, self.v)

    @property
    def grid(self) -> Grid:
        return self.x.grid


@dataclass(frozen=True, eq=False)
class ParticleSystem:
    masses: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray

    def __post_init__(self):
        masses = frozen_array(self.masses, "masses")
        positions = frozen_array(self.positions, "positions")
        velocities = frozen_array(self.velocities, "velocities")
        if not masses.size:
            raise InvalidState("ParticleSystem needs at least one particle")
        if not masses.size == positions.size == velocities.size:
            raise InvalidState(
                f"Inconsistent particle arrays: {masses.size} masses, {positions.size} positions, "
                f"{velocities.size} velocities"
            )
        if np.any(masses <= 0):
            raise InvalidState("Particle masses must be positive")
        if abs(masses.sum() - 1.0) > MASS_TOLERANCE:
            raise InvalidState(f"Particle masses sum to {masses.sum()!r}, expected 1")
        if np.any(np.diff(positions) < 0):
            raise InvalidState("Particle positions must be nondecreasing")
        object.__setattr__(self, "masses", masses)
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "velocities", velocities)

    def __len__(self) -> int:
        return self.masses.size

    def cumulative_masses(self) -> np.ndarray:
        """M_0 = 0, M_i = m_1 + ... + m_i."""
        return np.concatenate(([0.0], np.cumsum(self.masses)))

    def momentum(self) -> float:
        return float(np.dot(self.masses, self.velocities))

    def kinetic_energy(self) -> float:
        return 0.5 * float(np.dot(self.masses, self.velocities**2))


@dataclass(frozen=True)
class PlateauSet:
    intervals: Tuple[Tuple[int, int], ...] = ()

    def __post_init__(self):
        intervals = tuple((int(a), int(b)) for a, b in self.intervals)
        previous_end = None
        for start, end in intervals:
            if end - start < 2:
                raise InvalidState(f"Plateau [{start},{end}) is shorter than two cells")
            if previous_end is not None and start < previous_end:
                raise InvalidState("Plateaus must be sorted and disjoint")
            previous_end = end
        object.__setattr__(self, "intervals", intervals)

    def __iter__(self) -> Iterator[Tuple[int, int]]:
        return iter(self.intervals)

    def __len__(self) -> int:
        return len(self.intervals)

    def mask(self, n_cells: int) -> np.ndarray:
        res = np.zeros(n_cells, dtype=bool)
        for start, end in self.intervals:
            res[start:end] = True
        return res

    def covered_cells(self) -> int:
        return sum(end - start for start, end in self.intervals)


@dataclass(frozen=True, eq=False)
class EulerianMeasure:
    positions: np.ndarray
    masses: np.ndarray
    momenta: Optional[np.ndarray] = None

    def __post_init__(self):
        positions = frozen_array(self.positions, "atom positions")
        masses = frozen_array(self.masses, "atom masses")
        if not positions.size or positions.size != masses.size:
            raise InvalidState("EulerianMeasure needs matching, non-empty positions and masses")
        if np.any(masses <= 0):
            raise InvalidState("Atom masses must be positive")
        if abs(masses.sum() - 1.0) > MASS_TOLERANCE:
            raise InvalidState(f"Atom masses sum to {masses.sum()!r}, expected 1")
        if np.any(np.diff(positions) <= 0):
            raise InvalidState("Atom positions must be strictly increasing")
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "masses", masses)
        if self.momenta is not None:
            momenta = frozen_array(self.momenta, "atom momenta")
            if momenta.size != positions.size:
                raise InvalidState("One momentum per atom expected")
            object.__setattr__(self, "momenta", momenta)

    @classmethod
    def from_atoms(cls, atoms: Sequence[Tuple[float, float]]) -> "EulerianMeasure":
        positions, masses = zip(*atoms)
        return cls(np.array(positions), np.array(masses))

    def __len__(self) -> int:
        return self.positions.size

    def atoms(self) -> Iterator[Tuple[float, float]]:
        return zip(self.positions.tolist(), self.masses.tolist())

    def mean(self) -> float:
        return float(np.dot(self.masses, self.positions))

    def second_moment(self) -> float:
        return float(np.dot(self.masses, self.positions**2))

    def total_momentum(self) -> float:
        if self.momenta is None:
            return 0.0
        return float(self.momenta.sum())

    def velocities(self) -> Optional[np.ndarray]:
        if self.momenta is None:
            return None
        return self.momenta / self.masses


def identity_map(grid: Grid) -> TransportMap:
    return TransportMap(grid, grid.midpoints())


def monotone_rearrangement(mu: EulerianMeasure, grid: Grid) -> TransportMap:
    """Sample X(m) = inf{x : M(x) > m} at the cell midpoints."""
    cdf = np.cumsum(mu.masses)
    index = np.searchsorted(cdf, grid.midpoints(), side="right")
    index = np.minimum(index, len(mu) - 1)
    return TransportMap(grid, mu.positions[index])


def push_forward(x_map: TransportMap) -> EulerianMeasure:
    positions, counts = np.unique(x_map.values, return_counts=True)
    return EulerianMeasure(positions, counts / x_map.grid.n_cells)


def wasserstein2(x1: TransportMap, x2: TransportMap) -> float:
    check_same_grid(x1, x2)
    return float(np.sqrt(np.mean((x1.values - x2.values) ** 2)))


def u2_semidistance(x1: TransportMap, v1: VelocityField, x2: TransportMap, v2: VelocityField) -> float:
    check_same_grid(x1, v1, x2, v2)
    return float(np.sqrt(np.mean((v1.values - v2.values) ** 2)))


def plateaus(x_map: TransportMap, tol: float = 0.0) -> PlateauSet:
    if tol < 0:
        raise ValueError(f"Plateau tolerance must be nonnegative, got {tol}")
    values = x_map.values
    n_cells = values.size
    intervals = []
    start = 0
    while start < n_cells:
        end = start + 1
        while end < n_cells and values[end] - values[start] <= tol:
            end += 1
        if end - start >= 2:
            intervals.append((start, end))
        start = end
    return PlateauSet(tuple(intervals))


def diagnostic_plateaus(x_map: TransportMap) -> PlateauSet:
    spread = float(x_map.values[-1] - x_map.values[0])
    return plateaus(x_map, DIAGNOSTIC_PLATEAU_TOLERANCE * spread)


def project_plateau_average(v: VelocityField, p: PlateauSet) -> VelocityField:
    values = np.array(v.values)
    for start, end in p:
        values[start:end] = block_mean(v.values[start:end])
    return VelocityField(v.grid, values)


def particles_to_map(sys: ParticleSystem, grid: Grid) -> Tuple[TransportMap, VelocityField]:
    # midpoint membership: cell i belongs to the particle whose mass interval contains m_i
    cumulative = sys.cumulative_masses()[1:]
    owner = np.searchsorted(cumulative, grid.midpoints(), side="right")
    owner = np.minimum(owner, len(sys) - 1)
    return TransportMap(grid, sys.positions[owner]), VelocityField(grid, sys.velocities[owner])


def constant_runs(values: np.ndarray) -> np.ndarray:
    """Start indices of the maximal runs of exactly equal values, plus the end sentinel."""
    breaks = np.flatnonzero(values[1:] != values[:-1]) + 1
    return np.concatenate(([0], breaks, [values.size]))


def map_to_particles(x_map: TransportMap, v: VelocityField) -> ParticleSystem:
    check_same_grid(x_map, v)
    bounds = constant_runs(x_map.values)
    starts, ends = bounds[:-1], bounds[1:]
    masses = (ends - starts) / x_map.grid.n_cells
    positions = x_map.values[starts]
    velocities = np.array([block_mean(v.values[a:b]) for a, b in zip(starts, ends)])
    logging.debug("Collapsed %s cells into %s particles", x_map.grid.n_cells, masses.size)
    return ParticleSystem(masses, positions, velocities)
