from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Iterator, List, NamedTuple, Optional, Sequence, Union

import numpy as np

from stickyflow.transport_core import Grid, TransportMap, block_mean, frozen_array

DOMINATION_SLACK = 1e-12
DEFAULT_HINGE_LADDER = (0.1, 0.5, 1.0, 2.0)


class InvalidWeights(ValueError):
    pass


class EnvelopePoint(NamedTuple):
    m: float
    value: float


@dataclass(frozen=True, eq=False)
class EnvelopePoints:
    """A sequence of (m, value) pairs with m strictly increasing."""

    m: np.ndarray
    value: np.ndarray

    def __post_init__(self):
        m = frozen_array(self.m, "envelope abscissae")
        value = frozen_array(self.value, "envelope values")
        if m.size != value.size:
            raise ValueError("Envelope abscissae and values differ in length")
        if np.any(np.diff(m) <= 0):
            raise ValueError("Envelope abscissae must be strictly increasing")
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "value", value)

    def __len__(self) -> int:
        return self.m.size

    def __getitem__(self, i: int) -> EnvelopePoint:
        return EnvelopePoint(float(self.m[i]), float(self.value[i]))

    def __iter__(self) -> Iterator[EnvelopePoint]:
        return (EnvelopePoint(m, v) for m, v in zip(self.m.tolist(), self.value.tolist()))

    def interpolate(self, m: np.ndarray) -> np.ndarray:
        return np.interp(m, self.m, self.value)

    def slopes(self) -> np.ndarray:
        return np.diff(self.value) / np.diff(self.m)


def _raw(x: Union[TransportMap, Sequence[float], np.ndarray]) -> np.ndarray:
    if isinstance(x, TransportMap):
        return np.asarray(x.values)
    return frozen_array(x, "values")


def cumulative_primitive(x) -> EnvelopePoints:
    values = _raw(x)
    n_cells = values.size
    primitive = np.concatenate(([0.0], np.cumsum(values))) / n_cells
    return EnvelopePoints(np.arange(n_cells + 1) / n_cells, primitive)


def _lower_hull_indices(m: np.ndarray, value: np.ndarray) -> List[int]:
    # monotone chain: pop the middle point while it is not strictly below the chord
    hull: List[int] = []
    for k in range(len(m)):
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            cross = (value[b] - value[a]) * (m[k] - m[b]) - (value[k] - value[b]) * (m[b] - m[a])
            if cross < 0:
                break
            hull.pop()
        hull.append(k)
    return hull


def lower_convex_envelope(points: EnvelopePoints) -> EnvelopePoints:
    if len(points) < 2:
        raise ValueError(f"A convex envelope needs at least two points, got {len(points)}")
    hull = _lower_hull_indices(points.m.tolist(), points.value.tolist())
    return EnvelopePoints(points.m[hull], points.value[hull])


def _monotone_repair(values: np.ndarray) -> np.ndarray:
    # rounding in adjacent block means can leave 1-ulp inversions
    return np.maximum.accumulate(values)


def project_cone(x_values, grid: Optional[Grid] = None) -> TransportMap:
    """L2 projection onto nondecreasing maps: derivative of the convex envelope of the primitive.

    Hull vertices fall on cell edges, so the slope on each hull segment is the mean of the
    original values over the cells of that segment; the mean is taken directly to keep
    untouched cells bit-identical.
    """
    values = _raw(x_values)
    n_cells = values.size
    if grid is None:
        grid = Grid(n_cells)
    # unscaled primitive on integer abscissae keeps the orientation test free of 1/N rounding
    primitive = np.concatenate(([0.0], np.cumsum(values)))
    hull = _lower_hull_indices(list(range(n_cells + 1)), primitive.tolist())
    res = np.empty(n_cells)
    for start, end in zip(hull[:-1], hull[1:]):
        res[start:end] = values[start] if end - start == 1 else block_mean(values[start:end])
    return TransportMap(grid, _monotone_repair(res))


def project_cone_pava(x_values, weights=None, grid: Optional[Grid] = None) -> TransportMap:
    values = _raw(x_values)
    n_cells = values.size
    if weights is None:
        weights = np.ones(n_cells)
    weights = np.asarray(weights, dtype=float)
    if weights.shape != values.shape:
        raise InvalidWeights(f"Expected {n_cells} weights, got {weights.size}")
    if np.any(~np.isfinite(weights)) or np.any(weights <= 0):
        raise InvalidWeights("Weights must be finite and positive")
    if grid is None:
        grid = Grid(n_cells)

    # blocks on a stack: weighted sum, total weight, first index
    sums: List[float] = []
    totals: List[float] = []
    starts: List[int] = []
    for i, (value, weight) in enumerate(zip(values.tolist(), weights.tolist())):
        sums.append(value * weight)
        totals.append(weight)
        starts.append(i)
        while len(sums) >= 2 and sums[-2] / totals[-2] >= sums[-1] / totals[-1]:
            block_sum, block_weight = sums.pop(), totals.pop()
            starts.pop()
            sums[-1] += block_sum
            totals[-1] += block_weight

    res = np.empty(n_cells)
    ends = starts[1:] + [n_cells]
    for start, end, block_sum, block_weight in zip(starts, ends, sums, totals):
        res[start:end] = values[start] if end - start == 1 else block_sum / block_weight
    return TransportMap(grid, _monotone_repair(res))


def periodic_rearrange(y_values) -> np.ndarray:
    """Nondecreasing representative of a map with Y - id 1-periodic.

    The fractional parts are sorted (stable, so ties keep their original order) and laid out
    along the periodic lift; the window of the lift is the one preserving sum(Y), i.e. the mean
    of Y - id. Maps that are already nondecreasing with Y(1-) <= Y(0+) + 1 come back unchanged.
    """
    values = np.asarray(_raw(y_values))
    n_cells = values.size
    whole = np.floor(values)
    fractional = values - whole
    order = np.argsort(fractional, kind="stable")
    ordered = fractional[order]
    shift, rotation = divmod(int(whole.sum()), n_cells)
    lifted = np.concatenate((ordered[rotation:], ordered[:rotation] + 1.0))
    return lifted + shift


def default_psi_family(ladder: Sequence[float] = DEFAULT_HINGE_LADDER) -> List[Callable]:
    family = [
        np.abs,
        np.square,
        lambda r: r**4,
        lambda r: np.expm1(np.abs(r)),
    ]
    family.extend((lambda r, c=c: np.maximum(np.abs(r) - c, 0.0)) for c in ladder)
    return family


def dominates(y_values, x_values, psi_family: Optional[Sequence[Callable]] = None) -> bool:
    y = _raw(y_values)
    x = _raw(x_values)
    if y.shape != x.shape:
        raise ValueError("Domination compares maps on the same grid")
    if psi_family is None:
        psi_family = default_psi_family()
    for psi in psi_family:
        lhs = float(np.mean(psi(y)))
        rhs = float(np.mean(psi(x)))
        if lhs > rhs + DOMINATION_SLACK:
            logging.debug("Domination fails: %s > %s", lhs, rhs)
            return False
    return True


def projection_residual(x_values, y_values, candidates: Sequence) -> float:
    """Largest <x - y, z - y> over the candidate monotone maps z (nonpositive when y = P(x))."""
    x = _raw(x_values)
    y = _raw(y_values)
    worst = -np.inf
    for z in candidates:
        worst = max(worst, float(np.mean((x - y) * (_raw(z) - y))))
    return worst
