from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Tuple

import numpy as np

from stickyflow import workers
from stickyflow.transport_core import ParticleSystem, TransportMap, block_mean

STICKING_SLACK = 1e-12
INTERACTION_ROW_BLOCK = 512

Derivative = Callable[[np.ndarray], np.ndarray]


class ForceEvaluationError(ArithmeticError):
    pass


class NotAPlateau(ValueError):
    pass


def _checked(values: np.ndarray, what: str) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        raise ForceEvaluationError(f"{what} produced non-finite values")
    return values


class ForceField(ABC):
    def __init__(self, declared_lipschitz: Optional[float] = None, pointwise_bound_const: Optional[float] = None):
        for name, value in (("declared_lipschitz", declared_lipschitz), ("pointwise_bound_const", pointwise_bound_const)):
            if value is not None and value < 0:
                raise ValueError(f"{name} must be nonnegative, got {value}")
        self.declared_lipschitz = declared_lipschitz
        self.pointwise_bound_const = pointwise_bound_const

    @property
    @abstractmethod
    def kind(self) -> str:
        pass

    @property
    def is_sticking(self) -> bool:
        return True

    @property
    def has_constant_accelerations(self) -> bool:
        """True when particle accelerations do not depend on positions between collisions."""
        return False

    @abstractmethod
    def on_values(self, x: np.ndarray) -> np.ndarray:
        """F[X] at the cell midpoints of a map given by its raw values."""

    @abstractmethod
    def accelerations(self, masses: np.ndarray, positions: np.ndarray) -> np.ndarray:
        """Accelerations a_i: the average of F[X] over the mass interval W_i.

        Positions need not be ordered, so intermediate integrator stages can be evaluated.
        """

    def on_particles(self, sys: ParticleSystem) -> np.ndarray:
        return self.accelerations(sys.masses, sys.positions)

    def describe(self) -> Dict:
        return {"kind": self.kind}


class PotentialForce(ForceField):
    def __init__(self, dpotential: Derivative, **kwargs):
        super().__init__(**kwargs)
        self.dpotential = dpotential

    @property
    def kind(self) -> str:
        return "potential"

    def on_values(self, x: np.ndarray) -> np.ndarray:
        return -_checked(self.dpotential(np.asarray(x, dtype=float)), "Potential derivative")

    def accelerations(self, masses: np.ndarray, positions: np.ndarray) -> np.ndarray:
        return self.on_values(positions)


class InteractionForce(ForceField):
    """F[X](m) = -int W'(X(m) - X(l)) dl, with W'(0) taken as 0.

    sticking: W' nondecreasing (attraction); a repulsive kernel may break plateaus apart.
    """

    def __init__(self, dinteraction: Derivative, sticking: bool = True, **kwargs):
        super().__init__(**kwargs)
        self.dinteraction = dinteraction
        self.sticking = sticking

    @property
    def is_sticking(self) -> bool:
        return self.sticking

    @property
    def kind(self) -> str:
        return "interaction"

    def _rows(self, positions: np.ndarray, weights: np.ndarray, rows: Tuple[int, int]) -> np.ndarray:
        start, end = rows
        diff = positions[start:end, None] - positions[None, :]
        kernel = _checked(self.dinteraction(diff), "Interaction derivative")
        kernel = np.where(diff == 0, 0.0, kernel)
        return -(kernel @ weights)

    def _evaluate(self, positions: np.ndarray, weights: np.ndarray) -> np.ndarray:
        positions = np.asarray(positions, dtype=float)
        blocks = [(i, min(i + INTERACTION_ROW_BLOCK, positions.size)) for i in range(0, positions.size, INTERACTION_ROW_BLOCK)]
        parts = workers.map_ordered(lambda rows: self._rows(positions, weights, rows), blocks)
        return np.concatenate(parts)

    def on_values(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self._evaluate(x, np.full(x.size, 1.0 / x.size))

    def accelerations(self, masses: np.ndarray, positions: np.ndarray) -> np.ndarray:
        return self._evaluate(positions, np.asarray(masses, dtype=float))


class EulerPoissonForce(ForceField):
    """F[X](m) = -lam ((2m - 1)/2 - sigma X(m) + c0), c0 = sigma * mean(X).

    lam > 0 is attractive, lam < 0 repulsive; sigma is a uniform neutralising background
    (None for no background).
    """

    def __init__(self, lam: float, sigma: Optional[float] = None, **kwargs):
        if sigma is not None and sigma < 0:
            raise ValueError(f"Background density must be nonnegative, got {sigma}")
        kwargs.setdefault("declared_lipschitz", abs(lam) * (sigma or 0.0) * 2)
        kwargs.setdefault("pointwise_bound_const", abs(lam) * max(1.0, sigma or 0.0))
        super().__init__(**kwargs)
        self.lam = float(lam)
        self.sigma = sigma

    @property
    def kind(self) -> str:
        return "euler-poisson"

    @property
    def is_sticking(self) -> bool:
        return self.lam >= 0

    @property
    def has_constant_accelerations(self) -> bool:
        return not self.sigma

    def _background(self, x: np.ndarray, weights: np.ndarray) -> np.ndarray:
        if not self.sigma:
            return np.zeros_like(x)
        return -self.sigma * (x - np.dot(weights, x))

    def on_values(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        m = (np.arange(x.size) + 0.5) / x.size
        weights = np.full(x.size, 1.0 / x.size)
        return -self.lam * ((2 * m - 1) / 2 + self._background(x, weights))

    def accelerations(self, masses: np.ndarray, positions: np.ndarray) -> np.ndarray:
        masses = np.asarray(masses, dtype=float)
        cumulative = np.concatenate(([0.0], np.cumsum(masses)))
        shape = 0.5 * (cumulative[:-1] + cumulative[1:] - 1)
        return -self.lam * (shape + self._background(np.asarray(positions, dtype=float), masses))

    def describe(self) -> Dict:
        return {"kind": self.kind, "lambda": self.lam, "sigma": self.sigma}


def eval_force(f: ForceField, x: TransportMap) -> np.ndarray:
    return f.on_values(x.values)


def discrete_projected_force(f: ForceField, sys: ParticleSystem) -> np.ndarray:
    return _checked(f.on_particles(sys), "Projected force")


def lagrangian_pairing(f: ForceField, x: TransportMap, psi: Callable[[np.ndarray], np.ndarray]) -> float:
    """int psi(X(m)) F[X](m) dm, the Lagrangian side of the force pairing."""
    return float(np.mean(psi(x.values) * eval_force(f, x)))


@dataclass(frozen=True, eq=False)
class StickingReport:
    sticking: bool
    xi: np.ndarray
    plateau: Tuple[int, int]


def check_sticking(f: ForceField, x: TransportMap, plateau: Tuple[int, int]) -> StickingReport:
    start, end = plateau
    n_cells = x.grid.n_cells
    if not 0 <= start < end <= n_cells or end - start < 2:
        raise NotAPlateau(f"[{start},{end}) is not a cell range of length >= 2")
    if np.any(x.values[start:end] != x.values[start]):
        raise NotAPlateau(f"Map is not constant on [{start},{end})")
    force = eval_force(f, x)[start:end]
    excess = force - block_mean(force)
    xi = np.concatenate(([0.0], np.cumsum(excess))) / n_cells
    xi[-1] = 0.0
    sticking = bool(np.all(xi >= -STICKING_SLACK))
    logging.debug("Sticking test on [%s,%s): min Xi %s", start, end, xi.min())
    return StickingReport(sticking, xi, (start, end))


# named derivative presets for JSON descriptors


def _sign(r: np.ndarray) -> np.ndarray:
    return np.sign(r)


def harmonic_potential(k: float = 1.0, center: float = 0.0) -> PotentialForce:
    return PotentialForce(
        lambda x: k * (x - center),
        declared_lipschitz=abs(k),
        pointwise_bound_const=abs(k) * max(1.0, abs(center)),
    )


def double_well_potential() -> PotentialForce:
    # V(x) = x^4/4 - x^2/2, not globally Lipschitz
    return PotentialForce(lambda x: x**3 - x)


def sign_interaction(strength: float = 1.0) -> InteractionForce:
    return InteractionForce(lambda r: strength * _sign(r), sticking=strength >= 0, pointwise_bound_const=abs(strength))


def linear_interaction(strength: float = 1.0) -> InteractionForce:
    return InteractionForce(
        lambda r: strength * r,
        sticking=strength >= 0,
        declared_lipschitz=2 * abs(strength),
        pointwise_bound_const=abs(strength),
    )


POTENTIAL_PRESETS = {"harmonic": harmonic_potential, "double-well": double_well_potential}
INTERACTION_PRESETS = {"sign": sign_interaction, "linear": linear_interaction}


def force_from_descriptor(descriptor: Dict) -> ForceField:
    kind = descriptor["kind"]
    if kind == "euler-poisson":
        return EulerPoissonForce(descriptor["lambda"], descriptor.get("sigma"))
    if kind == "potential":
        preset = POTENTIAL_PRESETS[descriptor["name"]]
        params = {k: v for k, v in descriptor.items() if k in ("k", "center")}
        return preset(**params)
    if kind == "interaction":
        preset = INTERACTION_PRESETS[descriptor["name"]]
        params = {k: v for k, v in descriptor.items() if k == "strength"}
        return preset(**params)
    raise ValueError(f"Unknown force kind {kind}")
