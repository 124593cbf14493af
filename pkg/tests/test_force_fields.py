import os
from unittest.mock import patch

import numpy as np
import pytest

from stickyflow import workers
from stickyflow.force_fields import (
    EulerPoissonForce,
    ForceEvaluationError,
    InteractionForce,
    NotAPlateau,
    PotentialForce,
    check_sticking,
    discrete_projected_force,
    double_well_potential,
    eval_force,
    force_from_descriptor,
    harmonic_potential,
    lagrangian_pairing,
    linear_interaction,
    sign_interaction,
)
from stickyflow.particle_dynamics import evolve_sticky
from stickyflow.transport_core import Grid, ParticleSystem, TransportMap, identity_map, wasserstein2


def test_euler_poisson_field_does_not_depend_on_positions():
    x = identity_map(Grid(4))
    np.testing.assert_array_equal(eval_force(EulerPoissonForce(0.0), x), np.zeros(4))
    np.testing.assert_allclose(eval_force(EulerPoissonForce(-1.0), x), [-0.375, -0.125, 0.125, 0.375])
    shuffled = TransportMap(Grid(4), [-10.0, 0.0, 0.0, 3.0])
    np.testing.assert_allclose(eval_force(EulerPoissonForce(-1.0), shuffled), [-0.375, -0.125, 0.125, 0.375])


def test_euler_poisson_background_pulls_to_the_mean():
    f = EulerPoissonForce(1.0, sigma=2.0)
    assert not f.has_constant_accelerations
    x = TransportMap(Grid(2), [0.0, 0.0])
    np.testing.assert_allclose(eval_force(f, x), [0.25, -0.25])
    x = TransportMap(Grid(2), [-1.0, 1.0])
    # the background adds sigma (X - mean) per unit lam
    np.testing.assert_allclose(eval_force(f, x), [0.25 - 2.0, -0.25 + 2.0])
    with pytest.raises(ValueError):
        EulerPoissonForce(1.0, sigma=-1.0)


def test_sign_interaction_counts_neighbours():
    x = TransportMap(Grid(4), [0.0, 1.0, 2.5, 7.0])
    np.testing.assert_allclose(eval_force(sign_interaction(), x), [0.75, 0.25, -0.25, -0.75])
    # W'(0) = 0 on a plateau
    x = TransportMap(Grid(4), [1.0, 1.0, 1.0, 1.0])
    np.testing.assert_array_equal(eval_force(sign_interaction(), x), np.zeros(4))


def test_linear_interaction_accepts_unordered_positions():
    f = linear_interaction(2.0)
    acc = f.accelerations(np.array([0.25, 0.75]), np.array([1.0, -1.0]))
    mean = 0.25 * 1.0 + 0.75 * -1.0
    np.testing.assert_allclose(acc, [-2.0 * (1.0 - mean), -2.0 * (-1.0 - mean)])


def test_interaction_is_identical_with_threads():
    rng = np.random.default_rng(20)
    x = TransportMap(Grid(1500), np.sort(rng.normal(size=1500)))
    sequential = eval_force(sign_interaction(), x)
    with patch.dict(os.environ, {workers.THREADS_ENV: "4"}):
        threaded = eval_force(sign_interaction(), x)
    np.testing.assert_array_equal(threaded, sequential)


@pytest.mark.parametrize(
    "lam,masses,expected",
    [
        (-1.0, [0.5, 0.5], [-0.25, 0.25]),
        (1.0, [0.5, 0.5], [0.25, -0.25]),
        (-1.0, [0.25, 0.25, 0.5], [-0.375, -0.125, 0.25]),
    ],
)
def test_discrete_projected_force(lam, masses, expected):
    sys = ParticleSystem(masses, np.arange(len(masses), dtype=float), np.zeros(len(masses)))
    np.testing.assert_allclose(discrete_projected_force(EulerPoissonForce(lam), sys), expected)


def test_discrete_force_is_the_cell_average():
    grid = Grid(64)
    sys = ParticleSystem([0.25, 0.75], [0.0, 1.0], [0.0, 0.0])
    field = eval_force(EulerPoissonForce(1.0), identity_map(grid))
    expected = [field[:16].mean(), field[16:].mean()]
    np.testing.assert_allclose(discrete_projected_force(EulerPoissonForce(1.0), sys), expected, atol=1e-15)


def test_non_finite_forces_are_reported():
    f = PotentialForce(lambda x: np.log(x))
    sys = ParticleSystem([0.5, 0.5], [-1.0, 1.0], [0.0, 0.0])
    with np.errstate(all="ignore"):
        with pytest.raises(ForceEvaluationError):
            discrete_projected_force(f, sys)
        with pytest.raises(ForceEvaluationError):
            InteractionForce(lambda r: 1 / r).on_values(np.array([0.0, 0.0, 1.0]))


def test_potential_presets():
    x = TransportMap(Grid(3), [-1.0, 0.0, 2.0])
    np.testing.assert_allclose(eval_force(harmonic_potential(2.0, center=1.0), x), [4.0, 2.0, -2.0])
    np.testing.assert_allclose(eval_force(double_well_potential(), x), [0.0, 0.0, -6.0])
    assert harmonic_potential(2.0).declared_lipschitz == 2.0
    assert double_well_potential().declared_lipschitz is None
    with pytest.raises(ValueError):
        PotentialForce(np.negative, declared_lipschitz=-1.0)


def test_lagrangian_pairing():
    x = identity_map(Grid(100))
    assert lagrangian_pairing(EulerPoissonForce(-1.0), x, np.ones_like) == pytest.approx(0.0, abs=1e-15)
    # int (m - 1/2) * (m - 1/2) dm on the midpoint grid
    expected = np.mean((x.values - 0.5) ** 2)
    assert lagrangian_pairing(EulerPoissonForce(-1.0), x, lambda r: r - 0.5) == pytest.approx(expected)


def test_sticking_flags():
    assert EulerPoissonForce(1.0).is_sticking
    assert EulerPoissonForce(0.0).is_sticking
    assert not EulerPoissonForce(-1.0).is_sticking
    assert EulerPoissonForce(-1.0).has_constant_accelerations
    assert not sign_interaction().has_constant_accelerations


def test_check_sticking():
    x = TransportMap(Grid(10), [0, 0, 0, 0, 0, 0, 1, 2, 3, 4])
    report = check_sticking(EulerPoissonForce(1.0), x, (0, 6))
    assert report.sticking
    assert report.xi.size == 7
    assert report.xi[0] == report.xi[-1] == 0.0
    assert np.all(report.xi[1:-1] > 0)

    assert not check_sticking(EulerPoissonForce(-1.0), x, (0, 6)).sticking
    assert not check_sticking(EulerPoissonForce(-1.0), x, (2, 4)).sticking

    constant = check_sticking(PotentialForce(np.ones_like), x, (0, 6))
    assert constant.sticking
    np.testing.assert_array_equal(constant.xi, np.zeros(7))


@pytest.mark.parametrize("plateau", [(0, 1), (5, 8), (3, 11), (-1, 2)])
def test_check_sticking_rejects_non_plateaus(plateau):
    x = TransportMap(Grid(10), [0, 0, 0, 0, 0, 0, 1, 2, 3, 4])
    with pytest.raises(NotAPlateau):
        check_sticking(EulerPoissonForce(1.0), x, plateau)


@pytest.mark.parametrize(
    "descriptor,kind",
    [
        ({"kind": "euler-poisson", "lambda": 1.0}, "euler-poisson"),
        ({"kind": "potential", "name": "harmonic", "k": 2.0}, "potential"),
        ({"kind": "potential", "name": "double-well"}, "potential"),
        ({"kind": "interaction", "name": "sign", "strength": 0.5}, "interaction"),
    ],
)
def test_force_from_descriptor(descriptor, kind):
    assert force_from_descriptor(descriptor).kind == kind


def test_force_from_descriptor_keeps_parameters():
    f = force_from_descriptor({"kind": "euler-poisson", "lambda": -2.0, "sigma": 1.0})
    assert f.describe() == {"kind": "euler-poisson", "lambda": -2.0, "sigma": 1.0}
    with pytest.raises(ValueError):
        force_from_descriptor({"kind": "magnetic"})


def test_repulsive_interactions_do_not_stick():
    assert sign_interaction(1.0).is_sticking
    assert linear_interaction(0.0).is_sticking
    assert not sign_interaction(-1.0).is_sticking
    assert not linear_interaction(-2.0).is_sticking
    assert not force_from_descriptor({"kind": "interaction", "name": "sign", "strength": -1.0}).is_sticking
    assert harmonic_potential(-1.0).is_sticking


def random_map(rng, n_cells, scale=2.0):
    return TransportMap(Grid(n_cells), np.sort(rng.normal(scale=scale, size=n_cells)))


LIPSCHITZ_FORCES = [
    harmonic_potential(2.0, center=0.5),
    harmonic_potential(-1.5),
    linear_interaction(1.0),
    linear_interaction(-0.5),
    EulerPoissonForce(1.0),
    EulerPoissonForce(-2.0, sigma=1.5),
    EulerPoissonForce(0.5, sigma=3.0),
]


@pytest.mark.parametrize("f", LIPSCHITZ_FORCES)
def test_declared_lipschitz_constant_holds(f):
    rng = np.random.default_rng(50)
    for _ in range(200):
        n_cells = int(rng.integers(2, 40))
        x1, x2 = random_map(rng, n_cells), random_map(rng, n_cells)
        lhs = np.sqrt(np.mean((eval_force(f, x1) - eval_force(f, x2)) ** 2))
        assert lhs <= f.declared_lipschitz * wasserstein2(x1, x2) + 1e-12


@pytest.mark.parametrize("f", LIPSCHITZ_FORCES + [sign_interaction(1.0), sign_interaction(-3.0)])
def test_pointwise_bound_holds(f):
    rng = np.random.default_rng(51)
    for _ in range(200):
        x = random_map(rng, int(rng.integers(1, 40)), scale=5.0)
        bound = f.pointwise_bound_const * (1 + np.abs(x.values) + np.mean(np.abs(x.values)))
        assert np.all(np.abs(eval_force(f, x)) <= bound + 1e-12)


class ShiftedEulerPoisson(EulerPoissonForce):
    """Euler-Poisson plus a uniform acceleration."""

    def __init__(self, lam, shift):
        super().__init__(lam)
        self.shift = shift

    def on_values(self, x):
        return super().on_values(x) + self.shift

    def accelerations(self, masses, positions):
        return super().accelerations(masses, positions) + self.shift


def test_uniform_acceleration_leaves_relative_motion_unchanged():
    rng = np.random.default_rng(52)
    sys = ParticleSystem(np.full(8, 1 / 8), np.sort(rng.uniform(-1, 1, 8)), rng.normal(size=8))
    plain = evolve_sticky(sys, EulerPoissonForce(1.0), 3.0, 0.25)
    shifted = evolve_sticky(sys, ShiftedEulerPoisson(1.0, 0.3), 3.0, 0.25)
    assert len(plain.events) == len(shifted.events) > 0
    for a, b in zip(plain.events, shifted.events):
        assert a.time == pytest.approx(b.time, abs=1e-10)
        assert a.merged_groups == b.merged_groups
    for t, a, b in zip(plain.sample_times, plain.states, shifted.states):
        np.testing.assert_allclose(np.diff(b.positions), np.diff(a.positions), atol=1e-10)
        np.testing.assert_allclose(b.positions, a.positions + 0.15 * t * t, atol=1e-10)
