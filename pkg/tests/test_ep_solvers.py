import math

import numpy as np
import pytest

from stickyflow.ep_solvers import (
    EPInitialData,
    WrongRegime,
    attractive_ep_solution,
    attractive_ep_state,
    certificate_window,
    check_inclusion_certificate,
    convexified_flow,
    dirac_diffusion_solution,
    free_flow_profile,
    plateau_half_width,
    repulsive_two_rarefaction_oracle,
    two_rarefaction_data,
    two_rarefaction_free_flow,
    two_rarefaction_half_width,
)
from stickyflow.force_fields import EulerPoissonForce
from stickyflow.particle_dynamics import evolve_sticky
from stickyflow.transport_core import Grid, ParticleSystem, TransportMap, VelocityField, particles_to_map, wasserstein2


def constant_data(grid, x_bar, v_bar, lam):
    n = grid.n_cells
    return EPInitialData(TransportMap(grid, np.full(n, x_bar)), VelocityField(grid, np.full(n, v_bar)), lam)


def converging_data(grid, lam=1.0):
    m = grid.midpoints()
    return EPInitialData(TransportMap(grid, m - 0.5), VelocityField(grid, -np.sign(m - 0.5)), lam)


def smooth_data(grid):
    m = grid.midpoints()
    return EPInitialData(
        TransportMap(grid, 2 * (m - 0.5)), VelocityField(grid, (m - 0.5) + 0.8 * np.sin(2 * np.pi * m)), 1.0
    )


def test_attractive_solution_at_time_zero_is_the_initial_map():
    data = converging_data(Grid(16))
    assert attractive_ep_solution(data, 0.0) is data.x0
    state = attractive_ep_state(data, 0.0)
    assert state.v is data.v0
    with pytest.raises(ValueError):
        attractive_ep_solution(data, -1.0)


def test_attractive_dirac_moves_freely():
    grid = Grid(100)
    data = constant_data(grid, 0.3, -0.5, 2.0)
    for t in (0.5, 1.0, 4.0):
        np.testing.assert_allclose(attractive_ep_solution(data, t).values, 0.3 - 0.5 * t, atol=1e-12)


def test_attractive_solution_rejects_repulsion():
    with pytest.raises(WrongRegime):
        attractive_ep_solution(two_rarefaction_data(Grid(8)), 1.0)


def test_attractive_state_averages_velocities_on_plateaus():
    grid = Grid(100)
    data = converging_data(grid)
    state = attractive_ep_state(data, 0.4)
    plateau = state.x.values == state.x.values[50]
    assert plateau.sum() > 2
    assert np.ptp(state.v.values[plateau]) == 0.0
    assert np.mean(state.v.values) == pytest.approx(np.mean(data.v0.values), abs=1e-12)


def test_two_rarefaction_oracle_values():
    grid = Grid(10)
    m = grid.midpoints()
    np.testing.assert_allclose(repulsive_two_rarefaction_oracle(0.0, grid).values, m - 0.5)
    assert repulsive_two_rarefaction_oracle(2.0, grid).values[9] == pytest.approx(0.25)
    np.testing.assert_array_equal(repulsive_two_rarefaction_oracle(1.0, grid).values, np.zeros(10))
    assert two_rarefaction_half_width(1.0) == 0.5
    assert two_rarefaction_half_width(2.0) == pytest.approx(0.4)


@pytest.mark.parametrize("t", [0.5, 2.0])
def test_convexified_two_rarefaction_matches_oracle(t):
    n_cells = 10000
    grid = Grid(n_cells)
    m = grid.midpoints()
    x = convexified_flow(two_rarefaction_data(grid), t)
    oracle = repulsive_two_rarefaction_oracle(t, grid)
    assert np.max(np.abs(x.values - oracle.values)) <= 2 / n_cells
    assert plateau_half_width(x) == pytest.approx(two_rarefaction_half_width(t), abs=2 / n_cells)
    outside = np.abs(m - 0.5) > two_rarefaction_half_width(t) + 2 / n_cells
    np.testing.assert_array_equal(x.values[outside], two_rarefaction_free_flow(t, grid)[outside])


def test_convexified_two_rarefaction_collapses_at_unit_time():
    grid = Grid(10000)
    x = convexified_flow(two_rarefaction_data(grid), 1.0)
    assert np.max(np.abs(x.values)) <= 1e-12


def test_dirac_diffusion_solution():
    grid = Grid(1000)
    np.testing.assert_array_equal(dirac_diffusion_solution(1.5, 2.0, -1.0, 0.0, grid).values, np.full(1000, 1.5))
    x = dirac_diffusion_solution(0.0, 0.0, -1.0, 2.0, grid)
    np.testing.assert_allclose(x.values, 2 * (grid.midpoints() - 0.5))
    assert -1 < x.values[0] < x.values[-1] < 1
    assert x.values[-1] == pytest.approx(1.0, abs=2e-3)
    with pytest.raises(WrongRegime):
        dirac_diffusion_solution(0.0, 0.0, 1.0, 1.0, grid)


def test_certificate_window():
    t_minus, t_plus = certificate_window(0.25)
    assert t_minus == pytest.approx(2 - math.sqrt(3))
    assert t_plus == pytest.approx(2 + math.sqrt(3))
    for t in (t_minus, t_plus):
        assert two_rarefaction_half_width(t) == pytest.approx(0.25)
    for delta in (0.0, 0.5, -1.0):
        with pytest.raises(ValueError):
            certificate_window(delta)


def test_plateau_half_width_without_plateau():
    grid = Grid(8)
    assert plateau_half_width(TransportMap(grid, grid.midpoints())) == 0.0
    assert plateau_half_width(TransportMap(grid, np.zeros(8))) == 0.5


def test_certificate_passes_for_attractive_flow():
    grid = Grid(1000)
    data = converging_data(grid)
    times = np.linspace(0.0, 2.0, 21)
    xs = [convexified_flow(data, t) for t in times]
    ys = [free_flow_profile(data, t) for t in times]
    report = check_inclusion_certificate(xs, ys, times)
    assert report.passed
    assert report.min_increment >= -1e-10


def random_data(rng, grid, lam):
    n = grid.n_cells
    return EPInitialData(
        TransportMap(grid, np.sort(rng.normal(size=n))), VelocityField(grid, rng.normal(size=n)), lam
    )


@pytest.mark.parametrize("lam", [0.0, 1.0])
def test_certificate_passes_for_random_attractive_data(lam):
    rng = np.random.default_rng(60 + int(lam))
    grid = Grid(2048)
    times = np.linspace(0.0, 2.0, 21)
    for _ in range(10):
        data = random_data(rng, grid, lam)
        xs = [convexified_flow(data, t) for t in times]
        ys = [free_flow_profile(data, t) for t in times]
        report = check_inclusion_certificate(xs, ys, times)
        assert report.passed, report.min_increment


def test_restarting_from_a_solved_state_gives_the_same_flow():
    n_cells = 1000
    grid = Grid(n_cells)
    rng = np.random.default_rng(62)
    for data in (smooth_data(grid), converging_data(grid), random_data(rng, grid, 1.0)):
        for t1, t2 in ((0.3, 0.5), (1.0, 1.0)):
            middle = attractive_ep_state(data, t1)
            restarted = attractive_ep_solution(EPInitialData(middle.x, middle.v, data.lam), t2)
            direct = attractive_ep_solution(data, t1 + t2)
            assert wasserstein2(restarted, direct) <= 2 / n_cells


def test_free_sticky_flow_loses_kinetic_energy():
    rng = np.random.default_rng(63)
    grid = Grid(500)
    data = random_data(rng, grid, 0.0)
    times = (0.0, 0.1, 0.25, 0.5, 1.0, 2.0, 4.0)
    norms = [np.sqrt(np.mean(attractive_ep_state(data, t).v.values ** 2)) for t in times]
    assert np.all(np.diff(norms) <= 1e-12)
    assert norms[-1] < norms[0]


@pytest.mark.parametrize("lam", [0.0, 1.0])
def test_joined_cells_stay_joined(lam):
    rng = np.random.default_rng(64)
    grid = Grid(500)
    for data in (random_data(rng, grid, lam), smooth_data(grid), converging_data(grid, lam)):
        joined = [np.diff(attractive_ep_solution(data, t).values) == 0 for t in (0.0, 0.25, 0.5, 1.0, 2.0)]
        for earlier, later in zip(joined[:-1], joined[1:]):
            assert np.all(later[earlier])


def test_certificate_passes_for_constant_map():
    grid = Grid(10)
    x = TransportMap(grid, np.zeros(10))
    report = check_inclusion_certificate([x] * 4, [np.zeros(10)] * 4)
    assert report.passed
    assert report.min_increment == 0.0


def test_certificate_fails_for_convexified_repulsion():
    grid = Grid(1000)
    data = two_rarefaction_data(grid)
    t_minus, t_plus = certificate_window(0.25)
    times = np.linspace(t_minus + 0.05, t_plus - 0.05, 16)
    xs = [convexified_flow(data, t) for t in times]
    ys = [free_flow_profile(data, t) for t in times]
    report = check_inclusion_certificate(xs, ys, times)
    assert not report.passed
    assert report.min_increment < -1e-6
    # the plateau shrinks after t = 1 and its edge nodes lose their gap
    assert times[report.worst_pair] >= 0.9
    assert report.worst_node is not None


def test_certificate_input_validation():
    grid = Grid(4)
    x = TransportMap(grid, np.zeros(4))
    with pytest.raises(ValueError):
        check_inclusion_certificate([x, x], [np.zeros(4)])
    with pytest.raises(ValueError):
        check_inclusion_certificate([x, x], [np.zeros(4)] * 2, [1.0, 1.0])


def particle_error(n_particles, t, reference_grid):
    m = Grid(n_particles).midpoints()
    sys = ParticleSystem(np.full(n_particles, 1 / n_particles), 2 * (m - 0.5), (m - 0.5) + 0.8 * np.sin(2 * np.pi * m))
    traj = evolve_sticky(sys, EulerPoissonForce(1.0), t, t)
    x_particles, _ = particles_to_map(traj.final, reference_grid)
    return wasserstein2(x_particles, attractive_ep_solution(smooth_data(reference_grid), t))


@pytest.mark.slow
@pytest.mark.parametrize("t", [0.5, 1.0, 2.0])
def test_particles_converge_to_formula(t):
    reference_grid = Grid(8192)
    errors = [particle_error(k, t, reference_grid) for k in (64, 128, 256)]
    for coarse, fine in zip(errors[:-1], errors[1:]):
        assert 1.5 <= coarse / fine <= 2.5
