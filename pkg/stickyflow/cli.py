from __future__ import annotations

import argparse
import copy
import json
import logging
import os
import sys
import time
from typing import Callable, Dict, List, Optional, Tuple

import jsonschema
import numpy as np

from stickyflow import artifacts, periodic_scheme, workers
from stickyflow.cone_projection import project_cone
from stickyflow.ep_solvers import (
    EPInitialData,
    WrongRegime,
    attractive_ep_state,
    check_inclusion_certificate,
    free_flow_profile,
)
from stickyflow.eulerian_bridge import (
    SupportOutsideWindow,
    TestFunction,
    default_test_functions,
    richardson_ratios,
    weak_residual,
)
from stickyflow.force_fields import (
    INTERACTION_PRESETS,
    POTENTIAL_PRESETS,
    EulerPoissonForce,
    force_from_descriptor,
)
from stickyflow.logging_filter import ProgressFilter
from stickyflow.particle_dynamics import (
    EventCascadeError,
    NumericalFailure,
    evolve_inclusion,
    evolve_sticky,
)
from stickyflow.transport_core import (
    Grid,
    InvalidState,
    LagrangianState,
    ParticleSystem,
    TransportMap,
    VelocityField,
    map_to_particles,
    particles_to_map,
    plateaus,
    wasserstein2,
)

LOGGING_FORMAT = "%(message)s"

EXIT_CONFIG_ERROR = 2
EXIT_NUMERICAL_FAILURE = 3
EXIT_IO_ERROR = 4

DEFAULT_GRID_SIZE = periodic_scheme.DEFAULT_GRID_SIZE
DEFAULT_TAU = periodic_scheme.DEFAULT_TAU
DEFAULT_STEPS = periodic_scheme.DEFAULT_STEPS
DEFAULT_SAMPLE_EVERY = 10
DEFAULT_SEED = 0
DEFAULT_PARTICLES = 64
DEFAULT_RANDOM_PARTICLES = 16
CLUSTER_GAP = 1e-4

COMMANDS = (
    "simulate-particles",
    "evolve-inclusion",
    "solve-attractive",
    "periodic-scheme",
    "project",
    "weak-check",
    "compare",
)
PRESETS = ("two-rarefaction", "dirac", "fig123", "random-particles", "smooth")

REQUIRED_FIELDS = {
    "simulate-particles": ["force", "initial", "t_end", "sample_dt"],
    "evolve-inclusion": ["force", "initial", "t_end", "tau"],
    "solve-attractive": ["force", "initial", "times"],
    "periodic-scheme": ["initial"],
    "project": ["values"],
    "weak-check": ["force", "initial", "t_end", "dt_levels"],
    "compare": ["force", "initial", "times"],
}

_NUMBERS = {"type": "array", "items": {"type": "number"}, "minItems": 1}

CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "command": {"type": "string", "enum": list(COMMANDS)},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "grid_size": {"type": "integer", "minimum": 1},
        "tau": {"type": "number", "exclusiveMinimum": 0},
        "steps": {"type": "integer", "minimum": 0},
        "sample_every": {"type": "integer", "minimum": 1},
        "t_end": {"type": "number", "exclusiveMinimum": 0},
        "sample_dt": {"type": "number", "exclusiveMinimum": 0},
        "particles": {"type": "integer", "minimum": 1},
        "times": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
        "values": _NUMBERS,
        "dt_levels": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 2},
        "force": {
            "type": "object",
            "required": ["kind"],
            "properties": {
                "kind": {"type": "string", "enum": ["euler-poisson", "potential", "interaction"]},
                "lambda": {"type": "number"},
                "sigma": {"type": "number", "minimum": 0},
                "name": {"type": "string"},
                "k": {"type": "number"},
                "center": {"type": "number"},
                "strength": {"type": "number"},
            },
            "allOf": [
                {
                    "if": {"properties": {"kind": {"const": "euler-poisson"}}},
                    "then": {"required": ["lambda"]},
                },
                {
                    "if": {"properties": {"kind": {"const": "potential"}}},
                    "then": {"required": ["name"], "properties": {"name": {"enum": sorted(POTENTIAL_PRESETS)}}},
                },
                {
                    "if": {"properties": {"kind": {"const": "interaction"}}},
                    "then": {"required": ["name"], "properties": {"name": {"enum": sorted(INTERACTION_PRESETS)}}},
                },
            ],
        },
        "initial": {
            "type": "object",
            "properties": {
                "preset": {"type": "string", "enum": list(PRESETS)},
                "count": {"type": "integer", "minimum": 1},
                "x_bar": {"type": "number"},
                "v_bar": {"type": "number"},
                "x": _NUMBERS,
                "v": _NUMBERS,
                "masses": _NUMBERS,
                "positions": _NUMBERS,
                "velocities": _NUMBERS,
            },
        },
        "test_functions": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["t", "x_center", "x_radius"],
                "properties": {
                    "kind": {"type": "string", "enum": ["bump", "x-bump", "sin-bump"]},
                    "t": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
                    "x_center": {"type": "number"},
                    "x_radius": {"type": "number", "exclusiveMinimum": 0},
                    "wavenumber": {"type": "number"},
                },
            },
        },
    },
}


class ImproperlyConfigured(ValueError):
    def __init__(self, message: str, key: Optional[str] = None):
        super().__init__(message)
        self.key = key


class UnknownCommand(ImproperlyConfigured):
    pass


class MissingField(ImproperlyConfigured):
    pass


class BadType(ImproperlyConfigured):
    pass


class OutOfRange(ImproperlyConfigured):
    pass


_RANGE_VALIDATORS = {"minimum", "maximum", "exclusiveMinimum", "exclusiveMaximum", "minItems", "maxItems"}


def _key(path) -> str:
    return ".".join(str(item) for item in path)


def _translate(error: jsonschema.ValidationError) -> ImproperlyConfigured:
    path = list(error.absolute_path)
    if error.validator == "required":
        missing = [name for name in error.validator_value if name not in error.instance]
        key = _key(path + missing[:1])
        return MissingField(f"Missing field {key}", key)
    key = _key(path)
    if error.validator == "type":
        return BadType(f"Field {key} must be of type {error.validator_value}: {error.message}", key)
    if error.validator in _RANGE_VALIDATORS:
        return OutOfRange(f"Field {key} is out of range: {error.message}", key)
    if error.validator in ("enum", "const"):
        return OutOfRange(f"Field {key} has an unsupported value: {error.message}", key)
    return ImproperlyConfigured(f"Field {key}: {error.message}", key)


def validate_config(cfg: Dict) -> None:
    if not isinstance(cfg, dict):
        raise BadType("Configuration must be a JSON object")
    if "command" not in cfg:
        raise MissingField("Missing field command", "command")
    if cfg["command"] not in COMMANDS:
        raise UnknownCommand(f"Unknown command {cfg['command']!r}, expected one of {', '.join(COMMANDS)}", "command")
    schema = dict(CONFIG_SCHEMA, required=REQUIRED_FIELDS[cfg["command"]])
    validator = jsonschema.Draft7Validator(schema)
    error = jsonschema.exceptions.best_match(validator.iter_errors(cfg))
    if error is not None:
        raise _translate(error)


class RunConfig:  # pylint: disable=too-many-instance-attributes
    def __init__(self) -> None:
        self.command = ""
        self.seed = DEFAULT_SEED
        self.grid_size = DEFAULT_GRID_SIZE
        self.tau = DEFAULT_TAU
        self.steps = DEFAULT_STEPS
        self.sample_every = DEFAULT_SAMPLE_EVERY
        self.t_end: Optional[float] = None
        self.sample_dt: Optional[float] = None
        self.particles = DEFAULT_PARTICLES
        self.times: List[float] = []
        self.values: List[float] = []
        self.dt_levels: List[float] = []
        self.force: Optional[Dict] = None
        self.initial: Dict = {}
        self.test_functions: List[TestFunction] = []
        self.raw: Dict = {}

    def load_config(self, cfg: Dict):
        validate_config(cfg)
        self.raw = copy.deepcopy(cfg)
        self.command = cfg["command"]
        self.seed = cfg.get("seed", DEFAULT_SEED)
        self.initial = self.get_initial(cfg)
        self.grid_size = self.get_grid_size(cfg, self.initial)
        self.tau = cfg.get("tau", DEFAULT_TAU)
        self.steps = cfg.get("steps", DEFAULT_STEPS)
        self.sample_every = cfg.get("sample_every", DEFAULT_SAMPLE_EVERY)
        self.t_end = cfg.get("t_end")
        self.sample_dt = cfg.get("sample_dt")
        self.particles = cfg.get("particles", DEFAULT_PARTICLES)
        self.times = self.get_times(cfg)
        self.values = list(cfg.get("values", []))
        self.dt_levels = list(cfg.get("dt_levels", []))
        self.force = cfg.get("force")
        self.test_functions = self.get_test_functions(cfg)

    @staticmethod
    def get_initial(cfg: Dict) -> Dict:
        initial = dict(cfg.get("initial", {}))
        command = cfg["command"]
        preset = initial.get("preset")
        if preset == "fig123" and command != "periodic-scheme":
            raise OutOfRange("Preset fig123 only drives the periodic scheme", "initial.preset")
        if command == "periodic-scheme" and preset is None and "x" not in initial:
            raise MissingField("Periodic scheme needs initial.preset or initial.x", "initial.preset")
        if command == "periodic-scheme" and preset not in (None, "fig123"):
            raise OutOfRange(f"The periodic scheme only runs preset fig123 or inline x, got {preset}", "initial.preset")
        if "x" in initial and len(initial["x"]) != len(initial.get("v", initial["x"])):
            raise OutOfRange("initial.x and initial.v differ in length", "initial.v")
        if "positions" in initial:
            sizes = {len(initial.get(name, initial["positions"])) for name in ("masses", "positions", "velocities")}
            if len(sizes) != 1:
                raise OutOfRange("Particle arrays differ in length", "initial.positions")
        if preset is None and not {"x", "positions"} & set(initial) and command not in ("project",):
            raise MissingField("initial needs a preset, x or positions", "initial.preset")
        return initial

    @staticmethod
    def get_grid_size(cfg: Dict, initial: Dict) -> int:
        if "x" in initial:
            return len(initial["x"])
        return cfg.get("grid_size", DEFAULT_GRID_SIZE)

    @staticmethod
    def get_times(cfg: Dict) -> List[float]:
        return sorted(set(cfg.get("times", [])))

    @staticmethod
    def get_test_functions(cfg: Dict) -> List[TestFunction]:
        res = []
        for i, item in enumerate(cfg.get("test_functions", [])):
            try:
                res.append(
                    TestFunction(
                        item["t"][0],
                        item["t"][1],
                        item["x_center"],
                        item["x_radius"],
                        item.get("kind", "bump"),
                        item.get("wavenumber", 2 * np.pi),
                    )
                )
            except ValueError as e:
                raise OutOfRange(f"Incorrect test function: {e}", f"test_functions.{i}") from e
        return res

    def to_dict(self) -> Dict:
        return copy.deepcopy(self.raw)


def parse_config(text: str) -> RunConfig:
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as e:
        raise ImproperlyConfigured(f"Malformed JSON: {e}") from e
    config = RunConfig()
    config.load_config(cfg)
    return config


# initial data


def _profile(initial: Dict) -> Tuple[Callable, Callable]:
    preset = initial.get("preset")
    if preset == "smooth":
        return (lambda m: 2 * (m - 0.5)), (lambda m: (m - 0.5) + 0.8 * np.sin(2 * np.pi * m))
    if preset == "two-rarefaction":
        return (lambda m: m - 0.5), (lambda m: -np.sign(m - 0.5))
    if preset == "dirac":
        x_bar, v_bar = initial.get("x_bar", 0.0), initial.get("v_bar", 0.0)
        return (lambda m: np.full_like(m, x_bar)), (lambda m: np.full_like(m, v_bar))
    raise ImproperlyConfigured(f"Preset {preset} has no analytic profile", "initial.preset")


def _random_particles(initial: Dict, rng: np.random.Generator) -> ParticleSystem:
    count = initial.get("count", DEFAULT_RANDOM_PARTICLES)
    positions = np.sort(rng.uniform(0.0, 1.0, count))
    velocities = rng.normal(0.0, 1.0, count)
    return ParticleSystem(np.full(count, 1.0 / count), positions, velocities)


def initial_particles(initial: Dict, rng: np.random.Generator, count: Optional[int] = None) -> ParticleSystem:
    if "positions" in initial:
        positions = np.asarray(initial["positions"], dtype=float)
        masses = initial.get("masses", np.full(positions.size, 1.0 / positions.size))
        velocities = initial.get("velocities", np.zeros(positions.size))
        return ParticleSystem(masses, positions, velocities)
    if "x" in initial:
        state = initial_map_state(initial, Grid(len(initial["x"])), rng)
        return map_to_particles(state.x, state.v)
    if initial.get("preset") == "random-particles":
        return _random_particles(initial, rng)
    count = count or initial.get("count", DEFAULT_PARTICLES)
    x_fn, v_fn = _profile(initial)
    m = Grid(count).midpoints()
    return ParticleSystem(np.full(count, 1.0 / count), x_fn(m), v_fn(m))


def initial_map_state(initial: Dict, grid: Grid, rng: np.random.Generator) -> LagrangianState:
    if "x" in initial:
        x = TransportMap(grid, initial["x"])
        return LagrangianState(x, VelocityField(grid, initial.get("v", np.zeros(grid.n_cells))))
    if "positions" in initial or initial.get("preset") == "random-particles":
        x, v = particles_to_map(initial_particles(initial, rng), grid)
        return LagrangianState(x, v)
    x_fn, v_fn = _profile(initial)
    m = grid.midpoints()
    return LagrangianState(TransportMap(grid, x_fn(m)), VelocityField(grid, v_fn(m)))


def _attractive_force(descriptor: Dict) -> EulerPoissonForce:
    force = force_from_descriptor(descriptor)
    if not isinstance(force, EulerPoissonForce) or force.sigma:
        raise ImproperlyConfigured("The closed-form solver needs an Euler-Poisson force without background", "force")
    return force


# commands


Outcome = Tuple[List[str], Dict]


def _map_rows(times, states) -> Tuple[List[str], List[List]]:
    n_cells = states[0].grid.n_cells
    header = ["t"] + [f"x_{i}" for i in range(n_cells)] + [f"v_{i}" for i in range(n_cells)]
    rows = [[t] + s.x.values.tolist() + s.v.values.tolist() for t, s in zip(times, states)]
    return header, rows


def _write_map_trajectory(out_dir: str, times, states, title: str) -> List[str]:
    header, rows = _map_rows(times, states)
    csv_path = artifacts.write_csv(os.path.join(out_dir, "trajectory.csv"), header, rows)
    positions = np.array([s.x.values for s in states])
    svg_path = artifacts.write_spacetime_svg(os.path.join(out_dir, "trajectory.svg"), times, positions, title)
    return [csv_path, svg_path]


def simulate_particles(config: RunConfig, out_dir: str, rng: np.random.Generator) -> Outcome:
    sys0 = initial_particles(config.initial, rng)
    force = force_from_descriptor(config.force)
    traj = evolve_sticky(sys0, force, config.t_end, config.sample_dt)
    k = len(sys0)
    header = ["t", "particles"] + [f"x_{i}" for i in range(k)] + [f"v_{i}" for i in range(k)]
    rows, positions, energy_rows = [], [], []
    for t, state, members in zip(traj.sample_times.tolist(), traj.states, traj.groups):
        sizes = [len(group) for group in members]
        x, v = np.repeat(state.positions, sizes), np.repeat(state.velocities, sizes)
        rows.append([t, len(state)] + x.tolist() + v.tolist())
        positions.append(x)
        energy_rows.append([t, state.kinetic_energy(), state.momentum()])
    files = [
        artifacts.write_csv(os.path.join(out_dir, "trajectory.csv"), header, rows),
        artifacts.write_csv(os.path.join(out_dir, "energy.csv"), ["t", "kinetic_energy", "momentum"], energy_rows),
        artifacts.write_spacetime_svg(
            os.path.join(out_dir, "trajectory.svg"), traj.sample_times, np.array(positions), "sticky particles"
        ),
    ]
    momenta = np.array([row[2] for row in energy_rows])
    metrics = {
        "events": len(traj.events),
        "final_particles": len(traj.final),
        "momentum_drift": float(np.max(np.abs(momenta - momenta[0]))),
        "max_event_momentum_defect": max((e.momentum_defect() for e in traj.events), default=0.0),
    }
    return files, metrics


def run_inclusion(config: RunConfig, out_dir: str, rng: np.random.Generator) -> Outcome:
    state = initial_map_state(config.initial, Grid(config.grid_size), rng)
    force = force_from_descriptor(config.force)
    traj = evolve_inclusion(state.x, state.v, force, config.t_end, config.tau, config.sample_every)
    files = _write_map_trajectory(out_dir, traj.sample_times.tolist(), traj.states, "projected inclusion")
    final_plateaus = plateaus(traj.final.x)
    metrics = {"plateaus": len(final_plateaus), "covered_cells": final_plateaus.covered_cells()}
    return files, metrics


def solve_attractive(config: RunConfig, out_dir: str, rng: np.random.Generator) -> Outcome:
    force = _attractive_force(config.force)
    state = initial_map_state(config.initial, Grid(config.grid_size), rng)
    data = EPInitialData(state.x, state.v, force.lam)
    states = workers.map_ordered(lambda t: attractive_ep_state(data, t), config.times)
    files = _write_map_trajectory(out_dir, config.times, states, "attractive Euler-Poisson")
    flows = [free_flow_profile(data, t) for t in config.times]
    report = check_inclusion_certificate([s.x for s in states], flows, config.times if len(config.times) > 1 else None)
    min_increment = report.min_increment if np.isfinite(report.min_increment) else None
    return files, {"certificate_passed": report.passed, "certificate_min_increment": min_increment}


def run_periodic(config: RunConfig, out_dir: str, rng: np.random.Generator) -> Outcome:
    # pylint: disable=unused-argument
    if "x" in config.initial:
        grid = Grid(len(config.initial["x"]))
        initial = periodic_scheme.PeriodicState(grid, config.initial["x"], config.initial.get("v", np.zeros(grid.n_cells)))
    else:
        initial = periodic_scheme.fig123_initial(Grid(config.grid_size))
    res = periodic_scheme.run(initial, config.tau, config.steps, config.sample_every)
    n_cells = initial.grid.n_cells
    header = ["step", "t", "energy"] + [f"x_{i}" for i in range(n_cells)] + [f"v_{i}" for i in range(n_cells)]
    rows = [
        [step, step * config.tau, res.energies[step]] + s.x_values.tolist() + s.v_values.tolist()
        for step, s in zip(res.sample_steps.tolist(), res.states)
    ]
    files = [
        artifacts.write_csv(os.path.join(out_dir, "trajectory.csv"), header, rows),
        artifacts.write_csv(os.path.join(out_dir, "energy.csv"), ["step", "t", "energy"], periodic_scheme.energy_series(res)),
        artifacts.write_spacetime_svg(
            os.path.join(out_dir, "trajectory.svg"),
            res.sample_times,
            np.array([s.x_values for s in res.states]),
            "periodic predictor-corrector",
        ),
    ]
    metrics = {
        "initial_energy": float(res.energies[0]),
        "final_energy": float(res.energies[-1]),
        "energy_violations": int(res.energy_violations().size),
        "final_cluster_fraction": periodic_scheme.cluster_fraction(res.states[-1], CLUSTER_GAP),
    }
    return files, metrics


def run_projection(config: RunConfig, out_dir: str, rng: np.random.Generator) -> Outcome:
    # pylint: disable=unused-argument
    values = np.asarray(config.values, dtype=float)
    projected = project_cone(values)
    m = projected.grid.midpoints()
    rows = zip(range(values.size), m.tolist(), values.tolist(), projected.values.tolist())
    path = artifacts.write_csv(os.path.join(out_dir, "projection.csv"), ["i", "m", "value", "projected"], rows)
    return [path], {"plateaus": len(plateaus(projected)), "distance": float(np.sqrt(np.mean((values - projected.values) ** 2)))}


def run_weak_check(config: RunConfig, out_dir: str, rng: np.random.Generator) -> Outcome:
    sys0 = initial_particles(config.initial, rng)
    force = force_from_descriptor(config.force)
    test_functions = config.test_functions
    if not test_functions:
        low, high = float(sys0.positions[0]), float(sys0.positions[-1])
        test_functions = default_test_functions(config.t_end, (low + high) / 2, (high - low) / 2 + 1.0)
    trajectories = workers.map_ordered(lambda dt: evolve_sticky(sys0, force, config.t_end, dt), config.dt_levels)
    report = []
    for phi in test_functions:
        residuals = [weak_residual(traj, force, phi) for traj in trajectories]
        mass, momentum = [r[0] for r in residuals], [r[1] for r in residuals]
        report.append(
            {
                "test_function": phi.describe(),
                "dt": list(config.dt_levels),
                "mass": mass,
                "momentum": momentum,
                "mass_ratios": richardson_ratios(mass),
                "momentum_ratios": richardson_ratios(momentum),
            }
        )
    path = artifacts.write_json(os.path.join(out_dir, "residuals.json"), {"residuals": report})
    finest = max(max(abs(item["mass"][-1]), abs(item["momentum"][-1])) for item in report)
    return [path], {"finest_max_residual": finest}


def run_compare(config: RunConfig, out_dir: str, rng: np.random.Generator) -> Outcome:
    force = _attractive_force(config.force)
    grid = Grid(config.grid_size)
    sys0 = initial_particles(config.initial, rng, config.particles)
    if "positions" in config.initial or config.initial.get("preset") == "random-particles":
        x, v = particles_to_map(sys0, grid)
        data = EPInitialData(x, v, force.lam)
    else:
        state = initial_map_state(config.initial, grid, rng)
        data = EPInitialData(state.x, state.v, force.lam)

    def distance(t: float) -> float:
        formula = attractive_ep_state(data, t).x
        if t == 0:
            particles = sys0
        else:
            particles = evolve_sticky(sys0, force, t, t).final
        return wasserstein2(formula, particles_to_map(particles, grid)[0])

    w2 = workers.map_ordered(distance, config.times)
    payload = {"grid_size": config.grid_size, "particles": len(sys0), "times": config.times, "w2": w2}
    path = artifacts.write_json(os.path.join(out_dir, "comparison.json"), payload)
    return [path], {"max_w2": max(w2)}


COMMAND_HANDLERS: Dict[str, Callable[[RunConfig, str, np.random.Generator], Outcome]] = {
    "simulate-particles": simulate_particles,
    "evolve-inclusion": run_inclusion,
    "solve-attractive": solve_attractive,
    "periodic-scheme": run_periodic,
    "project": run_projection,
    "weak-check": run_weak_check,
    "compare": run_compare,
}


def run(config: RunConfig, out_dir: str) -> int:
    started = time.monotonic()
    rng = np.random.default_rng(config.seed)
    try:
        os.makedirs(out_dir, exist_ok=True)
        files, metrics = COMMAND_HANDLERS[config.command](config, out_dir, rng)
        artifacts.write_manifest(out_dir, config.command, config.to_dict(), files, time.monotonic() - started, metrics)
    except NumericalFailure as ex:
        logging.error("Numerical failure at step %s: %s", ex.step, ex)
        return EXIT_NUMERICAL_FAILURE
    except EventCascadeError as ex:
        logging.error("Numerical failure: %s", ex)
        return EXIT_NUMERICAL_FAILURE
    except (ImproperlyConfigured, WrongRegime, InvalidState, SupportOutsideWindow) as ex:
        logging.error("Configuration error: %s", ex)
        return EXIT_CONFIG_ERROR
    except OSError as ex:
        logging.error("Writing results to %s failed: %s", out_dir, ex)
        return EXIT_IO_ERROR
    logging.info("%s finished in %.3f s, results in %s", config.command, time.monotonic() - started, out_dir)
    return 0


def init_logging(debug: bool, quiet: bool = False):
    if debug:
        log_level = logging.DEBUG
    elif quiet:
        log_level = logging.WARNING
    else:
        log_level = logging.INFO
    if log_level > logging.DEBUG:
        logger = logging.getLogger()
        logger.addFilter(ProgressFilter())
    logging.basicConfig(level=log_level, format=LOGGING_FORMAT)


def main(argv: Optional[List[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        description="Sticky pressureless flow simulator", formatter_class=argparse.ArgumentDefaultsHelpFormatter
    )
    parser.add_argument("-c", "--config", type=str, required=True, help="JSON run configuration")
    parser.add_argument("-o", "--out", type=str, default="out", help="Output directory")
    parser.add_argument("--seed", type=int, default=None, help="Override the configured random seed")
    parser.add_argument("-q", "--quiet", action="store_true", help="Only report warnings and errors")
    parser.add_argument("-d", "--debug", action="store_true", help="Verbose output")
    args = parser.parse_args(argv)

    init_logging(args.debug, args.quiet)

    try:
        with open(args.config, encoding="utf-8") as file:
            text = file.read()
    except OSError as ex:
        logging.error("Loading %s failed: %s", args.config, ex)
        return EXIT_IO_ERROR

    try:
        config = parse_config(text)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise OutOfRange(f"Seed {args.seed} is not a 64-bit unsigned integer", "seed")
            config.seed = args.seed
            config.raw["seed"] = args.seed
    except ImproperlyConfigured as ex:
        logging.error("Configuration error: %s", ex)
        return EXIT_CONFIG_ERROR

    return run(config, args.out)


if __name__ == "__main__":
    sys.exit(main())  # pragma: no cover
