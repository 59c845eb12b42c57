"""Plug-in electric vehicle overnight-charging benchmark generator.

Each vehicle optimizes a charging-rate schedule against per-slot electricity
prices subject to battery limits and a final state-of-charge requirement.
The fleet shares a per-slot grid power cap; the inequality cap is folded into
the equality-coupled form by giving every vehicle a bounded slack vector, so
agent ``i``'s decision is ``x_i = [xi_i; s_i]`` with coupling map
``A_i = [I, I]`` per slot and right-hand side the grid cap.

Vehicle parameters are drawn uniformly from configurable ranges with a fixed
seed, so identical configurations generate bit-identical problems. By default
the grid cap is calibrated to a multiple of the fleet's average power demand:
low enough that price-chasing schedules violate it, high enough that evenly
spread schedules stay feasible.
"""

import json
from dataclasses import dataclass, asdict

import numpy as np

from .problem import (ConstraintCoupledProblem, CouplingBlock, LocalObjective,
                      Polyhedron, coupling_residual, split_rhs)


@dataclass(frozen=True)
class PevConfig:
    """Benchmark knobs. Energy in kWh, power in kW, prices in $/kWh."""

    n_vehicles: int
    horizon: int = 24
    price_range: tuple = (0.02, 0.08)
    battery_capacity_range: tuple = (16.0, 24.0)
    initial_soc_range: tuple = (2.0, 8.0)
    target_soc_range: tuple = (8.0, 16.0)
    max_charge_rate: float = 5.0
    grid_cap: object = None       # scalar, per-slot vector, or None (calibrated)
    cap_factor: float = 1.5       # calibration: cap = factor * mean fleet power
    slack_cap: object = None      # default: max over the grid cap entries
    seed: int = 0

    def __post_init__(self):
        if self.n_vehicles < 2:
            raise ValueError("need at least 2 vehicles")
        if self.horizon < 1:
            raise ValueError("horizon must be positive")
        for name in ("price_range", "battery_capacity_range",
                     "initial_soc_range", "target_soc_range"):
            lo, hi = getattr(self, name)
            if not (0.0 <= lo <= hi):
                raise ValueError(f"{name} must be a nonempty nonnegative range")
        if self.max_charge_rate <= 0:
            raise ValueError("max_charge_rate must be positive")
        if self.cap_factor <= 1.0:
            raise ValueError("cap_factor must exceed 1 (feasibility margin)")


def _draw_vehicles(config):
    rng = np.random.default_rng(config.seed)
    t = config.horizon
    vehicles = []
    for i in range(config.n_vehicles):
        prices = rng.uniform(*config.price_range, size=t)
        capacity = rng.uniform(*config.battery_capacity_range)
        initial = rng.uniform(*config.initial_soc_range)
        target = min(rng.uniform(*config.target_soc_range), capacity)
        needed = max(0.0, target - initial)
        if needed > t * config.max_charge_rate + 1e-12:
            raise ValueError(
                f"vehicle {i}: target state of charge unreachable "
                f"({needed:.2f} kWh needed, {t * config.max_charge_rate:.2f} possible)")
        vehicles.append({"prices": prices, "capacity": capacity,
                         "initial": initial, "target": target, "needed": needed})
    return vehicles


def _grid_cap(config, vehicles):
    t = config.horizon
    if config.grid_cap is not None:
        cap = np.asarray(config.grid_cap, dtype=float)
        if cap.ndim == 0:
            cap = np.full(t, float(cap))
        if cap.shape != (t,):
            raise ValueError(f"grid_cap must be a scalar or a length-{t} vector")
        return cap
    total_energy = sum(v["needed"] for v in vehicles)
    return np.full(t, config.cap_factor * total_energy / t)


def generate(config):
    """Build the coupled charging problem for a configuration.

    Per vehicle: cost ``prices' xi`` (linear), cumulative-charge rows keeping
    the state of charge below capacity, one row enforcing the final target,
    boxes ``0 <= xi <= max rate`` and ``0 <= s <= slack cap``. The coupling
    reads ``sum_i (xi_i + s_i) = grid cap`` per slot.
    """
    vehicles = _draw_vehicles(config)
    b = _grid_cap(config, vehicles)
    t = config.horizon
    s_bar = float(np.max(b)) if config.slack_cap is None else float(config.slack_cap)
    if s_bar < np.max(b) - 1e-12:
        raise ValueError("slack_cap must be at least the largest grid cap entry")

    total_energy = sum(v["needed"] for v in vehicles)
    if total_energy / t > np.min(b) + 1e-9:
        raise ValueError(
            "grid cap too tight: evenly spread fleet demand "
            f"({total_energy / t:.3f} kW) exceeds the smallest cap entry ({np.min(b):.3f} kW)")

    shares = split_rhs(b, config.n_vehicles, mode="uniform")
    lower_tri = np.tril(np.ones((t, t)))
    agents = []
    for i, v in enumerate(vehicles):
        lin = np.concatenate([v["prices"], np.zeros(t)])
        obj = LocalObjective(np.zeros((2 * t, 2 * t)), lin)
        # rows: cumulative charge <= capacity headroom, then -sum(xi) <= -needed
        ineq_a = np.zeros((t + 1, 2 * t))
        ineq_a[:t, :t] = lower_tri
        ineq_a[t, :t] = -1.0
        ineq_b = np.concatenate([np.full(t, v["capacity"] - v["initial"]), [-v["needed"]]])
        poly = Polyhedron(ineq_a, ineq_b,
                          np.zeros(2 * t),
                          np.concatenate([np.full(t, config.max_charge_rate),
                                          np.full(t, s_bar)]))
        coupling = CouplingBlock(np.hstack([np.eye(t), np.eye(t)]), shares[i])
        agents.append((obj, poly, coupling))
    problem = ConstraintCoupledProblem(tuple(agents), b)

    # constructive joint-feasibility witness: spread each vehicle's demand
    # evenly, split the per-slot cap headroom evenly across slacks
    witness = []
    mean_load = total_energy / t
    for v in vehicles:
        witness.append(np.concatenate([np.full(t, v["needed"] / t),
                                       (b - mean_load) / config.n_vehicles]))
    residual = coupling_residual(problem, np.concatenate(witness))
    if np.max(np.abs(residual)) > 1e-9 * (1.0 + np.max(b)):
        raise RuntimeError("internal feasibility witness failed to close the coupling")
    return problem


def describe(config):
    """Dimension and constraint-count metadata for run logs."""
    t = config.horizon
    return {
        "n_vehicles": config.n_vehicles,
        "horizon": t,
        "vars_per_vehicle": 2 * t,
        "total_vars": 2 * t * config.n_vehicles,
        "coupling_rows": t,
        "local_inequalities_per_vehicle": t + 1,
        "local_bounds_per_vehicle": 4 * t,
    }


def preset_paper_scale():
    """Large preset: 100 vehicles, 24 slots, small constant penalty, 200 rounds."""
    config = PevConfig(n_vehicles=100, horizon=24, seed=7)
    engine = {"c": 1e-4, "max_iters": 200, "subproblem_tol": 1e-8,
              "feas_tol": 1e-9, "cons_tol": 1e-9, "dual_tol": 1e-12}
    return config, engine


def preset_desk_scale():
    """Small preset sized for quick convergence studies: 20 vehicles, 24 slots."""
    config = PevConfig(n_vehicles=20, horizon=24, seed=11)
    engine = {"c": 0.05, "max_iters": 2000, "subproblem_tol": 1e-8,
              "feas_tol": 1e-9, "cons_tol": 1e-9, "dual_tol": 1e-12}
    return config, engine


def config_to_dict(config):
    d = asdict(config)
    if isinstance(d["grid_cap"], np.ndarray):
        d["grid_cap"] = d["grid_cap"].tolist()
    for name in ("price_range", "battery_capacity_range",
                 "initial_soc_range", "target_soc_range"):
        d[name] = list(d[name])
    return d


def config_from_dict(data):
    kwargs = dict(data)
    for name in ("price_range", "battery_capacity_range",
                 "initial_soc_range", "target_soc_range"):
        if name in kwargs:
            kwargs[name] = tuple(kwargs[name])
    return PevConfig(**kwargs)


def save_config(config, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config_to_dict(config), fh, indent=2)


def load_config(path):
    with open(path, "r", encoding="utf-8") as fh:
        return config_from_dict(json.load(fh))
