"""Gillespie simulation of reaction systems and snapshot construction."""
from .gillespie import (BACKEND, Trajectory, get_backend, gillespie_simulate, simulate_final_states,
                        simulate_many, trajectory_rng)
from .snapshots import (SnapshotSet, empirical_joint, eval_grid, load_snapshots, make_snapshots,
                        save_snapshots, train_indices)
from .systems import BUILTIN, Propensity, ReactionSystem, builtin_system

__all__ = [
    "BACKEND", "Trajectory", "get_backend", "gillespie_simulate", "simulate_final_states",
    "simulate_many", "trajectory_rng", "SnapshotSet", "empirical_joint", "eval_grid",
    "load_snapshots", "make_snapshots", "save_snapshots", "train_indices", "BUILTIN",
    "Propensity", "ReactionSystem", "builtin_system",
]
