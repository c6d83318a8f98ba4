"""Frequency-secured stochastic scheduling with V2G response."""

from .config import (ConfigError, FleetConfig, GeneratorClass, StorageUnit, SystemConfig,
                     config_from_dict, default_config, default_config_path, load_config)
from .problem import (FleetNodeInput, StaticInfeasible, SystemState, assemble_problem,
                      balance_residual, extract, recompute_objective, solve_horizon)
from .rolling import (HourRecord, ModelFailure, SimulationResult, read_detail, read_log,
                      rolling_simulate, step_hour)
from .tree import ScenarioTree, TreeNode, branch_weights, build_tree

__all__ = [
    "ConfigError", "FleetConfig", "GeneratorClass", "StorageUnit", "SystemConfig",
    "config_from_dict", "default_config", "default_config_path", "load_config",
    "FleetNodeInput", "StaticInfeasible", "SystemState", "assemble_problem", "balance_residual",
    "extract", "recompute_objective", "solve_horizon",
    "HourRecord", "ModelFailure", "SimulationResult", "read_detail", "read_log",
    "rolling_simulate", "step_hour",
    "ScenarioTree", "TreeNode", "branch_weights", "build_tree",
]
