"""Finite-volume runs of the anisotropic heat equation and discrete balance checks."""

from .balance import BalanceReport, UnavailableJetError, discrete_balance, discrete_balances
from .config import ConfigError, SimulationConfig, config_from_dict, load_config
from .io import read_snapshot, write_json, write_residual_csv, write_snapshot
from .solver import SimulationState, StabilityError, Trajectory, iterate, solve
from .study import BalanceStudy, StudyResult, balance_studies, balance_study, convergence_study, observed_orders

__all__ = [
    "BalanceReport", "UnavailableJetError", "discrete_balance", "discrete_balances", "ConfigError", "SimulationConfig",
    "config_from_dict", "load_config", "read_snapshot", "write_json", "write_residual_csv",
    "write_snapshot", "SimulationState", "StabilityError", "Trajectory", "iterate", "solve",
    "BalanceStudy", "StudyResult", "balance_studies", "balance_study", "convergence_study", "observed_orders",
]
