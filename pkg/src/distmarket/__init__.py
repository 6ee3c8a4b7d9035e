"""Market-based and price-based microgrid scheduling in a three-level distribution market."""

from importlib.resources import files

from .errors import (AwardError, DistMarketError, InfeasibleError, ModelValidationError, ScenarioError,
                     StageError, UnboundedError)
from .market_core import load_scenario, save_scenario, validate_schedule

__version__ = "0.1.0"


def bundled_scenario(name="six_bus"):
    """Path of a scenario directory shipped with the package."""
    return str(files(__package__) / "data" / name)


__all__ = ["AwardError", "DistMarketError", "InfeasibleError", "ModelValidationError", "ScenarioError",
           "StageError", "UnboundedError", "bundled_scenario", "load_scenario", "save_scenario",
           "validate_schedule"]
