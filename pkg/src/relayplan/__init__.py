"""Trajectory planning and power allocation for an aerial AF relay serving two vehicles."""

from relayplan.scenario import Scenario, default_scenario, load_scenario

__all__ = ["Scenario", "default_scenario", "load_scenario"]
__version__ = "0.1.0"
