"""Deterministic microcontroller compartmentalization simulator.

Models an MPU-protected microkernel, a bus-master DMA controller that
bypasses the MPU, a trusted DMA service enforcing a capability policy,
and the exposure/cost metrics used to compare protection modes.
"""

__version__ = "0.1.0"

from .scenario import load_scenario, load_scenario_file  # noqa: E402
from .simulator import (  # noqa: E402
    check_scenario,
    metrics_scenario,
    run_scenario,
)

__all__ = [
    "__version__",
    "load_scenario",
    "load_scenario_file",
    "run_scenario",
    "check_scenario",
    "metrics_scenario",
]
