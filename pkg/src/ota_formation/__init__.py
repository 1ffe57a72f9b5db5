"""Formation control with over-the-air consensus and potential-field collision avoidance."""

__version__ = "0.1.0"

from .dynamics import TrajectoryRecord, simulate  # noqa: E402
from .errors import (  # noqa: E402
    ChannelError,
    ConfigError,
    GeometryError,
    InitialConditionError,
    SafetyViolation,
)
from .scenario import ScenarioConfig  # noqa: E402

__all__ = [
    "__version__",
    "ChannelError",
    "ConfigError",
    "GeometryError",
    "InitialConditionError",
    "SafetyViolation",
    "ScenarioConfig",
    "TrajectoryRecord",
    "simulate",
]
