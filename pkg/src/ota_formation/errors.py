"""Exception types raised across the simulator."""

from __future__ import annotations


class GeometryError(ValueError):
    """Invalid geometric input (non-finite coordinates, nonpositive distance)."""


class SafetyViolation(RuntimeError):
    """Two agents came within the safety radius."""

    def __init__(self, i: int, j: int, distance: float, time: float | None = None):
        self.i = i
        self.j = j
        self.distance = distance
        self.time = time
        where = "" if time is None else f" at t={time:.6g}s"
        super().__init__(
            f"agents {i} and {j} are {distance:.6g} apart{where}, "
            "inside the safety radius"
        )

    def __reduce__(self):
        return (type(self), (self.i, self.j, self.distance, self.time))


class InitialConditionError(ValueError):
    """Initial positions are not all outside each other's critical radius."""


class ChannelError(RuntimeError):
    """A fading realization produced a nonpositive normalizer."""


class ConfigError(ValueError):
    """A scenario config failed to parse or validate.

    ``problem`` is the location-free part of the message, so the same defect
    reported from a file and from a ``--set`` override compares equal.
    """

    def __init__(self, problem: str, source: str = "<config>", line: int | None = None,
                 key: str | None = None):
        self.problem = problem
        self.source = source
        self.line = line
        self.key = key
        loc = source if line is None else f"{source}:{line}"
        super().__init__(f"{loc}: {problem}")
