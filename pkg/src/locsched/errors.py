"""Exception types raised across the toolkit."""

from __future__ import annotations


class LocschedError(Exception):
    """Base class for all toolkit errors."""


class InvalidInputError(LocschedError):
    """Malformed input: dimension mismatch, bad config value, unknown name."""


class NonStabilizableError(LocschedError):
    """Filter covariance recursion did not converge."""


class UnreachableWaypointError(LocschedError):
    """Noise-free closed loop never reached a waypoint within the time budget."""

    def __init__(self, waypoint_index: int, message: str | None = None):
        self.waypoint_index = waypoint_index
        super().__init__(message or f"waypoint {waypoint_index} unreachable within t_max")


class AbstractionTimeoutError(LocschedError):
    """A segment trigger never fired while building the decision model."""


class ControlTimeoutError(LocschedError):
    """A simulated mission segment exceeded the per-segment time budget."""


class InvalidPolicyError(LocschedError):
    """Policy support lies outside the actions available at some state."""


class UnsupportedStructureError(LocschedError):
    """The decision model violates a structural assumption (e.g. it is cyclic)."""


class UnachievablePointError(LocschedError):
    """Requested trade-off point lies outside the achievable set.

    Carries ``nearest``: the closest achievable objective vector (Euclidean
    projection of the requested bounds onto the front).
    """

    def __init__(self, message: str, nearest):
        self.nearest = nearest
        super().__init__(message)


class ScheduleDomainError(LocschedError):
    """Schedule queried at a node it does not cover."""


class StructureError(LocschedError):
    """Internal invariant violated (e.g. a chain walk exceeding the state count)."""
