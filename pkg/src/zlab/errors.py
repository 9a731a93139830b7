"""Exception hierarchy shared by all modules.

Each exception carries the CLI exit code it maps to, so the harness can
translate failures without inspecting messages.
"""

from __future__ import annotations


class ZlabError(Exception):
    """Base class for every error raised by the package."""

    exit_code = 3


class InputError(ZlabError, ValueError):
    """Malformed operator, grid, or argument."""

    exit_code = 2


class ConfigError(InputError):
    """Experiment configuration failed schema or consistency checks."""


class ScheduleError(InputError):
    """Weight row is not normalized, not positive, or out of range."""


class StructureError(ZlabError):
    """Operator is not block diagonal with respect to the decomposition."""


class IsometryError(ZlabError):
    """The isometric block is not unitary."""


class ContractionError(ZlabError):
    """The contractive block is not strictly contractive."""


class DiagonalizabilityError(ZlabError):
    """Matrix has no basis of eigenvectors within tolerance."""


class PreconditionError(ZlabError):
    """A dominating function or other hypothesis of a bound does not hold."""


class UnsupportedRepresentationError(InputError):
    """Operation needs a generator representation it was not given."""


class LimitUnavailableError(ZlabError):
    """An ergodic mean could not be certified, so the limit is undefined."""


class StepBudgetError(ZlabError):
    """Requested integrator step count exceeds the configured cap."""


class InvariantError(ZlabError):
    """A computed bound failed to dominate its measured quantity."""

    exit_code = 1
