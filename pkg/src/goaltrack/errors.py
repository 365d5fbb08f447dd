"""Exception taxonomy shared across the package.

Every error raised by goaltrack derives from :class:`GoalTrackError` so
callers can catch the whole family at service boundaries.
"""

from __future__ import annotations


class GoalTrackError(Exception):
    """Base class for all goaltrack errors."""


# --- goal model ---------------------------------------------------------


class EmptyGoalText(GoalTrackError):
    pass


class UnknownGoal(GoalTrackError):
    pass


class GoalNotActive(GoalTrackError):
    pass


class GoalAlreadyActive(GoalTrackError):
    pass


class UnknownGoalType(GoalTrackError):
    pass


class UnknownCategory(GoalTrackError):
    pass


class IndexOutOfRange(GoalTrackError):
    pass


class DoubleConsumption(GoalTrackError):
    pass


class DuplicateEvaluation(GoalTrackError):
    pass


class InvalidOperationName(GoalTrackError):
    pass


# --- backends -----------------------------------------------------------


class BackendError(GoalTrackError):
    pass


class ProviderUnreachable(BackendError):
    pass


class ProviderTimeout(BackendError):
    pass


class ProviderRefusal(BackendError):
    """Provider answered with a non-2xx semantic failure."""

    def __init__(self, message: str, status_code: int | None = None):
        super().__init__(message)
        self.status_code = status_code


class MalformedOutput(BackendError):
    """Structured completion never produced valid JSON; carries the raw text."""

    def __init__(self, message: str, raw_text: str = ""):
        super().__init__(message)
        self.raw_text = raw_text


class DimensionMismatch(BackendError):
    pass


class MissingScriptEntry(BackendError):
    """A scripted mock was asked for a key it does not have."""


# --- configuration ------------------------------------------------------


class InvalidConfig(GoalTrackError):
    pass


# --- session store ------------------------------------------------------


class StorageFailure(GoalTrackError):
    pass


class TurnOutOfRange(GoalTrackError):
    pass


class MalformedTranscript(GoalTrackError):
    def __init__(self, message: str, line_number: int):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class TurnInFlight(GoalTrackError):
    """A turn is currently executing for this session."""


class UnknownSession(GoalTrackError):
    pass


# --- text analysis ------------------------------------------------------


class InsufficientSentences(GoalTrackError):
    pass


# --- statistics ---------------------------------------------------------


class NoEvaluations(GoalTrackError):
    pass
