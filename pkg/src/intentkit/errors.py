"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: usage errors exit 1, DataError
subclasses exit 2, TransportError subclasses exit 3.
"""


class IntentKitError(Exception):
    """Base class for all toolkit errors."""


class DataError(IntentKitError):
    """Invalid or inconsistent data."""


class EmptyQuery(DataError):
    """Query text is empty after normalization."""


class QueryTooLong(DataError):
    """Query text exceeds the defensive length bound."""


class OutOfVocabularyLabel(DataError):
    """A string outside the closed intent label set, kept for reporting."""

    def __init__(self, raw: str):
        super().__init__(f"not an intent label: {raw!r}")
        self.raw = raw


class DuplicateGoldQuery(DataError):
    """A gold set contains the same query text twice."""


class DataFormatError(DataError):
    """Malformed record or file."""


class ConfigError(DataError):
    """Invalid configuration file or value."""


class MissingBank(DataError):
    """A few-shot scenario was rendered without an example bank."""


class InvalidBank(DataError):
    """Few-shot bank violates the 5-examples-per-category invariant."""


class InsufficientClass(DataError):
    """A class has fewer records than a sampling step requires."""

    def __init__(self, label, have: int, need: int):
        super().__init__(f"class {getattr(label, 'value', label)}: have {have}, need {need}")
        self.label = label
        self.have = have
        self.need = need


class OverlapDetected(DataError):
    """Two dataset parts that must be disjoint share a query id."""


class DuplicatePrediction(DataError):
    """More than one prediction for the same gold query id."""


class EmptyGold(DataError):
    """Scoring was attempted against an empty gold set."""


class MisalignedInputs(DataError):
    """Paired systems do not cover the same query ids."""


class InvalidPolicy(DataError):
    """Hybrid policy parameters are inconsistent with its mode."""


class TransportError(IntentKitError):
    """Remote endpoint failure."""


class AuthError(TransportError):
    """Authentication or authorization rejected; never retried."""


class RateLimited(TransportError):
    """HTTP 429 persisted through all retries."""


class Timeout(TransportError):
    """Request deadline exceeded through all retries."""


class MalformedResponse(TransportError):
    """Endpoint reply could not be used (unparseable body or rejected request)."""
