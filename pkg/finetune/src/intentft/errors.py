class IntentFtError(Exception):
    """Base class for trainer errors."""


class DataFormatError(IntentFtError):
    """Malformed training or inference record."""


class DivergenceDetected(IntentFtError):
    """Training loss became non-finite."""


class MissingAdapter(IntentFtError):
    """Inference requested without a trained adapter artifact."""
