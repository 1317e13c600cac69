"""intentkit: weak supervision, prompted LLMs, and hybrid pipelines for
classifying short search queries into informational, navigational, and
transactional intent."""

__version__ = "0.1.0"

from .model import (  # noqa: F401
    GoldRecord,
    IntentLabel,
    LabelVote,
    Prediction,
    Provenance,
    Query,
    WeakLabel,
    normalize,
    parse_label,
)
