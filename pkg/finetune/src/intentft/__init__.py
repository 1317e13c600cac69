"""intentft: adapter fine-tuning and confidence-scored inference for
short-query intent classification, desk-verifiable on a toy model."""

__version__ = "0.1.0"
