"""Label-attention text classification: encoder, cross-attention, training, CLI."""

__version__ = "0.1.0"
