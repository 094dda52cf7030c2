"""Streaming phoneme decoding engine: masked causal Transformer, CTC,
n-gram-fused prefix beam search, and single-step test-time adaptation."""

__version__ = "0.1.0"
