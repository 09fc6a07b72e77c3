"""Sparsity-gated recurrent networks: Gated LSTM, Gated Stacked LSTM and Hierarchical Gated LSTM."""

__version__ = "0.1.0"
