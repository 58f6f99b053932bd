"""Causal relation extraction toolkit.

C/E/O sequence taggers (bidirectional GRU/LSTM encoders with linear or CRF
decoders over precomputed contextual embeddings), token- and phrase-level
evaluation, and transfer experiment drivers.
"""

__version__ = "0.1.0"
