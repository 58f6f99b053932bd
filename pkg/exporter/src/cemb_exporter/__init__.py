"""CEMB exporter: pretrained transformers in feature-extraction mode.

Reads a newline-delimited JSON corpus, runs a named transformer over each
sentence, pools sub-word pieces back to word-level vectors, and writes a
canonical CEMB v1 embedding file.
"""

__version__ = "0.1.0"
