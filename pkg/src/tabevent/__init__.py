"""Table-supervised event extraction toolkit.

Turns structured event tables plus a dependency-parsed corpus into BIO
training data, trains a two-stage BLSTM-CRF tagger, and decodes with an
exact constrained search that enforces key-argument co-occurrence.
"""

__version__ = "0.1.0"
