"""Character-level neural machine translation with a hierarchical char2word encoder."""

__version__ = "0.1.0"
