"""AMR-based retrofitting of multilingual sentence embeddings.

Parse and linearize AMR graphs, train an AMR encoder contrastively on
mixed-language batches, fuse its embeddings with an existing text
embedding model, and evaluate on STS and zero-shot transfer.
"""

__version__ = "0.1.0"

from .graph import AmrGraph, Edge, Node, parse_penman, serialize_penman, validate
from .linearize import LinearSeq, Scheme, delinearize, length_stats, linearize
from .integrate import Strategy, integrate

__all__ = [
    "AmrGraph",
    "Edge",
    "Node",
    "parse_penman",
    "serialize_penman",
    "validate",
    "LinearSeq",
    "Scheme",
    "linearize",
    "delinearize",
    "length_stats",
    "Strategy",
    "integrate",
]
