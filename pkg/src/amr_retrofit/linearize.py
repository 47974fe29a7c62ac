"""Depth-first linearization of AMR graphs into flat token sequences."""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError, EmptyCorpus
from .graph import AmrGraph, Edge, Node

__all__ = [
    "Scheme",
    "LinearSeq",
    "MalformedSequence",
    "linearize",
    "delinearize",
    "LengthStats",
    "length_stats",
]

_POINTER_RE = re.compile(r"^<R\d+>$")


class Scheme(str, enum.Enum):
    VARIABLE_FREE = "free"
    VARIABLE_ANNOTATED = "annotated"


class MalformedSequence(DataError):
    pass


@dataclass(frozen=True)
class LinearSeq:
    tokens: tuple[str, ...]
    scheme: Scheme = Scheme.VARIABLE_FREE
    source_graph_id: str | None = None

    def __str__(self) -> str:
        return " ".join(self.tokens)

    def __len__(self) -> int:
        return len(self.tokens)


def linearize(g: AmrGraph, scheme: Scheme | str = Scheme.VARIABLE_FREE) -> LinearSeq:
    """Flatten ``g`` by a DFS from the root, children in source edge order.

    Every concept node becomes ``( concept <children> )`` and every edge
    contributes its role token ahead of the child; constants are emitted
    as bare literals. A node reached again is expanded again (its subtree
    is repeated), except when it is already on the DFS stack, where only
    ``( concept )`` is emitted so that cycles terminate.

    Under ``VARIABLE_ANNOTATED`` each node occurrence additionally carries
    a ``<Rn>`` pointer token right after its opening parenthesis, numbered
    by first visit, so repeated occurrences can be matched back together.

    >>> from amr_retrofit.graph import parse_penman
    >>> g = parse_penman("(w / want-01 :ARG0 (b / boy) :ARG1 (g / go-01 :ARG0 b))")
    >>> str(linearize(g))
    '( want-01 :ARG0 ( boy ) :ARG1 ( go-01 :ARG0 ( boy ) ) )'
    """
    scheme = Scheme(scheme)
    annotated = scheme is Scheme.VARIABLE_ANNOTATED
    pointers: dict[str, str] = {}
    on_stack: set[str] = set()
    out: list[str] = []

    def visit(node_id: str):
        node = g.node(node_id)
        if node.attribute:
            out.append(node.concept)
            return
        out.append("(")
        if annotated:
            out.append(pointers.setdefault(node_id, f"<R{len(pointers)}>"))
        out.append(node.concept)
        if node_id not in on_stack:
            on_stack.add(node_id)
            for e in g.children(node_id):
                out.append(e.role)
                visit(e.target)
            on_stack.discard(node_id)
        out.append(")")

    visit(g.root)
    return LinearSeq(tuple(out), scheme, g.id)


def delinearize(seq: LinearSeq | Sequence[str] | str) -> AmrGraph:
    """Rebuild the DFS expansion tree of a variable-free sequence.

    Reentrancies cannot be recovered, so repeated subtrees come back as
    separate nodes with fresh variables ``n0, n1, ...``.
    """
    if isinstance(seq, LinearSeq):
        if seq.scheme is not Scheme.VARIABLE_FREE:
            raise MalformedSequence("only variable-free sequences can be delinearized")
        tokens = list(seq.tokens)
    elif isinstance(seq, str):
        tokens = seq.split()
    else:
        tokens = list(seq)

    nodes: list[Node] = []
    edges: list[Edge] = []
    pos = 0

    def take(i: int) -> str:
        if i >= len(tokens):
            raise MalformedSequence("sequence ends inside a node (unbalanced parentheses)")
        return tokens[i]

    def node_at(i: int) -> tuple[str, int]:
        if take(i) != "(":
            raise MalformedSequence(f"expected '(' at position {i}, found {tokens[i]!r}")
        concept = take(i + 1)
        if concept in ("(", ")") or concept.startswith(":") or _POINTER_RE.match(concept):
            raise MalformedSequence(f"missing concept at position {i + 1}")
        node_id = f"n{len(nodes)}"
        nodes.append(Node(node_id, concept))
        i += 2
        n_const = 0
        while True:
            tok = take(i)
            if tok == ")":
                return node_id, i + 1
            if not tok.startswith(":"):
                raise MalformedSequence(f"expected a role or ')' at position {i}, found {tok!r}")
            child_tok = take(i + 1)
            if child_tok == "(":
                child, i = node_at(i + 1)
            elif child_tok == ")" or child_tok.startswith(":") or _POINTER_RE.match(child_tok):
                raise MalformedSequence(f"role {tok} at position {i} has no child")
            else:
                n_const += 1
                child = f"{node_id}#{n_const}"
                nodes.append(Node(child, child_tok, attribute=True))
                i += 2
            edges.append(Edge(node_id, tok, child))

    if not tokens:
        raise MalformedSequence("empty sequence")
    root, pos = node_at(0)
    if pos != len(tokens):
        raise MalformedSequence(f"trailing tokens after position {pos} (unbalanced parentheses)")
    return AmrGraph(tuple(nodes), tuple(edges), root)


@dataclass(frozen=True)
class LengthStats:
    free: tuple[int, ...]
    annotated: tuple[int, ...]

    @property
    def ratios(self) -> np.ndarray:
        return np.asarray(self.annotated, dtype=float) / np.asarray(self.free, dtype=float)

    @property
    def mean_free(self) -> float:
        return float(np.mean(self.free))

    @property
    def mean_annotated(self) -> float:
        return float(np.mean(self.annotated))

    @property
    def mean_ratio(self) -> float:
        return float(np.mean(self.ratios))

    def as_dict(self) -> dict:
        return {
            "graphs": len(self.free),
            "mean_free": self.mean_free,
            "mean_annotated": self.mean_annotated,
            "mean_ratio": self.mean_ratio,
            "all_free_shorter": bool(all(f < a for f, a in zip(self.free, self.annotated))),
        }


def length_stats(corpus: Iterable[AmrGraph]) -> LengthStats:
    free, annotated = [], []
    for g in corpus:
        free.append(len(linearize(g, Scheme.VARIABLE_FREE)))
        annotated.append(len(linearize(g, Scheme.VARIABLE_ANNOTATED)))
    if not free:
        raise EmptyCorpus("length statistics need at least one graph")
    return LengthStats(tuple(free), tuple(annotated))
