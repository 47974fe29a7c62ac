"""AMR graphs and the PENMAN notation.

An AMR is stored as a flat, immutable record of nodes and role-labelled
edges. Attribute constants (numbers, quoted strings, ``-``/``+``) are leaf
nodes whose concept is the literal itself and whose id is synthetic, so
every traversal can treat constants and concepts the same way.

    >>> g = parse_penman("(b / belong-01 :ARG0 (i / i) :ARG1 (d / dog))")
    >>> [n.concept for n in g.nodes]
    ['belong-01', 'i', 'dog']
    >>> serialize_penman(g)
    '(b / belong-01 :ARG0 (i / i) :ARG1 (d / dog))'
"""

from __future__ import annotations

import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import networkx as nx

from .errors import DataError

__all__ = [
    "Node",
    "Edge",
    "AmrGraph",
    "Violation",
    "PenmanError",
    "UnbalancedParens",
    "DuplicateVariable",
    "DanglingReference",
    "EmptyInput",
    "UnexpectedToken",
    "parse_penman",
    "serialize_penman",
    "validate",
    "isomorphic",
    "read_penman",
    "iter_penman_blocks",
    "write_penman",
]

ROLE_RE = re.compile(r"^:[A-Za-z0-9-]+$")
# Bare symbols shaped like conventional AMR variables (d, b2, x31). An
# undefined symbol of this shape is a dangling reference, anything else
# (imperative, expressive, ...) is read as a symbolic constant.
_VARIABLE_SHAPE = re.compile(r"^[a-z][0-9]*$")
_NUMBER_RE = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")
_META_RE = re.compile(r"::(\S+)[ \t]*((?:(?!\s::).)*)")
_TOKEN_RE = re.compile(
    r"""
    (?P<lparen>\()
  | (?P<rparen>\))
  | (?P<string>"(?:[^"\\]|\\.)*")
  | (?P<role>:[^\s()"]*)
  | (?P<slash>/)
  | (?P<symbol>[^\s()/"]+)
  | (?P<bad>")
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Node:
    id: str
    concept: str
    attribute: bool = False


@dataclass(frozen=True)
class Edge:
    source: str
    role: str
    target: str


@dataclass(frozen=True)
class AmrGraph:
    """A rooted, role-labelled directed graph.

    ``edges`` keep the order in which they appear in the PENMAN source;
    the linearizer relies on it. ``metadata`` holds ``# ::key value``
    comment lines and is ignored by equality.
    """

    nodes: tuple[Node, ...]
    edges: tuple[Edge, ...]
    root: str
    metadata: dict[str, str] = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", tuple(self.edges))

    @property
    def id(self) -> str | None:
        return self.metadata.get("id")

    def node(self, node_id: str) -> Node:
        return self._index[node_id]

    def children(self, node_id: str) -> list[Edge]:
        return self._children.get(node_id, [])

    @property
    def _index(self) -> dict[str, Node]:
        cached = self.__dict__.get("_index_cache")
        if cached is None:
            cached = {n.id: n for n in self.nodes}
            object.__setattr__(self, "_index_cache", cached)
        return cached

    @property
    def _children(self) -> dict[str, list[Edge]]:
        cached = self.__dict__.get("_children_cache")
        if cached is None:
            cached = defaultdict(list)
            for e in self.edges:
                cached[e.source].append(e)
            cached = dict(cached)
            object.__setattr__(self, "_children_cache", cached)
        return cached

    def reentrant_nodes(self) -> set[str]:
        indegree = Counter(e.target for e in self.edges)
        return {n for n, k in indegree.items() if k > 1}


# --------------------------------------------------------------------------
# Errors


class PenmanError(DataError):
    """Parse failure; ``offset`` is the byte offset into the UTF-8 input."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class UnbalancedParens(PenmanError):
    pass


class DuplicateVariable(PenmanError):
    pass


class DanglingReference(PenmanError):
    pass


class EmptyInput(PenmanError):
    pass


class UnexpectedToken(PenmanError):
    pass


# --------------------------------------------------------------------------
# Parsing


@dataclass
class _Tok:
    kind: str
    text: str
    offset: int  # character offset


def _strip_metadata(text: str) -> tuple[str, dict[str, str]]:
    """Blank out comment lines (keeping offsets) and collect ``# ::`` fields."""
    metadata: dict[str, str] = {}
    out = []
    for line in text.splitlines(keepends=True):
        stripped = line.lstrip()
        if stripped.startswith("#"):
            for key, value in _META_RE.findall(stripped):
                metadata[key] = value.strip()
            out.append("".join(c if c in "\r\n" else " " for c in line))
        else:
            out.append(line)
    return "".join(out), metadata


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    for m in _TOKEN_RE.finditer(text):
        kind = m.lastgroup
        toks.append(_Tok(kind, m.group(), m.start()))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = _tokenize(text)
        self.pos = 0
        self.nodes: list[Node] = []
        self.edges: list[Edge] = []
        self.defined: dict[str, int] = {}
        # (edge index, symbol, offset) awaiting resolution once all nodes are known
        self.pending: list[tuple[int, str, int]] = []
        self.n_const = 0

    def byte_offset(self, char_offset: int) -> int:
        return len(self.text[:char_offset].encode("utf-8"))

    def fail(self, cls, message: str, char_offset: int):
        raise cls(message, self.byte_offset(char_offset))

    def peek(self) -> _Tok | None:
        return self.toks[self.pos] if self.pos < len(self.toks) else None

    def next(self) -> _Tok:
        tok = self.peek()
        if tok is None:
            self.fail(UnbalancedParens, "unexpected end of input; missing ')'", len(self.text))
        self.pos += 1
        return tok

    def parse(self) -> AmrGraph:
        first = self.peek()
        if first is None:
            self.fail(EmptyInput, "no PENMAN expression found", 0)
        if first.kind == "rparen":
            self.fail(UnbalancedParens, "unmatched ')'", first.offset)
        if first.kind != "lparen":
            self.fail(UnexpectedToken, f"expected '(' but found {first.text!r}", first.offset)
        root = self.parse_node()
        extra = self.peek()
        if extra is not None:
            cls = UnbalancedParens if extra.kind == "rparen" else UnexpectedToken
            self.fail(cls, f"trailing content {extra.text!r} after graph", extra.offset)
        for edge_index, symbol, offset in self.pending:
            if symbol not in self.defined:
                self.fail(DanglingReference, f"reference to undefined variable {symbol!r}", offset)
            e = self.edges[edge_index]
            self.edges[edge_index] = Edge(e.source, e.role, symbol)
        return AmrGraph(tuple(self.nodes), tuple(self.edges), root)

    def parse_node(self) -> str:
        self.next()  # "("
        var_tok = self.next()
        if var_tok.kind != "symbol":
            cls = UnbalancedParens if var_tok.kind == "rparen" else UnexpectedToken
            self.fail(cls, f"expected a variable but found {var_tok.text!r}", var_tok.offset)
        var = var_tok.text
        if var in self.defined:
            self.fail(DuplicateVariable, f"variable {var!r} defined twice", var_tok.offset)
        self.defined[var] = len(self.nodes)
        slash = self.next()
        if slash.kind != "slash":
            self.fail(UnexpectedToken, f"expected '/' after {var!r}", slash.offset)
        concept_tok = self.next()
        if concept_tok.kind not in ("symbol", "string"):
            self.fail(UnexpectedToken, "missing concept", concept_tok.offset)
        self.nodes.append(Node(var, concept_tok.text))

        while True:
            tok = self.next()
            if tok.kind == "rparen":
                return var
            if tok.kind != "role":
                self.fail(UnexpectedToken, f"expected a role or ')' but found {tok.text!r}", tok.offset)
            if not ROLE_RE.match(tok.text):
                self.fail(UnexpectedToken, f"malformed role {tok.text!r}", tok.offset)
            self.parse_target(var, tok.text, tok)

    def parse_target(self, source: str, role: str, role_tok: _Tok):
        tok = self.peek()
        if tok is None:
            self.next()
        if tok.kind == "lparen":
            child = self.parse_node()
            self.edges.append(Edge(source, role, child))
            return
        if tok.kind not in ("symbol", "string"):
            self.fail(UnexpectedToken, f"role {role} has no value", role_tok.offset)
        self.pos += 1
        value = tok.text
        if tok.kind == "string" or value in ("-", "+") or _NUMBER_RE.match(value):
            self._add_constant(source, role, value)
        elif value in self.defined or _VARIABLE_SHAPE.match(value):
            self.edges.append(Edge(source, role, value))
            self.pending.append((len(self.edges) - 1, value, tok.offset))
        else:
            self._add_constant(source, role, value)

    def _add_constant(self, source: str, role: str, value: str):
        self.n_const += 1
        cid = f"{source}#{self.n_const}"
        self.nodes.append(Node(cid, value, attribute=True))
        self.edges.append(Edge(source, role, cid))


def parse_penman(text: str | bytes) -> AmrGraph:
    """Parse one PENMAN expression into an :class:`AmrGraph`.

    ``# ::key value`` lines are collected into ``graph.metadata``. Bare
    symbols naming a variable defined anywhere in the expression become
    reentrant edges; forward references are allowed.
    """
    if isinstance(text, (bytes, bytearray)):
        text = bytes(text).decode("utf-8", errors="replace")
    body, metadata = _strip_metadata(text)
    try:
        graph = _Parser(body).parse()
    except RecursionError:
        raise UnexpectedToken("graph nested too deeply", 0) from None
    object.__setattr__(graph, "metadata", metadata)
    return graph


# --------------------------------------------------------------------------
# Serialization


def serialize_penman(g: AmrGraph, indent: int | None = None) -> str:
    """Render ``g`` as PENMAN; a node is expanded at its first DFS visit and
    every later mention is its bare variable.

    With ``indent`` set, each role goes on its own line.
    """
    constants = {n.id: n.concept for n in g.nodes if n.attribute}
    expanded: set[str] = set()
    out: list[str] = []

    def emit(node_id: str, depth: int):
        expanded.add(node_id)
        node = g.node(node_id)
        out.append(f"({node_id} / {node.concept}")
        for e in g.children(node_id):
            if indent is None:
                out.append(" ")
            else:
                out.append("\n" + " " * (indent * (depth + 1)))
            out.append(e.role + " ")
            if e.target in constants:
                out.append(constants[e.target])
            elif e.target in expanded:
                out.append(e.target)
            else:
                emit(e.target, depth + 1)
        out.append(")")

    emit(g.root, 0)
    return "".join(out)


# --------------------------------------------------------------------------
# Validation


@dataclass(frozen=True)
class Violation:
    kind: str  # Unreachable, DuplicateVariable, DanglingReference, MissingRoot, BadRole, EmptyConcept, ...
    node: str | None = None
    detail: str = ""


def validate(g: AmrGraph) -> list[Violation]:
    """Report every broken invariant of ``g``; an empty list means valid."""
    problems: list[Violation] = []
    ids = [n.id for n in g.nodes]
    for node_id, k in Counter(ids).items():
        if k > 1:
            problems.append(Violation("DuplicateVariable", node_id))
    known = set(ids)
    for n in g.nodes:
        if not n.concept:
            problems.append(Violation("EmptyConcept", n.id))
    if g.root not in known:
        problems.append(Violation("MissingRoot", g.root))
    indegree: Counter = Counter()
    for e in g.edges:
        for end in (e.source, e.target):
            if end not in known:
                problems.append(Violation("DanglingReference", end, f"{e.source} {e.role} {e.target}"))
        if not ROLE_RE.match(e.role):
            problems.append(Violation("BadRole", e.source, e.role))
        indegree[e.target] += 1
    attribute_ids = {n.id for n in g.nodes if n.attribute}
    for e in g.edges:
        if e.source in attribute_ids:
            problems.append(Violation("AttributeNotLeaf", e.source, e.role))
    for node_id in attribute_ids:
        if indegree[node_id] != 1:
            problems.append(Violation("AttributeIndegree", node_id, str(indegree[node_id])))

    if g.root in known:
        seen = {g.root}
        stack = [g.root]
        children = defaultdict(list)
        for e in g.edges:
            children[e.source].append(e.target)
        while stack:
            for t in children[stack.pop()]:
                if t in known and t not in seen:
                    seen.add(t)
                    stack.append(t)
        for node_id in dict.fromkeys(ids):
            if node_id not in seen:
                problems.append(Violation("Unreachable", node_id))
    return problems


# --------------------------------------------------------------------------
# Isomorphism


def _to_nx(g: AmrGraph) -> nx.MultiDiGraph:
    h = nx.MultiDiGraph()
    for n in g.nodes:
        h.add_node(n.id, label=(n.concept, n.attribute, n.id == g.root))
    for e in g.edges:
        h.add_edge(e.source, e.target, role=e.role)
    return h


def _edge_match(a: dict, b: dict) -> bool:
    # Multi-edge attribute dicts are keyed by edge key; compare role multisets.
    return Counter(d["role"] for d in a.values()) == Counter(d["role"] for d in b.values())


def isomorphic(a: AmrGraph, b: AmrGraph) -> bool:
    """True if ``a`` and ``b`` are equal up to renaming of node ids."""
    if len(a.nodes) != len(b.nodes) or len(a.edges) != len(b.edges):
        return False
    return nx.is_isomorphic(
        _to_nx(a),
        _to_nx(b),
        node_match=lambda x, y: x["label"] == y["label"],
        edge_match=_edge_match,
    )


# --------------------------------------------------------------------------
# Files


def iter_penman_blocks(text: str) -> Iterator[str]:
    """Split a sembank-style file into per-graph blocks on blank lines."""
    block: list[str] = []
    for line in text.splitlines():
        if line.strip():
            block.append(line)
        elif block:
            yield "\n".join(block)
            block = []
    if block:
        yield "\n".join(block)


def read_penman(path: str | Path) -> list[AmrGraph]:
    text = Path(path).read_text(encoding="utf-8")
    graphs = []
    for block in iter_penman_blocks(text):
        # metadata-only blocks (file headers) carry no graph
        if all(line.lstrip().startswith("#") for line in block.splitlines()):
            continue
        graphs.append(parse_penman(block))
    return graphs


def write_penman(graphs: Iterable[AmrGraph], path: str | Path) -> None:
    chunks = []
    for g in graphs:
        meta = "".join(f"# ::{k} {v}\n" for k, v in g.metadata.items())
        chunks.append(meta + serialize_penman(g, indent=4))
    Path(path).write_text("\n\n".join(chunks) + "\n", encoding="utf-8")
