"""Mixed-language, mixed text/graph batch construction.

Each sentence of a training batch independently draws a language. A
non-English draw replaces the sentence by the linearized parse of its
translation; an English draw keeps the raw English text half of the time
and otherwise uses the linearized parse of the English sentence.

Translator and parser are pluggable. Built-in stubs make the sampling
behaviour testable without neural systems, and the subprocess adapters
talk to external tools line by line over stdio.
"""

from __future__ import annotations

import bisect
import json
import logging
import re
import subprocess
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Protocol, Sequence

import numpy as np

from .contrastive import TrainConfig, Triplet, loss_gradient, sgd_step
from .encoder import Encoder
from .errors import DataError
from .graph import AmrGraph, Edge, Node, parse_penman
from .linearize import Scheme, linearize

log = logging.getLogger(__name__)

DEFAULT_LANGUAGES = ("en", "de", "es", "it", "zh", "fr", "ar")
TEXT, GRAPH = "text", "graph"
_SCALE = 1 << 32


class Translator(Protocol):
    def translate(self, sentence: str, lang: str) -> str: ...


class Parser(Protocol):
    def parse(self, sentence: str) -> AmrGraph: ...


@dataclass(frozen=True)
class MixerConfig:
    languages: Mapping[str, float] = field(
        default_factory=lambda: {lang: 1 / len(DEFAULT_LANGUAGES) for lang in DEFAULT_LANGUAGES})
    text_threshold: float = 0.5
    seed: int = 0
    max_steps: int = 100
    batch_size: int = 32
    # test-only escape hatch for single-language forced-branch configurations
    require_english: bool = True

    def __post_init__(self):
        weights = dict(self.languages)
        if not weights:
            raise ValueError("language set is empty")
        if any(not w > 0 for w in weights.values()):
            raise ValueError("language weights must be positive")
        if abs(sum(weights.values()) - 1.0) > 1e-9:
            raise ValueError("language weights must sum to 1")
        if self.require_english and "en" not in weights:
            raise ValueError("the language set must contain 'en'")
        if self.batch_size < 1 or self.max_steps < 0:
            raise ValueError("batch size must be >= 1 and max steps >= 0")
        object.__setattr__(self, "languages", weights)
        # integer cut points so the language draw never compares floats
        cum = np.cumsum(list(weights.values()))
        cuts = [int(round(c * _SCALE)) for c in cum]
        cuts[-1] = _SCALE
        object.__setattr__(self, "_cuts", cuts)
        object.__setattr__(self, "_names", list(weights))

    @classmethod
    def uniform(cls, languages: Sequence[str] = DEFAULT_LANGUAGES, **kwargs) -> "MixerConfig":
        return cls(languages={lang: 1 / len(languages) for lang in languages}, **kwargs)

    def draw_language(self, rng: np.random.Generator) -> str:
        u = int(rng.integers(0, _SCALE))
        return self._names[bisect.bisect_right(self._cuts, u)]


@dataclass(frozen=True)
class MixedItem:
    tokens: tuple[str, ...]
    kind: str
    language: str
    drawn: str = "en"          # language drawn before any fallback
    q: float | None = None     # text/graph factor, drawn only for English
    fallback: bool = False

    def __post_init__(self):
        if self.kind == TEXT and self.language != "en":
            raise DataError("text items must be English")

    def as_json(self) -> str:
        return json.dumps({"kind": self.kind, "lang": self.language, "tokens": list(self.tokens)},
                          ensure_ascii=False)


@dataclass(frozen=True)
class MixedTriplet:
    anchor: MixedItem
    positive: MixedItem
    negative: MixedItem

    def items(self) -> tuple[MixedItem, MixedItem, MixedItem]:
        return self.anchor, self.positive, self.negative

    def as_triplet(self) -> Triplet:
        return Triplet(self.anchor.tokens, self.positive.tokens, self.negative.tokens,
                       self.anchor.language)


class GraphCache:
    """Linearized parses keyed by ``(sentence, language)``."""

    def __init__(self):
        self._store: dict[tuple[str, str], tuple[str, ...]] = {}

    def get(self, sentence: str, lang: str, translator: Translator, parser: Parser) -> tuple[str, ...]:
        key = (sentence, lang)
        hit = self._store.get(key)
        if hit is None:
            source = sentence if lang == "en" else translator.translate(sentence, lang)
            hit = linearize(parser.parse(source), Scheme.VARIABLE_FREE).tokens
            self._store[key] = hit
        return hit

    def __len__(self) -> int:
        return len(self._store)


def _sentence(x: str | Sequence[str]) -> str:
    return x if isinstance(x, str) else " ".join(x)


def mix_example(x: str | Sequence[str], config: MixerConfig, translator: Translator, parser: Parser,
                rng: np.random.Generator, cache: GraphCache | None = None) -> MixedItem:
    sentence = _sentence(x)
    if not sentence.strip():
        raise DataError("cannot mix an empty sentence")
    lang = config.draw_language(rng)
    q = None
    if lang == "en":
        q = float(rng.random())
        if not q > config.text_threshold:
            return MixedItem(tuple(sentence.split()), TEXT, "en", "en", q)
    try:
        if cache is not None:
            tokens = cache.get(sentence, lang, translator, parser)
        else:
            source = sentence if lang == "en" else translator.translate(sentence, lang)
            tokens = linearize(parser.parse(source), Scheme.VARIABLE_FREE).tokens
    except Exception as exc:  # any external failure falls back to English text
        log.warning("translate/parse failed for %r (%s); using English text", sentence, exc)
        return MixedItem(tuple(sentence.split()), TEXT, "en", lang, q, fallback=True)
    return MixedItem(tuple(tokens), GRAPH, lang, lang, q)


def item_rng(base: int, index: int, slot: int) -> np.random.Generator:
    return np.random.default_rng([base, index, slot])


def mix_batch(batch: Sequence[Triplet], config: MixerConfig, translator: Translator, parser: Parser,
              rng: np.random.Generator, cache: GraphCache | None = None) -> list[MixedTriplet]:
    """Mix every sentence occurrence of ``batch`` independently.

    One integer is drawn from ``rng`` and each (triplet, slot) pair gets its
    own generator derived from it, so results do not depend on evaluation
    order.
    """
    if not batch:
        return []
    base = int(rng.integers(0, 2**63))
    out = []
    for i, t in enumerate(batch):
        items = [mix_example(seq, config, translator, parser, item_rng(base, i, slot), cache)
                 for slot, seq in enumerate((t.anchor, t.positive, t.negative))]
        out.append(MixedTriplet(*items))
    return out


@dataclass
class MixedTrainResult:
    encoder: Encoder
    losses: list[float] = field(default_factory=list)


def run_mixed_training(dataset: Sequence[Triplet], config: MixerConfig, translator: Translator,
                       parser: Parser, encoder: Encoder, train_config: TrainConfig | None = None,
                       cache: GraphCache | None = None) -> MixedTrainResult:
    """``config.max_steps`` rounds of sample batch -> mix -> loss -> SGD update."""
    if not dataset:
        raise DataError("training set is empty")
    train_config = train_config or TrainConfig()
    cache = cache if cache is not None else GraphCache()
    result = MixedTrainResult(encoder)
    m = min(config.batch_size, len(dataset))
    for step in range(config.max_steps):
        step_rng = np.random.default_rng([config.seed, step])
        idx = step_rng.choice(len(dataset), size=m, replace=False)
        mixed = mix_batch([dataset[i] for i in idx], config, translator, parser, step_rng, cache)
        loss, grad = loss_gradient([t.as_triplet() for t in mixed], encoder, train_config.temperature)
        sgd_step(encoder, grad, train_config.learning_rate)
        result.losses.append(loss)
    return result


# --------------------------------------------------------------------------
# Desk-scale stubs

STOPWORDS = frozenset(
    "a an the is are was were be been being to of in on at by for with and or but "
    "that this these those it its he she they we you i his her their our your "
    "do does did not no as from into than then there here".split()
)
_LANG_PREFIX = re.compile(r"^[a-z]{2}:")
_CLEAN = re.compile(r"[^\w-]+", re.UNICODE)


class DictionaryTranslator:
    """Word-by-word pseudo-translation: ``dog`` -> ``de:hund`` (or ``de:dog``)."""

    def __init__(self, lexicon: Mapping[str, Mapping[str, str]] | None = None):
        self.lexicon = {lang: dict(words) for lang, words in (lexicon or {}).items()}

    def translate(self, sentence: str, lang: str) -> str:
        table = self.lexicon.get(lang, {})
        return " ".join(f"{lang}:{table.get(w.lower(), w.lower())}" for w in sentence.split())


class TemplateParser:
    """Star-graph parser: the first content word becomes a ``-01`` frame at
    the root and the remaining content words hang off it as ``:ARGn``.

    Language prefixes added by :class:`DictionaryTranslator` are stripped
    and mapped back through ``reverse_lexicon``, so translations of one
    sentence parse to the same graph.
    """

    def __init__(self, reverse_lexicon: Mapping[str, str] | None = None, max_args: int = 5):
        self.reverse = dict(reverse_lexicon or {})
        self.max_args = max_args

    def content_words(self, sentence: str) -> list[str]:
        words = []
        for raw in sentence.split():
            w = _LANG_PREFIX.sub("", raw.lower())
            w = self.reverse.get(w, w)
            w = _CLEAN.sub("", w).strip("-_")
            if w:
                words.append(w)
        content = [w for w in words if w not in STOPWORDS]
        return content or words

    def parse(self, sentence: str) -> AmrGraph:
        words = self.content_words(sentence)
        if not words:
            raise DataError(f"nothing to parse in {sentence!r}")
        nodes = [Node("r", f"{words[0]}-01")]
        edges = []
        seen = {words[0]: "r"}
        for k, w in enumerate(words[1:]):
            role = f":ARG{k}" if k < self.max_args else ":mod"
            var = seen.get(w)
            if var is None:
                var = seen[w] = f"x{len(nodes)}"
                nodes.append(Node(var, w))
            edges.append(Edge("r", role, var))
        return AmrGraph(tuple(nodes), tuple(edges), "r", {"snt": sentence})


class _LineProcess:
    def __init__(self, cmd: Sequence[str]):
        self.cmd = list(cmd)
        self.proc = subprocess.Popen(self.cmd, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                                     text=True, encoding="utf-8", bufsize=1)

    def ask(self, line: str) -> str:
        if "\n" in line:
            raise DataError("request lines must not contain newlines")
        self.proc.stdin.write(line + "\n")
        self.proc.stdin.flush()
        reply = self.proc.stdout.readline()
        if not reply:
            raise DataError(f"{self.cmd[0]} closed its output")
        return reply.rstrip("\n")

    def close(self):
        if self.proc.poll() is None:
            self.proc.stdin.close()
            self.proc.wait(timeout=10)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class SubprocessTranslator(_LineProcess):
    """Sends ``lang<TAB>sentence`` per line, reads one translated line back."""

    def translate(self, sentence: str, lang: str) -> str:
        return self.ask(f"{lang}\t{sentence}")


class SubprocessParser(_LineProcess):
    """Sends one sentence per line, reads one single-line PENMAN graph back."""

    def parse(self, sentence: str) -> AmrGraph:
        return parse_penman(self.ask(sentence))


def dump_mixed(batch: Iterable[MixedTriplet]) -> str:
    return "".join(item.as_json() + "\n" for t in batch for item in t.items())
