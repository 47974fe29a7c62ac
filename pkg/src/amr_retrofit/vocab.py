"""Vocabulary extension for AMR symbols and a fallback sub-token tokenizer.

The base vocabulary is a character/byte fallback inventory, optionally
seeded with word pieces harvested from a corpus. Frequent relation and
frame names are added on top as whole tokens so they no longer split into
pieces like ``belong``, ``-``, ``01``.

Continuation pieces carry a ``##`` prefix, which makes every id sequence
decodable back into the original whitespace tokens.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import DataError, EmptyCorpus
from .graph import AmrGraph
from .linearize import LinearSeq

FRAME_RE = re.compile(r"^.+-[0-9]{2,3}$")
_PIECE_RE = re.compile(r"[^\W\d_]+|\d+|.", re.UNICODE | re.DOTALL)
_BYTE_RE = re.compile(r"^(?:##)?<0x([0-9A-F]{2})>$")

PAD, UNK = "[PAD]", "[UNK]"
SPECIALS = (PAD, UNK)


def is_frame(concept: str) -> bool:
    return bool(FRAME_RE.match(concept))


def count_symbols(corpus: Iterable[AmrGraph]) -> Counter:
    """Count role labels and frame concepts, once per occurrence."""
    counts: Counter = Counter()
    n = 0
    for g in corpus:
        n += 1
        for node in g.nodes:
            if not node.attribute and is_frame(node.concept):
                counts[node.concept] += 1
        for e in g.edges:
            counts[e.role] += 1
    if n == 0:
        raise EmptyCorpus("cannot count symbols of an empty corpus")
    return counts


def segment(token: str) -> list[str]:
    """Split a token into letter runs, digit runs and single other characters.

    >>> segment("belong-01")
    ['belong', '-', '01']
    """
    return _PIECE_RE.findall(token)


def base_vocabulary(pieces: Iterable[str] = ()) -> dict[str, int]:
    """Character and byte fallback inventory plus optional word pieces.

    Every printable ASCII character and every byte value exists both as a
    word-initial and a ``##`` continuation entry, so any string can be
    encoded.
    """
    entries: list[str] = list(SPECIALS)
    for code in range(33, 127):
        entries += [chr(code), "##" + chr(code)]
    for b in range(256):
        entries += [f"<0x{b:02X}>", f"##<0x{b:02X}>"]
    for p in sorted(set(pieces)):
        entries += [p, "##" + p]
    return {tok: i for i, tok in enumerate(dict.fromkeys(entries))}


def corpus_pieces(sequences: Iterable[Sequence[str]], min_count: int = 1) -> list[str]:
    """Word pieces occurring at least ``min_count`` times in ``sequences``."""
    counts: Counter = Counter()
    for seq in sequences:
        for tok in seq:
            counts.update(segment(tok))
    return sorted(p for p, c in counts.items() if c >= min_count and len(p) > 1)


@dataclass(frozen=True)
class Vocabulary:
    base: Mapping[str, int]
    extensions: Mapping[str, int] = field(default_factory=dict)
    threshold: int = 5

    def __post_init__(self):
        object.__setattr__(self, "_lookup", {**self.base, **self.extensions})
        object.__setattr__(self, "_reverse", {i: t for t, i in self._lookup.items()})
        if len(self._reverse) != len(self._lookup):
            raise DataError("vocabulary ids are not unique")

    def __len__(self) -> int:
        return len(self._lookup)

    def __contains__(self, token: str) -> bool:
        return token in self._lookup

    def id(self, token: str) -> int:
        return self._lookup[token]

    def token(self, idx: int) -> str:
        return self._reverse[idx]

    @property
    def size(self) -> int:
        return max(self._reverse) + 1 if self._reverse else 0


def build_vocab(counts: Mapping[str, int], base: Mapping[str, int] | None = None,
                threshold: int = 5) -> Vocabulary:
    """Add every counted symbol seen at least ``threshold`` times and not
    already in ``base``; new ids follow the base ids contiguously, most
    frequent first."""
    if threshold < 1:
        raise ValueError("threshold must be >= 1")
    base = dict(base if base is not None else base_vocabulary())
    start = max(base.values()) + 1 if base else 0
    chosen = [s for s, c in counts.items() if c >= threshold and s not in base]
    chosen.sort(key=lambda s: (-counts[s], s))
    extensions = {s: start + k for k, s in enumerate(chosen)}
    return Vocabulary(base, extensions, threshold)


def _encode_word(word: str, v: Vocabulary) -> list[int]:
    if word in v and not word.startswith("##") and not _BYTE_RE.match(word):
        return [v.id(word)]
    ids: list[int] = []
    first = True
    for piece in segment(word):
        key = piece if first else "##" + piece
        if key in v:
            ids.append(v.id(key))
        else:
            for ch in piece:
                key = ch if first else "##" + ch
                if key in v:
                    ids.append(v.id(key))
                else:
                    for b in ch.encode("utf-8"):
                        ids.append(v.id(f"<0x{b:02X}>" if first else f"##<0x{b:02X}>"))
                        first = False
                first = False
        first = False
    return ids


def tokenize(seq: LinearSeq | Sequence[str], v: Vocabulary) -> list[int]:
    tokens = seq.tokens if isinstance(seq, LinearSeq) else seq
    ids: list[int] = []
    for word in tokens:
        ids.extend(_encode_word(word, v))
    return ids


def detokenize(ids: Sequence[int], v: Vocabulary) -> list[str]:
    words: list[bytearray] = []
    for i in ids:
        tok = v.token(i)
        cont = tok.startswith("##") and len(tok) > 2
        m = _BYTE_RE.match(tok)
        raw = bytes([int(m.group(1), 16)]) if m else (tok[2:] if cont else tok).encode("utf-8")
        if cont and words:
            words[-1] += raw
        else:
            words.append(bytearray(raw))
    return [w.decode("utf-8") for w in words]


def save_vocab(v: Vocabulary, path: str | Path, config_hash: str | None = None) -> None:
    header = f"# threshold={v.threshold} base_size={len(v.base)}"
    if config_hash:
        header += f" config={config_hash}"
    lines = [header]
    for tok, i in sorted({**v.base, **v.extensions}.items(), key=lambda kv: kv[1]):
        lines.append(f"{tok}\t{i}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_vocab_config(path: str | Path) -> str | None:
    """Config hash recorded in a vocabulary file header, if any."""
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
    if not first.startswith("# threshold="):
        return None
    return dict(kv.split("=", 1) for kv in first[2:].split()).get("config")


def load_vocab(path: str | Path) -> Vocabulary:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    threshold, base_size = 5, None
    entries: list[tuple[str, int]] = []
    for lineno, line in enumerate(lines, 1):
        if not line:
            continue
        if line.startswith("# threshold="):
            fields = dict(kv.split("=", 1) for kv in line[2:].split())
            threshold, base_size = int(fields["threshold"]), int(fields["base_size"])
            continue
        tok, sep, idx = line.rpartition("\t")
        if not sep:
            raise DataError(f"{path}:{lineno}: expected 'token<TAB>id'")
        entries.append((tok, int(idx)))
    if base_size is None:
        base_size = len(entries)
    return Vocabulary(dict(entries[:base_size]), dict(entries[base_size:]), threshold)
