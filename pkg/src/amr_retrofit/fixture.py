"""Builders for the small bundled data sets.

``python -m amr_retrofit.fixture DIR`` regenerates the pipeline fixture
shipped in ``amr_retrofit/data/fixture``.
"""

from __future__ import annotations

import json
import sys
from importlib import resources
from itertools import product
from pathlib import Path

import numpy as np

from .contrastive import Triplet, write_triplets
from .graph import AmrGraph, Edge, Node, write_penman
from .mixer import DictionaryTranslator, TemplateParser

ANIMALS = ["dog", "cat", "bird", "horse", "fox"]
PEOPLE = ["boy", "girl", "teacher", "farmer", "doctor"]
VERBS = ["chase", "see", "help", "follow", "call"]
OBJECTS = ["ball", "tree", "river", "house", "garden"]

LEXICON = {
    "de": {"dog": "hund", "cat": "katze", "bird": "vogel", "horse": "pferd", "fox": "fuchs",
           "boy": "junge", "girl": "maedchen", "teacher": "lehrer", "farmer": "bauer",
           "doctor": "arzt", "chases": "jagt", "sees": "sieht", "helps": "hilft",
           "follows": "folgt", "calls": "ruft", "ball": "ball", "tree": "baum",
           "river": "fluss", "house": "haus", "garden": "garten", "the": "der",
           "near": "bei", "a": "ein"},
    "fr": {"dog": "chien", "cat": "chat", "bird": "oiseau", "horse": "cheval", "fox": "renard",
           "boy": "garcon", "girl": "fille", "teacher": "professeur", "farmer": "fermier",
           "doctor": "medecin", "chases": "chasse", "sees": "voit", "helps": "aide",
           "follows": "suit", "calls": "appelle", "ball": "balle", "tree": "arbre",
           "river": "riviere", "house": "maison", "garden": "jardin", "the": "le",
           "near": "pres", "a": "un"},
}


def reverse_lexicon(lexicon=LEXICON) -> dict[str, str]:
    """Foreign word -> English word, shared by every language."""
    out = {}
    for table in lexicon.values():
        for en, foreign in table.items():
            out.setdefault(foreign, en)
    return out


def fixture_dir() -> Path:
    return Path(str(resources.files("amr_retrofit") / "data" / "fixture"))


def separable_triplets(n: int = 32, seed: int = 0) -> list[Triplet]:
    """Triplets whose positive shares two tokens with the anchor and whose
    negative shares none with it."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        j = int((i + 1 + rng.integers(0, n - 1)) % n) if n > 1 else i
        out.append(Triplet(
            (f"w{i}a", f"w{i}b", f"w{i}c"),
            (f"w{i}a", f"w{i}b", f"w{i}d"),
            (f"v{j}x", f"v{j}y", f"v{j}z"),
        ))
    return out


CONCEPTS = ["want-01", "go-02", "belong-01", "boy", "girl", "dog", "city", "name", "and",
            "say-01", "think-01", "person", "i", "you", "have-org-role-91", "date-entity"]
ROLES = [":ARG0", ":ARG1", ":ARG2", ":mod", ":op1", ":op2", ":location", ":ARG0-of",
         ":time", ":poss", ":domain", ":ARG1-of"]
CONSTANTS = ["-", "+", "3", "2012", '"New"', '"York"', "imperative"]


def random_graph(rng: np.random.Generator, max_nodes: int = 20, reentrancy: float = 0.3,
                 constants: float = 0.2) -> AmrGraph:
    """A valid random AMR: a random spanning tree over concept nodes, extra
    reentrant edges (possibly cyclic) so that at most ``reentrancy`` of the
    concept nodes gain a second parent, and some constant leaves."""
    n = int(rng.integers(1, max_nodes + 1))
    n_const = int(rng.binomial(n, constants)) if n > 1 else 0
    n_concept = max(1, n - n_const)
    n_const = n - n_concept
    ids = [f"{chr(97 + int(rng.integers(0, 26)))}{k}" for k in range(n_concept)]
    nodes = [Node(v, CONCEPTS[int(rng.integers(len(CONCEPTS)))]) for v in ids]
    edges = []
    for k in range(1, n_concept):
        parent = ids[int(rng.integers(0, k))]
        edges.append(Edge(parent, ROLES[int(rng.integers(len(ROLES)))], ids[k]))
    max_extra = int(np.floor(reentrancy * n_concept))
    extra = int(rng.integers(0, max_extra + 1)) if n_concept > 1 else 0
    if extra:
        for t in rng.choice(np.arange(1, n_concept), size=min(extra, n_concept - 1), replace=False):
            src = ids[int(rng.integers(0, n_concept))]
            edges.append(Edge(src, ROLES[int(rng.integers(len(ROLES)))], ids[int(t)]))
    for c in range(n_const):
        src = ids[int(rng.integers(0, n_concept))]
        cid = f"{src}#c{c}"
        nodes.append(Node(cid, CONSTANTS[int(rng.integers(len(CONSTANTS)))], attribute=True))
        edges.append(Edge(src, ":polarity" if c % 3 == 0 else f":op{c % 3}", cid))
    order = rng.permutation(len(edges))
    return AmrGraph(tuple(nodes), tuple(edges[i] for i in order), ids[0])


def _sentences(seed: int) -> list[tuple[str, str, str, str]]:
    """50 (subject, verb, object, text) tuples, half with animal subjects."""
    rng = np.random.default_rng(seed)
    rows = []
    for subjects in (ANIMALS, PEOPLE):
        combos = list(product(subjects, VERBS, OBJECTS))
        picked = rng.choice(len(combos), size=25, replace=False)
        for k in sorted(picked):
            s, v, o = combos[k]
            rows.append((s, v, o, f"the {s} {v}s the {o}"))
    order = rng.permutation(len(rows))
    return [rows[k] for k in order]


def _gold(a, b) -> float:
    """Similarity by shared slots: subject 2, verb 1.5, object 1.5."""
    return 2.0 * (a[0] == b[0]) + 1.5 * (a[1] == b[1]) + 1.5 * (a[2] == b[2])


def build_fixture(out: str | Path, seed: int = 7) -> None:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed + 1)
    rows = _sentences(seed)
    translator = DictionaryTranslator(LEXICON)
    parser = TemplateParser(reverse_lexicon())

    sentence_lines = []
    for i, (_, _, _, text) in enumerate(rows):
        sentence_lines.append(f"s{i:02d}\ten\t{text}")
        for lang in LEXICON:
            sentence_lines.append(f"s{i:02d}@{lang}\t{lang}\t{translator.translate(text, lang)}")
    (out / "sentences.tsv").write_text("\n".join(sentence_lines) + "\n", encoding="utf-8")
    (out / "lexicon.json").write_text(json.dumps(LEXICON, indent=1, sort_keys=True) + "\n",
                                      encoding="utf-8")

    graphs = []
    for i, (_, _, _, text) in enumerate(rows):
        g = parser.parse(text)
        g.metadata.clear()
        g.metadata.update({"id": f"s{i:02d}", "snt": text})
        graphs.append(g)
    write_penman(graphs, out / "sembank.penman")

    triplets = []
    for i, (s, v, o, text) in enumerate(rows):
        positive = f"a {s} {v}s a {o}" if i % 2 else f"the {s} {v}s near the {o}"
        far = [k for k, r in enumerate(rows) if r[0] != s and r[1] != v and r[2] != o]
        negative = rows[int(rng.choice(far))][3]
        triplets.append(Triplet(text.split(), positive.split(), negative.split()))
    write_triplets(triplets, out / "triplets.jsonl")

    sts_lines = []
    groups = [("EN-EN", ""), ("EN-DE", "@de"), ("EN-FR", "@fr")]
    for group, suffix in groups:
        seen_pairs = set()
        while len(seen_pairs) < 40:
            i, j = (int(x) for x in rng.choice(len(rows), size=2, replace=False))
            if (i, j) in seen_pairs:
                continue
            seen_pairs.add((i, j))
            sts_lines.append(f"s{i:02d}\ts{j:02d}{suffix}\t{_gold(rows[i], rows[j]):.1f}\t{group}")
    (out / "sts.tsv").write_text("\n".join(sts_lines) + "\n", encoding="utf-8")

    # animal vs person subject; English train, dev/test in every language
    split_of = ["train"] * 30 + ["dev"] * 10 + ["test"] * 10
    records = []
    for i, (s, _, _, text) in enumerate(rows):
        label = int(s in PEOPLE)
        split = split_of[i]
        records.append({"text": text, "label": label, "lang": "en", "split": split})
        if split != "train":
            for lang in LEXICON:
                records.append({"text": translator.translate(text, lang), "label": label,
                                "lang": lang, "split": split})
    with open(out / "transfer.jsonl", "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r, ensure_ascii=False) + "\n")

    write_triplets(separable_triplets(), out / "separable.jsonl")

    config = {
        "seed": seed,
        "paths": {
            "sembank": "sembank.penman",
            "triplets": "triplets.jsonl",
            "sentences": "sentences.tsv",
            "lexicon": "lexicon.json",
            "sts": "sts.tsv",
            "transfer": ["transfer.jsonl"],
        },
        "vocab": {"threshold": 5},
        "encoder": {"dim": 32, "hidden": 32},
        "text_encoder": {"dim": 32},
        "train": {"temperature": 0.05, "learning_rate": 0.5},
        "mixer": {"languages": {"en": 0.5, "de": 0.5}, "text_threshold": 0.5,
                  "max_steps": 150, "batch_size": 16},
        "integration": "norm-concat",
        "tasks": ["sts", "transfer"],
    }
    (out / "config.json").write_text(json.dumps(config, indent=2) + "\n", encoding="utf-8")


if __name__ == "__main__":
    build_fixture(sys.argv[1] if len(sys.argv) > 1 else fixture_dir())
