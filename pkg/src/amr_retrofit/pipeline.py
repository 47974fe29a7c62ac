"""End-to-end run: parse -> linearize -> vocab -> mixed training -> embed ->
integrate -> evaluate, driven by one JSON config file."""

from __future__ import annotations

import copy
import hashlib
import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

import numpy as np

from .contrastive import TrainConfig, read_triplets
from .encoder import ReferenceEncoder, config_digest, read_encoder_header, save_encoder
from .errors import AmrError, DataError
from .evaluate import StsPair, read_sts_tsv, read_transfer_jsonl, sts_evaluate, transfer_evaluate
from .graph import read_penman, validate
from .integrate import Strategy, integrate
from .linearize import Scheme, length_stats, linearize
from .mixer import DictionaryTranslator, GraphCache, MixerConfig, TemplateParser, run_mixed_training
from .store import MAGIC as STORE_MAGIC, VectorStore, load_vectors
from .textenc import HashingTextEncoder
from .vocab import base_vocabulary, build_vocab, corpus_pieces, count_symbols, read_vocab_config, save_vocab

log = logging.getLogger(__name__)

DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "paths": {"text_vectors": None, "transfer": []},
    "vocab": {"threshold": 5},
    "encoder": {"dim": 64, "hidden": 64},
    "text_encoder": {"dim": 64},
    "train": {"temperature": 0.05, "learning_rate": 5e-5},
    "mixer": {"text_threshold": 0.5, "max_steps": 100, "batch_size": 32},
    "integration": "norm-concat",
    "tasks": ["sts", "transfer"],
}
REQUIRED_PATHS = ("sembank", "triplets", "sentences", "lexicon")
REPORT_NAME = "report.json"


class StageError(AmrError):
    """Wraps the first failure of a pipeline stage with the stage name."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def set_dotted(config: dict, dotted: str, value: Any) -> None:
    keys = dotted.split(".")
    node = config
    for k in keys[:-1]:
        node = node.setdefault(k, {})
    node[keys[-1]] = value


def config_hash(config: dict) -> str:
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


@dataclass
class PipelineConfig:
    raw: dict
    base_dir: Path

    @classmethod
    def load(cls, path: str | Path, overrides: dict[str, Any] | None = None) -> "PipelineConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: invalid JSON config ({exc})") from exc
        raw = _merge(DEFAULTS, raw)
        for k, v in (overrides or {}).items():
            set_dotted(raw, k, v)
        cfg = cls(raw, path.parent.resolve())
        cfg.validate()
        return cfg

    def path(self, key: str) -> Path:
        return self.base_dir / self.raw["paths"][key]

    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    @property
    def hash(self) -> str:
        return config_hash(self.raw)

    def validate(self) -> None:
        paths = self.raw.get("paths", {})
        missing = [k for k in REQUIRED_PATHS if not paths.get(k)]
        if missing:
            raise DataError(f"config lacks paths: {', '.join(missing)}")
        referenced = [self.path(k) for k in REQUIRED_PATHS]
        if "sts" in self.raw["tasks"]:
            if not paths.get("sts"):
                raise DataError("task 'sts' needs paths.sts")
            referenced.append(self.path("sts"))
        if "transfer" in self.raw["tasks"]:
            referenced += [self.base_dir / p for p in paths.get("transfer", [])]
        if paths.get("text_vectors"):
            referenced.append(self.path("text_vectors"))
        absent = [str(p) for p in referenced if not p.is_file()]
        if absent:
            raise DataError(f"config references missing files: {', '.join(absent)}")
        Strategy(self.raw["integration"])
        TrainConfig(**self.train_kwargs())
        self.mixer_config()

    def train_kwargs(self) -> dict:
        return {**self.raw["train"], "seed": self.seed}

    def mixer_config(self) -> MixerConfig:
        m = dict(self.raw["mixer"])
        langs = m.pop("languages", None)
        if langs is None:
            return MixerConfig.uniform(seed=self.seed, **m)
        if isinstance(langs, list):
            return MixerConfig.uniform(langs, seed=self.seed, **m)
        total = sum(langs.values())
        return MixerConfig(languages={k: v / total for k, v in langs.items()}, seed=self.seed, **m)


def sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _artifact_digest(path: Path) -> bytes | None:
    try:
        if path.suffix == ".amre":
            return read_encoder_header(path)["digest"]
        if path.suffix == ".tsv":
            return config_digest(read_vocab_config(path))
        data = path.read_bytes()[:32]
        if data[:4] == STORE_MAGIC:
            return data[16:32]
    except (OSError, ValueError, DataError):
        return None
    return None


def check_artifacts(out_dir: Path, digest: bytes, force: bool = False) -> None:
    """Refuse to overwrite or combine artifacts produced by another config."""
    if force or not out_dir.is_dir():
        return
    for p in sorted(out_dir.iterdir()):
        found = _artifact_digest(p)
        if found is not None and found != bytes(16) and found != digest:
            raise DataError(f"{p} was produced by a different config; use --force to overwrite")


def read_sentences(path: Path) -> list[tuple[str, str, str]]:
    rows = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise DataError(f"{path}:{lineno}: expected id<TAB>lang<TAB>text")
        rows.append((parts[0], parts[1], parts[2]))
    return rows


def _round(x):
    """Scores are rounded so reports compare byte-for-byte across platforms."""
    if isinstance(x, float):
        return round(x, 10)
    if isinstance(x, dict):
        return {k: _round(v) for k, v in x.items()}
    if isinstance(x, list):
        return [_round(v) for v in x]
    return x


def run_pipeline(config: PipelineConfig, out_dir: str | Path, force: bool = False) -> dict:
    out_dir = Path(out_dir)
    digest = config_digest(config.hash)
    check_artifacts(out_dir, digest, force)
    out_dir.mkdir(parents=True, exist_ok=True)
    raw, seed = config.raw, config.seed
    report: dict[str, Any] = {"config": raw, "config_hash": config.hash, "seed": seed, "stages": {}}
    timings: dict[str, float] = {}
    state: dict[str, Any] = {}

    def stage(name: str, fn: Callable[[], Any]):
        t0 = time.perf_counter()
        try:
            result = fn()
        except AmrError as exc:
            raise StageError(name, exc) from exc
        except (OSError, ValueError, KeyError) as exc:
            raise StageError(name, DataError(str(exc))) from exc
        timings[name] = time.perf_counter() - t0
        if result is not None:
            report["stages"][name] = result

    lexicon = json.loads(config.path("lexicon").read_text(encoding="utf-8"))
    translator = DictionaryTranslator(lexicon)
    reverse = {}
    for table in lexicon.values():
        for en, foreign in table.items():
            reverse.setdefault(foreign, en)
    parser = TemplateParser(reverse)

    def do_parse():
        graphs = read_penman(config.path("sembank"))
        for g in graphs:
            problems = validate(g)
            if problems:
                raise DataError(f"graph {g.id}: {problems[0]}")
        state["graphs"] = graphs
        return {"graphs": len(graphs), "nodes": sum(len(g.nodes) for g in graphs),
                "edges": sum(len(g.edges) for g in graphs)}

    def do_linearize():
        state["seqs"] = [linearize(g, Scheme.VARIABLE_FREE) for g in state["graphs"]]
        (out_dir / "linearized.txt").write_text(
            "".join(str(s) + "\n" for s in state["seqs"]), encoding="utf-8")
        return length_stats(state["graphs"]).as_dict()

    def do_vocab():
        state["triplets"] = read_triplets(config.path("triplets"))
        state["sentences"] = read_sentences(config.path("sentences"))
        texts = [t.anchor for t in state["triplets"]] + [t.positive for t in state["triplets"]] \
            + [t.negative for t in state["triplets"]] + [s[2].split() for s in state["sentences"]]
        pieces = corpus_pieces([s.tokens for s in state["seqs"]] + texts)
        counts = count_symbols(state["graphs"])
        vocab = build_vocab(counts, base_vocabulary(pieces), int(raw["vocab"]["threshold"]))
        save_vocab(vocab, out_dir / "vocab.tsv", config.hash)
        state["vocab"] = vocab
        return {"base": len(vocab.base), "extensions": sorted(vocab.extensions),
                "threshold": vocab.threshold}

    def do_train():
        enc = ReferenceEncoder(state["vocab"], dim=int(raw["encoder"]["dim"]),
                               hidden=int(raw["encoder"]["hidden"]), seed=seed)
        tc = TrainConfig(**config.train_kwargs())
        mc = config.mixer_config()
        cache = GraphCache()
        result = run_mixed_training(state["triplets"], mc, translator, parser, enc, tc, cache)
        save_encoder(enc, out_dir / "model.amre", config.hash)
        state["encoder"] = enc
        losses = result.losses
        k = max(1, len(losses) // 10)
        return {"steps": len(losses), "first_loss": float(np.mean(losses[:k])) if losses else None,
                "last_loss": float(np.mean(losses[-k:])) if losses else None,
                "languages": mc.languages}

    def amr_embed(texts: list[str]) -> np.ndarray:
        seqs = [linearize(parser.parse(t), Scheme.VARIABLE_FREE).tokens for t in texts]
        return state["encoder"].embed(seqs) if seqs else np.zeros((0, state["encoder"].dim))

    def text_embed(texts: list[str]) -> np.ndarray:
        external = state.get("text_store")
        if external is not None:  # external dumps key transfer sentences by their text
            return external.rows(texts)
        return state["text_encoder"].embed(texts)

    def do_embed():
        ids = [s[0] for s in state["sentences"]]
        texts = [s[2] for s in state["sentences"]]
        if raw["paths"].get("text_vectors"):
            store = load_vectors(config.path("text_vectors"))
            text_vecs = store.rows(ids)
            state["text_store"] = store
        else:
            state["text_encoder"] = HashingTextEncoder(int(raw["text_encoder"]["dim"]), seed)
            text_vecs = state["text_encoder"].embed(texts)
        amr_vecs = amr_embed(texts)
        state["text"] = VectorStore(ids, text_vecs, digest)
        state["amr"] = VectorStore(ids, amr_vecs, digest)
        state["text"].save(out_dir / "text.vec")
        state["amr"].save(out_dir / "amr.vec")
        return {"sentences": len(ids), "text_dim": state["text"].dim, "amr_dim": state["amr"].dim}

    def do_integrate():
        strategy = Strategy(raw["integration"])
        fused = integrate(state["text"].vectors, state["amr"].vectors, strategy)
        state["fused"] = VectorStore(state["text"].ids, fused, digest)
        state["fused"].save(out_dir / "integrated.vec")
        return {"strategy": strategy.value, "dim": state["fused"].dim}

    def do_evaluate():
        scores: dict[str, Any] = {}
        channels = {"text": state["text"], "amr": state["amr"], "integrated": state["fused"]}
        if "sts" in raw["tasks"]:
            rows = read_sts_tsv(config.path("sts"))
            scores["sts"] = {
                name: sts_evaluate(StsPair(store.get(a), store.get(b), gold, group)
                                   for a, b, gold, group in rows).as_dict()
                for name, store in channels.items()
            }
        if "transfer" in raw["tasks"]:
            strategy = Strategy(raw["integration"])
            embedders = {
                "text": text_embed,
                "amr": amr_embed,
                "integrated": lambda t: integrate(text_embed(t), amr_embed(t), strategy),
            }
            seen = set(config.mixer_config().languages)
            scores["transfer"] = {}
            for rel in raw["paths"].get("transfer", []):
                path = config.base_dir / rel
                scores["transfer"][path.stem] = {
                    name: transfer_evaluate(read_transfer_jsonl(path, fn, path.stem, seen), seed=seed).as_dict()
                    for name, fn in embedders.items()
                }
        return scores

    stage("parse", do_parse)
    stage("linearize", do_linearize)
    stage("vocab", do_vocab)
    stage("train", do_train)
    stage("embed", do_embed)
    stage("integrate", do_integrate)
    stage("evaluate", do_evaluate)

    artifacts = ["linearized.txt", "vocab.tsv", "model.amre", "text.vec", "amr.vec", "integrated.vec"]
    report["artifacts"] = {name: sha256_file(out_dir / name) for name in artifacts}
    report = _round(report)
    report["timestamp"] = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    report["timings_s"] = {k: round(v, 3) for k, v in timings.items()}
    (out_dir / REPORT_NAME).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n",
                                       encoding="utf-8")
    return report


VOLATILE_KEYS = ("timestamp", "timings_s")


def stable_report(report: dict) -> str:
    """Canonical report text without wall-clock fields."""
    return json.dumps({k: v for k, v in report.items() if k not in VOLATILE_KEYS},
                      indent=2, sort_keys=True)
