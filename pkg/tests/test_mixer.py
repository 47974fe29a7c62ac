import json
import sys
import textwrap
from collections import Counter

import numpy as np
import pytest

from amr_retrofit.contrastive import TrainConfig, Triplet
from amr_retrofit.encoder import ReferenceEncoder
from amr_retrofit.errors import DataError
from amr_retrofit.fixture import LEXICON, reverse_lexicon, separable_triplets
from amr_retrofit.graph import parse_penman
from amr_retrofit.linearize import linearize
from amr_retrofit.mixer import (
    GRAPH,
    TEXT,
    DictionaryTranslator,
    GraphCache,
    MixedItem,
    MixerConfig,
    SubprocessParser,
    SubprocessTranslator,
    TemplateParser,
    dump_mixed,
    item_rng,
    mix_batch,
    mix_example,
    run_mixed_training,
)

from conftest import token_vocab

SENTENCE = "the dog chases the ball"


class CountingTranslator(DictionaryTranslator):
    def __init__(self, lexicon=LEXICON):
        super().__init__(lexicon)
        self.calls = 0

    def translate(self, sentence, lang):
        self.calls += 1
        return super().translate(sentence, lang)


class FixedParser:
    """Identity-style stub: always returns the same graph."""

    def __init__(self, penman="(d / dog :ARG0 (c / cat))"):
        self.graph = parse_penman(penman)
        self.calls = 0

    def parse(self, sentence):
        self.calls += 1
        return self.graph


class BrokenParser:
    def parse(self, sentence):
        raise RuntimeError("parser crashed")


def _stubs():
    return DictionaryTranslator(LEXICON), TemplateParser(reverse_lexicon())


def _draws(config, n, seed=0):
    translator, parser = _stubs()
    cache = GraphCache()
    return [mix_example(SENTENCE, config, translator, parser, item_rng(seed, k, 0), cache) for k in range(n)]


def test_forced_non_english_branch():
    config = MixerConfig({"de": 1.0}, require_english=False)
    for item in _draws(config, 200):
        assert item.kind == GRAPH and item.language == "de"
        assert item.q is None


def test_english_only_is_half_text():
    items = _draws(MixerConfig({"en": 1.0}), 10_000)
    frac = np.mean([it.kind == TEXT for it in items])
    assert abs(frac - 0.5) <= 0.02


def test_english_requirement():
    with pytest.raises(ValueError):
        MixerConfig({"de": 1.0})


@pytest.mark.parametrize(
    "languages",
    [{}, {"en": 0.5, "de": 0.4}, {"en": 1.2, "de": -0.2}, {"en": 0.0, "de": 1.0}],
)
def test_config_validation(languages):
    with pytest.raises(ValueError):
        MixerConfig(languages)


def test_text_items_must_be_english():
    with pytest.raises(DataError):
        MixedItem(("x",), TEXT, "de")


def test_same_seed_same_item():
    config = MixerConfig.uniform()
    translator, parser = _stubs()
    a = [mix_example(SENTENCE, config, translator, parser, np.random.default_rng(s)) for s in range(50)]
    b = [mix_example(SENTENCE, config, translator, parser, np.random.default_rng(s)) for s in range(50)]
    assert a == b


def test_graph_fraction_closed_form():
    k = 7
    config = MixerConfig.uniform()
    items = _draws(config, 10_000, seed=3)
    expected = (k - 1) / k + 0.5 / k
    assert expected == pytest.approx(0.9285714, abs=1e-6)
    assert abs(np.mean([it.kind == GRAPH for it in items]) - expected) <= 0.02
    counts = Counter(it.language for it in items)
    for lang in config.languages:
        assert abs(counts[lang] / 10_000 - 1 / k) <= 0.02


def test_text_only_for_english_low_q():
    for it in _draws(MixerConfig.uniform(), 5000, seed=1):
        if it.kind == TEXT:
            assert it.language == "en" and it.q is not None and not it.q > 0.5
        elif it.language == "en":
            assert it.q > 0.5
        else:
            assert it.q is None


def test_nonuniform_weights():
    items = _draws(MixerConfig({"en": 0.2, "de": 0.8}), 10_000, seed=4)
    assert abs(np.mean([it.language == "de" for it in items]) - 0.8) <= 0.02


def test_empty_batch():
    translator, parser = _stubs()
    assert mix_batch([], MixerConfig.uniform(), translator, parser, np.random.default_rng(0)) == []


def test_stub_graph_reproduced_verbatim():
    parser = FixedParser()
    config = MixerConfig({"de": 1.0}, require_english=False)
    batch = [Triplet("a b", "c", "d")] * 3
    mixed = mix_batch(batch, config, DictionaryTranslator(), parser, np.random.default_rng(0))
    expected = linearize(parser.graph).tokens
    for t in mixed:
        for it in t.items():
            assert it.tokens == expected


def test_per_sentence_draws_are_independent():
    config = MixerConfig.uniform(["en", "de", "fr"])
    translator, parser = _stubs()
    batch = [Triplet(SENTENCE, SENTENCE, SENTENCE)] * 100
    pairs = Counter()
    rng = np.random.default_rng(5)
    for _ in range(100):
        for t in mix_batch(batch, config, translator, parser, rng, GraphCache()):
            pairs[(t.anchor.drawn, t.positive.drawn)] += 1
    total = sum(pairs.values())
    assert total == 10_000
    first = Counter()
    second = Counter()
    for (a, p), c in pairs.items():
        first[a] += c
        second[p] += c
    for (a, p), c in pairs.items():
        assert abs(c / total - first[a] / total * second[p] / total) <= 0.02
    # the three slots of a triplet do not share a language
    assert sum(c for (a, p), c in pairs.items() if a == p) / total < 0.5


def test_batch_independent_of_evaluation_order():
    config = MixerConfig.uniform()
    translator, parser = _stubs()
    batch = [Triplet(f"the dog {v} the ball", "a cat sees", "the bird") for v in ("sees", "chases", "calls")]
    full = mix_batch(batch, config, translator, parser, np.random.default_rng(9))
    base = int(np.random.default_rng(9).integers(0, 2**63))
    item = mix_example(batch[2].positive, config, translator, parser, item_rng(base, 2, 1))
    assert full[2].positive == item


def test_failure_falls_back_to_english_text():
    config = MixerConfig({"de": 1.0}, require_english=False)
    item = mix_example(SENTENCE, config, DictionaryTranslator(), BrokenParser(), np.random.default_rng(0))
    assert item.kind == TEXT and item.language == "en" and item.fallback
    assert item.drawn == "de"
    assert item.tokens == tuple(SENTENCE.split())


def test_empty_sentence_rejected():
    translator, parser = _stubs()
    with pytest.raises(DataError):
        mix_example("  ", MixerConfig.uniform(), translator, parser, np.random.default_rng(0))


def test_cache_avoids_repeat_calls():
    translator = CountingTranslator()
    parser = FixedParser()
    cache = GraphCache()
    config = MixerConfig({"de": 0.5, "fr": 0.5}, require_english=False)
    for k in range(100):
        mix_example(SENTENCE, config, translator, parser, np.random.default_rng(k), cache)
    assert translator.calls == 2
    assert parser.calls == 2
    assert len(cache) == 2


def test_translation_round_trips_through_template_parser():
    translator, parser = _stubs()
    en = linearize(parser.parse(SENTENCE))
    for lang in LEXICON:
        assert linearize(parser.parse(translator.translate(SENTENCE, lang))) == en
    assert str(en) == "( dog-01 :ARG0 ( chases ) :ARG1 ( ball ) )"


def test_template_parser_reentrancy_and_mod():
    g = TemplateParser(max_args=2).parse("dog cat bird cat fox")
    assert [e.role for e in g.edges] == [":ARG0", ":ARG1", ":mod", ":mod"]
    assert g.reentrant_nodes() == {"x1"}


def _training_setup():
    data = separable_triplets(12)
    translator, parser = _stubs()
    config = MixerConfig.uniform(["en", "de"], max_steps=50, batch_size=6, seed=2)
    return data, config, translator, parser


def test_zero_steps_leave_parameters():
    data, config, translator, parser = _training_setup()
    enc = ReferenceEncoder(token_vocab(data), dim=8, hidden=8)
    before = enc.params.copy()
    config = MixerConfig.uniform(["en", "de"], max_steps=0)
    result = run_mixed_training(data, config, translator, parser, enc)
    assert result.losses == []
    assert np.array_equal(enc.params, before)


def test_mixed_training_lowers_loss():
    data, config, translator, parser = _training_setup()
    enc = ReferenceEncoder(token_vocab(data), dim=16, hidden=16)
    result = run_mixed_training(data, config, translator, parser, enc, TrainConfig(learning_rate=0.5))
    assert len(result.losses) == 50
    assert np.mean(result.losses[-10:]) < np.mean(result.losses[:10])


def test_mixed_training_deterministic():
    data, config, translator, parser = _training_setup()
    finals = []
    for _ in range(2):
        enc = ReferenceEncoder(token_vocab(data), dim=8, hidden=8)
        run_mixed_training(data, config, translator, parser, enc, TrainConfig(learning_rate=0.5))
        finals.append(enc.params.tobytes())
    assert finals[0] == finals[1]


def test_dump_mixed_jsonl():
    translator, parser = _stubs()
    mixed = mix_batch([Triplet(SENTENCE, SENTENCE, SENTENCE)], MixerConfig.uniform(), translator, parser,
                      np.random.default_rng(0))
    lines = dump_mixed(mixed).splitlines()
    assert len(lines) == 3
    for line in lines:
        obj = json.loads(line)
        assert set(obj) == {"kind", "lang", "tokens"}
        assert obj["kind"] in (TEXT, GRAPH)


TRANSLATOR_SCRIPT = textwrap.dedent("""
    import sys
    for line in sys.stdin:
        lang, text = line.rstrip("\\n").split("\\t", 1)
        print(" ".join(lang + ":" + w for w in text.split()), flush=True)
""")

PARSER_SCRIPT = textwrap.dedent("""
    import sys
    for line in sys.stdin:
        words = line.split()
        print("(r / " + words[-1].split(":")[-1] + ")", flush=True)
""")


def test_subprocess_adapters(tmp_path):
    (tmp_path / "t.py").write_text(TRANSLATOR_SCRIPT)
    (tmp_path / "p.py").write_text(PARSER_SCRIPT)
    with SubprocessTranslator([sys.executable, str(tmp_path / "t.py")]) as tr, \
            SubprocessParser([sys.executable, str(tmp_path / "p.py")]) as pa:
        assert tr.translate("the dog", "de") == "de:the de:dog"
        assert str(linearize(pa.parse("de:the de:dog"))) == "( dog )"
        config = MixerConfig({"de": 1.0}, require_english=False)
        item = mix_example("a cat", config, tr, pa, np.random.default_rng(0))
        assert item.tokens == ("(", "cat", ")") and item.language == "de"


def test_subprocess_that_dies_falls_back(tmp_path):
    (tmp_path / "dead.py").write_text("import sys\nsys.stdin.readline()\n")
    with SubprocessTranslator([sys.executable, str(tmp_path / "dead.py")]) as tr:
        config = MixerConfig({"de": 1.0}, require_english=False)
        item = mix_example("a cat", config, tr, TemplateParser(), np.random.default_rng(0))
    assert item.fallback and item.kind == TEXT
