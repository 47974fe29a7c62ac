import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from amr_retrofit.errors import DataError, DimensionMismatch
from amr_retrofit.evaluate import (
    DEFAULT_GRID,
    DegenerateLabels,
    LengthMismatch,
    LogRegModel,
    MissingSplit,
    StsPair,
    TransferDataset,
    ZeroVariance,
    fit_logreg,
    pair_features,
    rankdata,
    read_sts_tsv,
    read_transfer_jsonl,
    spearman,
    sts_evaluate,
    transfer_evaluate,
)


def brute_ranks(values):
    return [1 + sum(u < v for u in values) + (sum(u == v for u in values) - 1) / 2 for v in values]


def rank_difference_rho(x, y):
    n = len(x)
    d = np.array(brute_ranks(x)) - np.array(brute_ranks(y))
    return 1 - 6 * np.sum(d * d) / (n * (n * n - 1))


@pytest.mark.parametrize(
    "x, y, rho",
    [([1, 2, 3], [10, 20, 30], 1.0), ([1, 2, 3], [3, 2, 1], -1.0), ([1, 2, 3], [1, 3, 2], 0.5)],
)
def test_spearman_examples(x, y, rho):
    assert spearman(x, y) == pytest.approx(rho, abs=1e-12)


def test_rank_oracle_with_ties(rng):
    for _ in range(200):
        values = list(rng.integers(0, 5, size=int(rng.integers(1, 12))))
        np.testing.assert_array_equal(rankdata(values), brute_ranks(values))


def test_rank_difference_formula_without_ties(rng):
    for _ in range(200):
        n = int(rng.integers(2, 30))
        x, y = rng.permutation(n) * 1.5, rng.standard_normal(n)
        assert spearman(x, y) == pytest.approx(rank_difference_rho(x, y), abs=1e-12)


def test_matches_scipy_with_ties(rng):
    for _ in range(200):
        n = int(rng.integers(3, 40))
        x, y = rng.integers(0, 6, n), rng.integers(0, 6, n)
        if len(set(x)) < 2 or len(set(y)) < 2:
            continue
        assert spearman(x, y) == pytest.approx(stats.spearmanr(x, y).statistic, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.integers(-100, 100), st.integers(-100, 100)), min_size=2, max_size=30))
def test_monotone_transform_invariance(pairs):
    x = np.array([p[0] for p in pairs], dtype=float)
    y = np.array([p[1] for p in pairs], dtype=float)
    if len(set(x)) < 2 or len(set(y)) < 2:
        return
    rho = spearman(x, y)
    assert spearman(x**3 + 2 * x, y) == rho
    assert spearman(x, np.exp(y / 50)) == rho
    assert spearman(x, x) == pytest.approx(1.0, abs=1e-12)
    assert spearman(x, -x) == pytest.approx(-1.0, abs=1e-12)


def test_spearman_errors():
    with pytest.raises(LengthMismatch):
        spearman([1, 2], [1, 2, 3])
    with pytest.raises(LengthMismatch):
        spearman([1], [1])
    with pytest.raises(ZeroVariance):
        spearman([1, 1, 1], [1, 2, 3])


def _pairs_from_cosines(cosines, golds, group="EN-EN"):
    out = []
    for c, g in zip(cosines, golds):
        angle = np.arccos(c)
        out.append(StsPair(np.array([1.0, 0.0]), np.array([np.cos(angle), np.sin(angle)]), g, group))
    return out


def test_sts_ordered_embeddings():
    golds = np.linspace(0, 5, 20)
    result = sts_evaluate(_pairs_from_cosines(np.linspace(-0.9, 0.9, 20), golds))
    assert result.groups == {"EN-EN": pytest.approx(1.0, abs=1e-12)}


def test_sts_null_distribution(rng):
    pairs = [StsPair(rng.standard_normal(8), rng.standard_normal(8), float(g))
             for g in rng.permutation(np.linspace(0, 5, 1000))]
    assert abs(sts_evaluate(pairs).average) < 0.1


def test_sts_group_average():
    assert abs(spearman([1, 2, 3, 4], [1, 2, 4, 3]) - 0.8) < 1e-12
    assert abs(spearman([1, 2, 3, 4, 5], [3, 2, 1, 4, 5]) - 0.6) < 1e-12
    a = _pairs_from_cosines([0.1, 0.2, 0.3, 0.4], [1, 2, 4, 3], "EN-DE")
    b = _pairs_from_cosines([0.1, 0.2, 0.3, 0.4, 0.5], [3, 2, 1, 4, 5], "EN-AR")
    result = sts_evaluate(a + b)
    assert result.groups == {"EN-DE": pytest.approx(0.8), "EN-AR": pytest.approx(0.6)}
    assert result.average == pytest.approx(0.7, abs=1e-12)
    assert result.as_dict()["avg"] == result.average


def test_sts_gold_range():
    with pytest.raises(DataError):
        StsPair(np.ones(2), np.ones(2), 5.5)


def test_read_sts_tsv(tmp_path):
    path = tmp_path / "sts.tsv"
    path.write_text("a\tb\t4.5\nc\td\t0\tEN-DE\n\n", encoding="utf-8")
    assert read_sts_tsv(path) == [("a", "b", 4.5, "ALL"), ("c", "d", 0.0, "EN-DE")]
    path.write_text("a\tb\tx\n", encoding="utf-8")
    with pytest.raises(DataError):
        read_sts_tsv(path)


def _clusters(rng, centers, n, sigma):
    X = np.vstack([rng.normal(c, sigma, size=(n, len(c))) for c in centers])
    y = np.repeat(np.arange(len(centers)), n)
    return X, y


def test_logreg_separable(rng):
    X, y = _clusters(rng, [(-3, -3), (3, 3)], 50, 0.5)
    model = fit_logreg(X, y, reg=1e-3)
    assert model.accuracy(X, y) == 1.0


def test_logreg_losses_never_increase(rng):
    X, y = _clusters(rng, [(0, 0), (1, 1), (0, 2)], 40, 0.8)
    for reg in DEFAULT_GRID:
        losses = fit_logreg(X, y, reg=reg).losses
        assert all(b <= a for a, b in zip(losses, losses[1:]))


def test_logreg_constant_features_predict_majority():
    X = np.ones((10, 3))
    y = np.array([0] * 3 + [1] * 7)
    model = fit_logreg(X, y)
    assert set(model.predict(np.ones((5, 3)))) == {1}


def test_logreg_three_classes_near_bayes_rate(rng):
    centers = np.array([(0.0, 0.0), (4.0, 0.0), (2.0, 3.5)])
    X, y = _clusters(rng, centers, 100, 1.0)
    Xd, yd = _clusters(rng, centers, 300, 1.0)
    acc = fit_logreg(X, y).accuracy(Xd, yd)
    # Bayes rule for equal isotropic covariances is nearest centre
    bayes = []
    for _ in range(20):
        Xb, yb = _clusters(rng, centers, 300, 1.0)
        nearest = np.argmin(((Xb[:, None, :] - centers[None]) ** 2).sum(-1), axis=1)
        bayes.append(np.mean(nearest == yb))
    assert acc > 0.9
    assert acc >= np.mean(bayes) - 0.03


def test_logreg_deterministic(rng):
    X, y = _clusters(rng, [(0, 0), (1, 1)], 20, 1.0)
    a, b = fit_logreg(X, y, seed=4), fit_logreg(X, y, seed=4)
    assert np.array_equal(a.weights, b.weights) and a.losses == b.losses


def test_logreg_single_class():
    with pytest.raises(DegenerateLabels):
        fit_logreg(np.ones((3, 2)), [0, 0, 0])


def test_prediction_shift_invariant(rng):
    X, y = _clusters(rng, [(0, 0), (2, 0), (1, 2)], 20, 0.7)
    model = fit_logreg(X, y)
    shifted = LogRegModel(model.weights + np.array([5.0, -3.0]), model.bias, model.reg)
    assert np.array_equal(model.predict(X), shifted.predict(X))


@pytest.mark.parametrize(
    "a, b, expected",
    [([1, 0], [0, 1], [1, 0, 0, 1, 1, 1, 0, 0]), ([2, -1], [2, -1], [2, -1, 2, -1, 0, 0, 4, 1])],
)
def test_pair_features(a, b, expected):
    np.testing.assert_array_equal(pair_features(a, b), expected)


def test_pair_features_dims(rng):
    assert pair_features(rng.standard_normal(4), rng.standard_normal(4)).shape == (16,)
    with pytest.raises(DimensionMismatch):
        pair_features([1, 2], [1, 2, 3])


def _linear_task(rng, langs, permuted=(), n=60, seen=None):
    w = np.array([1.0, -2.0, 0.5])
    feats, labels, lang_col, split_col = [], [], [], []

    def add(lang, split, count):
        X = rng.standard_normal((count, 3))
        X += np.sign(X @ w)[:, None] * w / np.linalg.norm(w)  # margin
        y = (X @ w > 0).astype(int)
        if lang in permuted:
            y = rng.permutation(y)
        feats.append(X)
        labels.append(y)
        lang_col.extend([lang] * count)
        split_col.extend([split] * count)

    add("en", "train", n)
    for lang in langs:
        add(lang, "dev", n)
        add(lang, "test", 400)
    return TransferDataset(np.vstack(feats), np.concatenate(labels), lang_col, split_col, "toy",
                           seen if seen is not None else langs)


def test_transfer_identical_languages(rng):
    report = transfer_evaluate(_linear_task(rng, ["en", "de", "fr"]))
    assert report.test == {"en": 1.0, "de": 1.0, "fr": 1.0}
    assert report.seen_average == report.all_average == 1.0
    assert report.reg in DEFAULT_GRID


def test_transfer_permuted_language_near_chance(rng):
    report = transfer_evaluate(_linear_task(rng, ["en", "de", "fr"], permuted={"fr"}, seen=["en", "de"]))
    assert report.test["en"] == report.test["de"] == 1.0
    assert abs(report.test["fr"] - 0.5) < 0.1
    assert report.seen_average == 1.0
    assert report.all_average == pytest.approx((2.0 + report.test["fr"]) / 3)


@pytest.mark.parametrize("langs", [["en"], ["en", "de"], ["en", "de", "fr", "es", "zh", "ar", "it"]])
def test_fit_count_independent_of_languages(rng, langs):
    calls = []

    def counting_fit(X, y, **kw):
        calls.append(len(y))
        return fit_logreg(X, y, **kw)

    transfer_evaluate(_linear_task(rng, langs), fit=counting_fit)
    assert len(calls) == len(DEFAULT_GRID)
    assert set(calls) == {60}


def test_transfer_requires_splits(rng):
    task = _linear_task(rng, ["en"])
    no_dev = TransferDataset(task.features, task.labels, task.langs,
                             np.where(task.splits == "dev", "test", task.splits))
    with pytest.raises(MissingSplit):
        transfer_evaluate(no_dev)


def test_training_must_be_english():
    with pytest.raises(DataError):
        TransferDataset(np.zeros((2, 1)), [0, 1], ["de", "en"], ["train", "train"])
    with pytest.raises(DataError):
        TransferDataset(np.zeros((2, 1)), [0, 2], ["en", "en"], ["train", "train"])


def test_report_dict(rng):
    d = transfer_evaluate(_linear_task(rng, ["en", "de"])).as_dict()
    assert set(d) >= {"selected_reg", "dev", "test", "seen_avg", "all_avg", "grid"}
    assert len(d["grid"]) == 11
    json.dumps(d)


def test_read_transfer_jsonl(tmp_path):
    path = tmp_path / "task.jsonl"
    rows = [
        {"text": "a", "text2": "b", "label": 0, "lang": "en", "split": "train"},
        {"text": "b", "text2": "b", "label": 1, "lang": "de", "split": "test"},
    ]
    path.write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")
    table = {"a": [1.0, 0.0], "b": [0.0, 1.0]}
    task = read_transfer_jsonl(path, lambda texts: np.array([table[t] for t in texts]), seen=["de"])
    assert task.name == "task"
    np.testing.assert_array_equal(task.features[0], [1, 0, 0, 1, 1, 1, 0, 0])
    assert list(task.langs) == ["en", "de"]
    path.write_text('{"text": "a"}\n', encoding="utf-8")
    with pytest.raises(DataError):
        read_transfer_jsonl(path, lambda texts: np.zeros((len(texts), 2)))
