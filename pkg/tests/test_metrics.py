import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from src.errors import SingleClass
from src.scoring.metrics import cutoff_metrics, mean_std, roc_auc, roc_points, sensitivity_specificity

scored_labels = st.lists(
    st.tuples(st.integers(min_value=0, max_value=6), st.integers(min_value=0, max_value=1)),
    min_size=2,
    max_size=30,
)


def _brute_force_auc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


@given(scored_labels)
@settings(max_examples=1000, deadline=None)
def test_auc_equals_pair_counting_with_ties(pairs):
    scores = [float(s) / 4.0 for s, _ in pairs]
    labels = [y for _, y in pairs]
    assume(0 < sum(labels) < len(labels))
    assert roc_auc(scores, labels) == _brute_force_auc(scores, labels)


@given(scored_labels)
@settings(max_examples=200, deadline=None)
def test_auc_flips_with_the_labels(pairs):
    scores = [float(s) for s, _ in pairs]
    labels = [y for _, y in pairs]
    assume(0 < sum(labels) < len(labels))
    flipped = [1 - y for y in labels]
    assert roc_auc(scores, labels) == pytest.approx(1.0 - roc_auc(scores, flipped), abs=1e-12)


@given(scored_labels)
@settings(max_examples=200, deadline=None)
def test_auc_ignores_monotone_transforms(pairs):
    scores = np.array([float(s) for s, _ in pairs])
    labels = [y for _, y in pairs]
    assume(0 < sum(labels) < len(labels))
    assert roc_auc(np.exp(scores) * 3.0 + 1.0, labels) == roc_auc(scores, labels)


@pytest.mark.parametrize(
    "pos,neg,expected",
    [([0.9, 0.8], [0.1, 0.2], 1.0), ([0.5, 0.5], [0.5, 0.5], 0.5), ([0.8, 0.4], [0.6, 0.2], 0.75)],
)
def test_auc_examples(pos, neg, expected):
    assert roc_auc(pos + neg, [1] * len(pos) + [0] * len(neg)) == expected


def test_auc_needs_both_classes():
    with pytest.raises(SingleClass):
        roc_auc([0.1, 0.2], [1, 1])


def test_sensitivity_specificity_from_confusion_counts():
    truth = [1] * 10 + [0] * 10
    pred = [1] * 7 + [0] * 3 + [0] * 8 + [1] * 2
    assert sensitivity_specificity(pred, truth) == (0.7, 0.8)


@given(st.lists(st.integers(min_value=0, max_value=1), min_size=2, max_size=40))
def test_perfect_and_inverted_predictions(truth):
    assume(0 < sum(truth) < len(truth))
    assert sensitivity_specificity(truth, truth) == (1.0, 1.0)
    assert sensitivity_specificity([1 - t for t in truth], truth) == (0.0, 0.0)


def test_sensitivity_specificity_needs_both_reference_classes():
    with pytest.raises(SingleClass):
        sensitivity_specificity([0, 1], [1, 1])


def test_labels_must_be_binary():
    with pytest.raises(ValueError):
        roc_auc([0.1, 0.2], [0, 2])


def test_roc_points_sweep_from_nothing_to_everything():
    rows = roc_points([0.9, 0.4, 0.4, 0.1], [1, 1, 0, 0])
    assert rows[0] == (float("inf"), 0.0, 1.0)
    assert rows[-1] == (0.1, 1.0, 0.0)
    assert [r[0] for r in rows] == [float("inf"), 0.9, 0.4, 0.1]
    assert rows[2] == (0.4, 1.0, 0.5)


def test_cutoff_metrics_per_threshold():
    ref = [2.0, 4.0, 8.0, 20.0, 40.0]
    pred = [1.0, 6.0, 9.0, 18.0, 12.0]
    rows = cutoff_metrics(pred, ref, cutoffs=(5.0, 15.0, 30.0, 100.0))
    by_cutoff = {row.cutoff: row for row in rows}

    assert (by_cutoff[5.0].n_negative, by_cutoff[5.0].n_positive) == (2, 3)
    assert by_cutoff[5.0].sensitivity == 1.0
    assert by_cutoff[5.0].specificity == 0.5
    assert by_cutoff[15.0].sensitivity == 0.5
    assert by_cutoff[15.0].specificity == 1.0
    assert by_cutoff[100.0].sensitivity is None
    assert by_cutoff[100.0].auc is None


def test_mean_std():
    assert mean_std([1.0, 3.0]) == {"mean": 2.0, "std": 1.0}
    assert np.isnan(mean_std([])["mean"])
