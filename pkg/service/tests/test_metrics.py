import math

import pytest

from kgservice.metrics import average_precision, precision_curve, recall_at_precision

# Worked four-point example: ranked +, -, +, - gives AP (1 + 2/3) / 2.
FOUR_SCORES = {"a": 0.9, "b": 0.8, "c": 0.7, "d": 0.6}
FOUR_LABELS = {"a": True, "b": False, "c": True, "d": False}


class TestAveragePrecision:
    def test_four_point_example(self):
        assert average_precision(FOUR_SCORES, FOUR_LABELS) == (1.0 + 2.0 / 3.0) / 2.0

    def test_perfect_separation(self):
        scores = {"a": 0.9, "b": 0.8, "c": 0.2, "d": 0.1}
        labels = {"a": True, "b": True, "c": False, "d": False}
        assert average_precision(scores, labels) == 1.0

    def test_invariant_under_monotone_transform(self):
        squashed = {k: math.tanh(v) for k, v in FOUR_SCORES.items()}
        assert average_precision(squashed, FOUR_LABELS) == average_precision(
            FOUR_SCORES, FOUR_LABELS
        )

    def test_ties_broken_by_id(self):
        # Same score everywhere: ranking is by id, so the label order decides.
        scores = {"a": 0.5, "b": 0.5, "c": 0.5}
        labels = {"a": True, "b": False, "c": True}
        assert average_precision(scores, labels) == (1.0 + 2.0 / 3.0) / 2.0

    @pytest.mark.parametrize(
        "labels",
        [
            {"a": True, "b": True},
            {"a": False, "b": False},
            {},
        ],
    )
    def test_degenerate_label_sets_rejected(self, labels):
        with pytest.raises(ValueError):
            average_precision({"a": 0.5, "b": 0.4}, labels)

    def test_missing_score_rejected(self):
        with pytest.raises(ValueError, match="missing score for labeled triple b"):
            average_precision({"a": 0.5}, {"a": True, "b": False})


class TestRecallAtPrecision:
    def test_four_point_example(self):
        assert recall_at_precision(FOUR_SCORES, FOUR_LABELS, 0.8) == 0.5

    def test_perfect_scorer(self):
        scores = {"a": 0.9, "b": 0.8, "c": 0.2}
        labels = {"a": True, "b": True, "c": False}
        assert recall_at_precision(scores, labels, 0.8) == 1.0

    def test_all_tied_below_target_is_zero(self):
        scores = {k: 0.5 for k in "abcd"}
        labels = {"a": True, "b": True, "c": False, "d": False}
        assert recall_at_precision(scores, labels, 0.8) == 0.0

    def test_tied_scores_enter_cuts_together(self):
        # The positive and a negative share a score: no cut separates them,
        # so precision 1.0 is never reached before the tie floods in.
        scores = {"a": 0.9, "b": 0.9, "c": 0.1}
        labels = {"a": True, "b": False, "c": True}
        assert recall_at_precision(scores, labels, 1.0) == 0.0


class TestPrecisionCurve:
    def test_four_point_grid(self):
        curve = precision_curve(FOUR_SCORES, FOUR_LABELS, grid=[1.0, 0.5])
        assert [p["kept_fraction"] for p in curve] == [1.0, 0.5]
        assert [p["precision"] for p in curve] == [0.5, 0.5]
        assert [p["kept_count"] for p in curve] == [4, 2]
        assert curve[0]["threshold"] == 0.6
        assert curve[1]["threshold"] == 0.8

    def test_full_grid_is_sorted_descending(self):
        curve = precision_curve(FOUR_SCORES, FOUR_LABELS)
        fractions = [p["kept_fraction"] for p in curve]
        assert fractions == sorted(fractions, reverse=True)
        assert curve[0]["kept_fraction"] == 1.0

    def test_fraction_validation(self):
        with pytest.raises(ValueError, match="kept fractions"):
            precision_curve(FOUR_SCORES, FOUR_LABELS, grid=[0.0])
