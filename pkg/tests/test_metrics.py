import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spatial_agent.benchgen import Question
from spatial_agent.metrics import MRA_THRESHOLDS, EvalReport, acc, evaluate, mra, normalize_letter, score_answer


def naive_mra(pred, truth):
    # thresholds written out by hand, compared in integer hundredths
    rel_pct = round(abs(pred - truth) / abs(truth) * 100, 6)
    return sum(rel_pct < 100 - t for t in range(50, 100, 5)) / 10


class TestMRA:
    def test_thresholds(self):
        assert MRA_THRESHOLDS == (0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95)

    def test_exact(self):
        assert mra(3.7, 3.7) == 1.0

    def test_twenty_percent_over(self):
        # relative error 0.2 passes thresholds 0.50..0.75 (six of ten)
        assert mra(1.2 * 5, 5) == 0.6
        assert mra(1.2 * 0.3, 0.3) == 0.6

    def test_far_off(self):
        assert mra(10.0, 1.0) == 0.0

    def test_zero_truth(self):
        with pytest.raises(ValueError):
            mra(1.0, 0.0)

    @given(st.floats(0.01, 100), st.floats(0, 3))
    def test_matches_naive(self, truth, factor):
        assert mra(truth * factor, truth) == pytest.approx(naive_mra(truth * factor, truth))

    @given(st.floats(0.1, 100), st.floats(0, 2), st.floats(0, 2))
    def test_monotone_in_error(self, truth, e1, e2):
        lo, hi = sorted((e1, e2))
        assert mra(truth * (1 + lo), truth) >= mra(truth * (1 + hi), truth)

    @given(st.floats(-1e6, 1e6, allow_nan=False), st.floats(0.01, 1e3))
    @settings(max_examples=200)
    def test_bounded(self, pred, truth):
        assert 0.0 <= mra(pred, truth) <= 1.0


class TestACC:
    @pytest.mark.parametrize("pred", ["A", "a", " A ", "A.", "(A)", "[a]", "A)", "A:"])
    def test_normalized_match(self, pred):
        assert acc(pred, "A") == 1

    def test_mismatch(self):
        assert acc("B", "A") == 0

    def test_sentinel_scores_zero(self):
        assert acc("X", "X") == 0
        assert acc("", "A") == 0

    def test_normalize(self):
        assert normalize_letter(" (c). ") == "C"


class TestScoreAnswer:
    def test_numeric_unparseable(self):
        assert score_answer("numerical", "three", "3") == 0.0

    def test_numeric(self):
        assert score_answer("numerical", "3", "3") == 1.0

    def test_choice(self):
        assert score_answer("multiple_choice", "b", "B") == 1.0


def q(qid, kind, answer_type, gt, choices=None):
    return Question(qid, "s", kind, "t", answer_type, choices, gt)


class TestEvaluate:
    QS = [q("1", "object_count", "numerical", "2"), q("2", "object_count", "numerical", "4"),
          q("3", "object_obstruction", "multiple_choice", "A", ["a", "b"])]

    def test_totals(self):
        report = evaluate(self.QS, {"1": "2", "2": "5", "3": "A"})
        assert report.total == 3
        assert report.per_kind["object_count"]["score"] == pytest.approx((1.0 + 0.5) / 2)
        assert report.per_kind["object_count"]["metric"] == "MRA"
        assert report.per_kind["object_obstruction"] == {"metric": "ACC", "score": 1.0, "count": 1, "failures": []}
        assert report.overall == pytest.approx((0.75 + 1.0) / 2)

    def test_missing_prediction_fails(self):
        report = evaluate(self.QS, {"1": "2"})
        assert report.per_kind["object_count"]["failures"] == ["2"]
        assert report.per_kind["object_obstruction"]["score"] == 0.0

    def test_table_and_dict(self):
        report = evaluate(self.QS, {"1": "2", "2": "4", "3": "A"})
        assert "100.0%" in report.table()
        assert report.to_dict()["overall"] == 1.0

    def test_empty(self):
        assert EvalReport().overall == 0.0 and EvalReport().total == 0
