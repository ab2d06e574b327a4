import numpy as np
import pytest

from onlinevos.errors import DimensionError, InputError
from onlinevos.evaluation import EvalReport, jaccard, score_sequence


def test_jaccard_examples():
    a = np.array([[1, 1, 0], [0, 0, 0]])
    assert jaccard(a, a, 1) == 1.0
    assert jaccard(a, np.array([[0, 0, 1], [1, 0, 0]]), 1) == 0.0
    assert jaccard(np.zeros((2, 2)), np.zeros((2, 2)), 1) == 1.0
    # intersection 2, union 6
    p = np.array([[1, 1, 1, 1, 0, 0]])
    g = np.array([[0, 0, 1, 1, 1, 1]])
    assert jaccard(p, g, 1) == pytest.approx(1 / 3)


def test_jaccard_size_mismatch():
    with pytest.raises(DimensionError):
        jaccard(np.zeros((2, 2)), np.zeros((2, 3)), 1)


def test_sequence_score_skips_first_frame():
    gt = [np.array([[1, 2]])] * 3
    pred = [np.array([[0, 0]]), np.array([[1, 2]]), np.array([[1, 0]])]
    s = score_sequence(pred, gt, "x")
    assert s.object_ids == [1, 2]
    assert s.per_frame == {1: [1.0, 1.0], 2: [1.0, 0.0]}
    assert s.mean == pytest.approx(0.75)


def test_frame_count_mismatch():
    with pytest.raises(InputError):
        score_sequence([np.zeros((1, 1))], [np.zeros((1, 1))] * 2)


def test_report_text_is_stable():
    gt = [np.array([[1, 0]])] * 3
    rep = EvalReport([score_sequence(gt, gt, "seq")], fps=12.5)
    text = rep.to_text()
    assert text == rep.to_text()
    assert "global" in text and "1.0000" in text and "fps 12.50" in text
    assert rep.global_mean == 1.0
