import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from satrrm.demand import default_demand_params, generate_demands
from satrrm.metrics import (
    EvalRecord,
    balanced_accuracy,
    capacity_report,
    evaluate,
    flexible_accuracy,
    nmse,
    recall_per_class,
    sufficient,
    write_beam_csv,
    write_class_csv,
    write_report,
)
from satrrm.optimizer import SystemScenario, label_dataset
from satrrm.pipeline import oracle_records

try:
    from sklearn import metrics as skm
except ImportError:  # optional test oracle
    skm = None

C_MAX = 1033.4e6


def rec(i, true, pred, R=(1.0,), C=(1.0,)):
    return EvalRecord(i, true, pred, np.array(R, dtype=float), np.array(C, dtype=float))


def confusion(matrix):
    out, i = [], 0
    for t, row in enumerate(matrix):
        for p, n in enumerate(row):
            for _ in range(n):
                out.append(rec(i, t, p))
                i += 1
    return out


def test_recall_examples():
    assert recall_per_class([rec(0, 1, 1), rec(1, 2, 2)]) == {1: 1.0, 2: 1.0}
    three = [rec(0, 2, 2), rec(1, 2, 0), rec(2, 2, 1)]
    assert recall_per_class(three)[2] == pytest.approx(1 / 3)
    r = recall_per_class(confusion([[5, 0], [2, 3]]))
    assert r == {0: 1.0, 1: pytest.approx(0.6)}


def test_balanced_accuracy_examples():
    assert balanced_accuracy(confusion([[5, 0], [2, 3]])) == pytest.approx(0.8)
    assert balanced_accuracy(confusion([[4, 0], [0, 7]])) == 1.0
    assert balanced_accuracy(confusion([[5, 0], [5, 0]])) == 0.5


@pytest.mark.skipif(skm is None, reason="scikit-learn not installed")
@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5)), min_size=1, max_size=60))
def test_balanced_accuracy_matches_sklearn(pairs):
    records = [rec(i, t, p) for i, (t, p) in enumerate(pairs)]
    y_true, y_pred = zip(*pairs)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        ref = skm.balanced_accuracy_score(y_true, y_pred)
    assert balanced_accuracy(records) == pytest.approx(ref, abs=1e-12)


def test_sufficiency_rule():
    assert sufficient([500e6], [400e6], C_MAX).tolist() == [True]
    assert sufficient([400e6], [500e6], C_MAX).tolist() == [False]
    assert sufficient([C_MAX], [2e9], C_MAX).tolist() == [True]
    assert sufficient([667e6], [2e9], C_MAX).tolist() == [False]


def test_flexible_accuracy_examples():
    per, mean = flexible_accuracy([rec(0, 0, 0, R=(1, 2), C=(1, 1))], C_MAX)
    assert per == {0: 0.5} and mean == 0.5
    # Wrong class, but every beam covered: counts fully.
    per, _ = flexible_accuracy([rec(0, 0, 3, R=(1e8, 2e8), C=(5e8, 5e8))], C_MAX)
    assert per[0] == 1.0
    perfect = [rec(i, i % 3, i % 3, R=(1e8,), C=(2e8,)) for i in range(9)]
    assert flexible_accuracy(perfect, C_MAX)[0] == {0: 1.0, 1: 1.0, 2: 1.0}


def test_nmse_examples():
    assert nmse([rec(0, 0, 0, R=(3, 4), C=(3, 4))])[0] == [0.0]
    assert nmse([rec(0, 0, 0, R=(1,), C=(2,))])[0] == [1.0]
    assert nmse([rec(0, 0, 0, R=(1, 1), C=(1, 0))])[0] == [0.5]
    values, avg, skipped = nmse([rec(0, 0, 0, R=(0, 0), C=(1, 1)), rec(1, 0, 0, R=(1,), C=(2,))])
    assert values == [1.0] and avg == 1.0 and skipped == 1


def test_capacity_report_examples():
    req, off = capacity_report([rec(0, 0, 0, R=(1, 2), C=(3, 4))])
    assert (req, off) == ([1.0, 2.0], [3.0, 4.0])
    req, off = capacity_report([rec(0, 0, 0, R=(1, 2), C=(3, 4)), rec(1, 0, 0, R=(3, 4), C=(5, 8))])
    assert (req, off) == ([2.0, 3.0], [4.0, 6.0])


def _random_records(seed, n=80, B=3, L=5):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        R = rng.uniform(0, 1.2e9, B)
        true = int(rng.integers(L))
        pred = true if rng.random() < 0.5 else int(rng.integers(L))
        # True-class samples get a sufficient configuration, like an optimal label.
        C = np.where(R > C_MAX, C_MAX, R * 1.1) if pred == true else rng.uniform(2e8, C_MAX, B)
        out.append(EvalRecord(i, true, pred, R, C))
    return out


@pytest.mark.parametrize("seed", range(5))
def test_flexible_at_least_recall(seed):
    r = evaluate(_random_records(seed), C_MAX)
    for c in r.classes:
        assert r.flexible_accuracy[c] >= r.recall[c]


@pytest.mark.parametrize("seed", range(3))
def test_permutation_invariance(seed):
    records = _random_records(seed)
    perm = [records[i] for i in np.random.default_rng(seed + 10).permutation(len(records))]
    assert evaluate(records, C_MAX).to_dict() == evaluate(perm, C_MAX).to_dict()


def test_report_ranges_and_absent_classes():
    r = evaluate(_random_records(0), C_MAX, label_classes=range(8))
    assert r.absent_classes == [5, 6, 7]
    for v in [r.balanced_accuracy, r.flexible_balanced_accuracy, *r.recall.values(), *r.flexible_accuracy.values()]:
        assert 0.0 <= v <= 1.0
    assert all(v >= 0 and np.isfinite(v) for v in r.nmse)


def test_oracle_self_evaluation():
    s = SystemScenario.default()
    demands = generate_demands(default_demand_params(0), s.geometry, 300)
    labels = label_dataset(demands, s)
    kept = [d for d in demands if d.sample_id not in set(labels.infeasible)]
    records = oracle_records(kept, labels)
    r = evaluate(records, s.c_max)
    assert r.balanced_accuracy == 1.0
    assert r.flexible_balanced_accuracy == 1.0
    own = [np.sum((a.offered - d.requested) ** 2) / np.sum(d.requested**2) for a, d in zip(labels.assignments, kept)]
    assert r.nmse_avg == pytest.approx(np.mean(own), abs=1e-12)
    req, off = np.array(r.mean_requested), np.array(r.mean_offered)
    if not any((d.requested > s.c_max).any() for d in kept):
        assert np.all(off >= req)


def test_report_files(tmp_path):
    r = evaluate(_random_records(1), C_MAX)
    write_report(tmp_path / "r.json", r, {"seed": 1})
    d = json.loads((tmp_path / "r.json").read_text())
    assert d["metadata"] == {"seed": 1}
    for key in ("balanced_accuracy", "flexible_balanced_accuracy", "nmse_avg", "recall", "mean_offered"):
        assert key in d
    write_class_csv(tmp_path / "c.csv", r)
    write_beam_csv(tmp_path / "b.csv", r)
    assert (tmp_path / "c.csv").read_text().splitlines()[0] == "class_id,count,recall,flexible_accuracy"
    lines = (tmp_path / "b.csv").read_text().splitlines()
    assert lines[0] == "beam,mean_requested_bps,mean_offered_bps" and len(lines) == 4
