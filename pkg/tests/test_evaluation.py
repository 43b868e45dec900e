import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import BaseEstimator

from logtrace.evaluation import (
    EXCLUDED,
    GENUINE,
    IMPOSTOR,
    EERReport,
    compute_eer,
    cross_validate,
    label_pair,
    make_folds,
    read_scores_csv,
    render_table,
    score_fold,
    split_scores,
    write_scores_csv,
)
from logtrace.exceptions import InvalidInputError, ProtocolError, UndefinedEERError
from logtrace.records import AcquisitionId

from oracles import brute_force_pair_counts, eer_sweep

scores = st.lists(st.integers(0, 30).map(lambda v: v / 10), min_size=1, max_size=100)


def _ids(n_logs, acqs, tag="T"):
    return [AcquisitionId(tag, f"log{i:03d}", e, a) for i in range(n_logs) for e in ("top", "bottom")
            for a in range(acqs)]


def test_fold_sizes():
    logs = [f"log{i:03d}" for i in range(279)]
    folds = make_folds(logs, 4, seed=3)
    assert sorted(np.bincount(list(folds.values()))) == [69, 70, 70, 70]
    assert make_folds(logs, 4, seed=3) == folds
    assert make_folds(logs, 4, seed=4) != folds
    assert list(np.bincount(list(make_folds(logs[:8], 4, 0).values()))) == [2, 2, 2, 2]


def test_fold_errors():
    with pytest.raises(InvalidInputError):
        make_folds(["a", "b", "c"], 4)


def test_label_pair():
    a = AcquisitionId("X", "log7", "top", 0)
    assert label_pair(a, AcquisitionId("X", "log7", "top", 1)) == GENUINE
    assert label_pair(a, AcquisitionId("X", "log7", "bottom", 0)) == EXCLUDED
    assert label_pair(a, AcquisitionId("X", "log9", "bottom", 0)) == IMPOSTOR
    with pytest.raises(InvalidInputError):
        label_pair(a, a)


@pytest.mark.parametrize("n_logs,acqs", [(2, 2), (4, 3), (3, 1)])
def test_score_fold_counts(n_logs, acqs):
    ids = _ids(n_logs, acqs)
    recs = score_fold([(a, 0.0) for a in ids], lambda x, y: 1.0)
    got = {lab: sum(r.label == lab for r in recs) for lab in (GENUINE, IMPOSTOR, EXCLUDED)}
    assert got == brute_force_pair_counts([(a.log_id, a.end, a.acq_index) for a in ids])
    assert len(recs) == len(ids) * (len(ids) - 1) // 2
    if (n_logs, acqs) == (2, 2):
        assert got == {GENUINE: 4, EXCLUDED: 8, IMPOSTOR: 16}


def test_score_fold_marks_failures():
    ids = _ids(2, 2)

    def flaky(x, y):
        if x == 0:
            raise RuntimeError("boom")
        return float(x + y)

    recs = score_fold([(a, i) for i, a in enumerate(ids)], flaky)
    bad = [r for r in recs if r.error]
    assert len(bad) == len(ids) - 1 and all(math.isnan(r.distance) for r in bad)
    gen, imp = split_scores(recs)
    assert len(gen) + len(imp) + sum(r.label == EXCLUDED and not r.error for r in recs) == len(recs) - len(bad)


def test_eer_examples():
    assert compute_eer([0.1, 0.2], [0.8, 0.9]) == 0.0
    assert compute_eer([0.1, 0.5, 0.5, 0.9], [0.9, 0.5, 0.1, 0.5]) == 0.5
    assert compute_eer([0.1, 0.4, 0.6], [0.3, 0.5, 0.9]) == pytest.approx(
        eer_sweep([0.1, 0.4, 0.6], [0.3, 0.5, 0.9]), abs=1e-9)
    assert compute_eer([0.9], [0.1]) == 1.0
    with pytest.raises(UndefinedEERError):
        compute_eer([], [0.1])


@settings(max_examples=300, deadline=None)
@given(scores, scores)
def test_eer_matches_sweep(gen, imp):
    assert compute_eer(gen, imp) == pytest.approx(eer_sweep(gen, imp), abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(scores, scores)
def test_eer_rank_invariant(gen, imp):
    f = lambda v: np.exp(3 * np.asarray(v)) - 7.0  # noqa: E731
    assert compute_eer(f(gen), f(imp)) == pytest.approx(compute_eer(gen, imp), abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=60, unique=True),
       st.lists(st.floats(1.5, 3), min_size=1, max_size=60, unique=True), st.randoms())
def test_eer_swap_symmetry(gen, imp, rnd):
    # mix the ranges so the lists overlap; the symmetry is exact without ties
    imp = [v - rnd.random() * 2 for v in imp]
    if set(gen) & set(imp):
        return
    neg = lambda v: [-x for x in v]  # noqa: E731
    assert compute_eer(neg(imp), neg(gen)) == pytest.approx(compute_eer(gen, imp), abs=1e-12)


def test_excluded_pairs_do_not_influence():
    rng = np.random.default_rng(0)
    ids = _ids(4, 3)
    feats = {a: rng.normal(size=3) for a in ids}
    recs = score_fold([(a, feats[a]) for a in ids], lambda x, y: float(np.linalg.norm(x - y)))
    kept = [r for r in recs if r.label != EXCLUDED]
    assert compute_eer(*split_scores(recs)) == compute_eer(*split_scores(kept))


class MockMethod(BaseEstimator):
    """Feature = noisy class code; records what it was trained on."""

    def __init__(self, noise=0.1, seed=0):
        self.noise = noise
        self.seed = seed

    def fit(self, X, y):
        self.train_logs_ = {lab.log_id for lab in y}
        return self

    def transform(self, X):
        rng = np.random.default_rng(self.seed)
        return [np.asarray(x, float) + self.noise * rng.normal(size=len(x)) for x in X]

    def compare(self, a, b):
        return float(np.linalg.norm(a - b))


def _mock_samples(n_logs=8, acqs=3):
    rng = np.random.default_rng(5)
    codes = {}
    out = []
    for a in _ids(n_logs, acqs):
        key = (a.log_id, a.end)
        codes.setdefault(key, rng.normal(size=8))
        out.append((a, codes[key]))
    return out


def test_cross_validate_protocol():
    samples = _mock_samples()
    folds = make_folds([a.log_id for a, _ in samples], 4, seed=1)
    report, records = cross_validate(samples, folds, MockMethod(), fold_seed=1, return_records=True)
    assert report.regime == "SqNet" and len(report.fold_eers) == 4
    assert report.mean_eer == pytest.approx(np.mean(report.fold_eers))
    assert all(folds[r.probe_id.log_id] == folds[r.gallery_id.log_id] for r in records)
    for c in report.counts:
        assert c == {GENUINE: 12, IMPOSTOR: 36, EXCLUDED: 18, "failed": 0}
    assert all(g < i for g, i in zip(report.mean_genuine, report.mean_impostor))
    assert report.mean_eer < 0.05


def test_cross_validate_extra_regime(monkeypatch):
    samples = _mock_samples()
    extra = [(AcquisitionId("E", a.log_id, a.end, a.acq_index), x) for a, x in _mock_samples(4, 2)]
    seen = []
    orig = MockMethod.fit

    def spy(self, X, y):
        seen.append({lab.log_id for lab in y})
        return orig(self, X, y)

    monkeypatch.setattr(MockMethod, "fit", spy)
    folds = make_folds([a.log_id for a, _ in samples], 4, seed=1)
    report = cross_validate(samples, folds, MockMethod(), extra_train=extra)
    assert report.regime == "SqNet+" and report.extra == ["E"]
    for f, logs in enumerate(seen):
        assert {l for l in logs if l.startswith("extra:")} == {"extra:" + f"log{i:03d}" for i in range(4)}
        assert not any(folds.get(l) == f for l in logs)


def test_cross_validate_single_class_fold():
    samples = [(a, np.zeros(2)) for a in _ids(4, 2) if a.end == "top"]
    folds = make_folds([a.log_id for a, _ in samples], 4, seed=0)
    with pytest.raises(ProtocolError) as exc:
        cross_validate(samples, folds, MockMethod())
    assert exc.value.fold == 0


def test_report_mean_and_round_trip(tmp_path):
    r = EERReport("m", "SqNet", [0.01, 0.02, 0.03, 0.04], [{}] * 4, fold_seed=7)
    assert r.mean_eer == pytest.approx(0.025)
    r.save(tmp_path / "r.json")
    assert EERReport.load(tmp_path / "r.json") == r


def test_scores_csv_round_trip(tmp_path):
    ids = _ids(2, 2)
    recs = score_fold([(a, i / 3) for i, a in enumerate(ids)], lambda x, y: abs(x - y))
    write_scores_csv(recs, tmp_path / "s.csv")
    back = read_scores_csv(tmp_path / "s.csv")
    assert [(r.probe_id, r.gallery_id, r.distance, r.label) for r in back] == \
        [(r.probe_id, r.gallery_id, r.distance, r.label) for r in recs]


def test_render_table():
    text = render_table({"SqNet": {"MVA": 0.006, "FH": 0.02}, "Iris": {"MVA": 0.1}}, ["MVA", "FH"])
    lines = text.splitlines()
    assert lines[0].split() == ["Methods", "MVA", "FH"]
    assert lines[2].split() == ["SqNet", "0.6", "2.0"]
    assert lines[3].split() == ["Iris", "10.0", "-"]
