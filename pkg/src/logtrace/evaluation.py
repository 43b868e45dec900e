"""Verification protocol: log-level folds, pair labels, EER and cross-validation.

Distances are dissimilarities everywhere (smaller = more alike). Pairs of
images from different ends of the same log are kept in the score records but
flagged ``excluded`` and never enter the EER.
"""

import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np
from sklearn.base import clone

from .exceptions import InvalidInputError, ProtocolError, UndefinedEERError
from .records import AcquisitionId, ClassLabel

logger = logging.getLogger(__name__)

GENUINE, IMPOSTOR, EXCLUDED = "genuine", "impostor", "excluded"


def make_folds(log_ids, k=4, seed=0):
    """Random log -> fold map with fold sizes differing by at most one."""
    logs = sorted(set(log_ids))
    if len(logs) < k:
        raise InvalidInputError(f"need at least {k} logs for {k} folds, got {len(logs)}")
    order = np.random.default_rng(seed).permutation(len(logs))
    return {logs[i]: int(pos % k) for pos, i in enumerate(order)}


def label_pair(a, b):
    """``genuine`` for the same log end, ``excluded`` for the other end of the
    same log, ``impostor`` otherwise."""
    if a == b:
        raise InvalidInputError("an acquisition is never compared with itself")
    if a.log_id != b.log_id:
        return IMPOSTOR
    return GENUINE if a.end == b.end else EXCLUDED


@dataclass
class ScoreRecord:
    probe_id: AcquisitionId
    gallery_id: AcquisitionId
    distance: float
    label: str
    error: str = ""


def score_fold(fold_items, comparator):
    """Score every unordered pair of ``[(AcquisitionId, feature), ...]`` once.

    Comparator failures yield a record with NaN distance and an error note.
    """
    items = list(fold_items)
    if not items:
        raise InvalidInputError("fold is empty")
    records = []
    n_failed = 0
    for i in range(len(items)):
        id_i, f_i = items[i]
        for j in range(i + 1, len(items)):
            id_j, f_j = items[j]
            label = label_pair(id_i, id_j)
            try:
                d = float(comparator(f_i, f_j))
                err = ""
            except Exception as exc:  # noqa: BLE001 - any comparator failure drops the pair
                d, err = float("nan"), f"{type(exc).__name__}: {exc}"
                n_failed += 1
            records.append(ScoreRecord(id_i, id_j, d, label, err))
    if n_failed:
        logger.warning("%d of %d comparisons failed and are dropped from the EER", n_failed, len(records))
    return records


def split_scores(records):
    """Genuine and impostor distances of the usable records."""
    gen = [r.distance for r in records if r.label == GENUINE and not r.error]
    imp = [r.distance for r in records if r.label == IMPOSTOR and not r.error]
    return gen, imp


def error_rates(genuine, impostor):
    """FAR/FRR at ``-inf`` and at every distinct observed distance.

    FAR(t) = share of impostor distances <= t, FRR(t) = share of genuine
    distances > t.
    """
    gen = np.sort(np.asarray(genuine, dtype=np.float64))
    imp = np.sort(np.asarray(impostor, dtype=np.float64))
    thresholds = np.unique(np.concatenate([gen, imp]))
    far = np.searchsorted(imp, thresholds, side="right") / imp.size
    frr = 1.0 - np.searchsorted(gen, thresholds, side="right") / gen.size
    return (np.concatenate([[-np.inf], thresholds]), np.concatenate([[0.0], far]),
            np.concatenate([[1.0], frr]))


def compute_eer(genuine, impostor):
    """Equal error rate with linear interpolation of the FAR/FRR crossing."""
    if len(genuine) == 0 or len(impostor) == 0:
        raise UndefinedEERError("EER needs nonempty genuine and impostor lists")
    _, far, frr = error_rates(genuine, impostor)
    diff = far - frr  # nondecreasing, starts at -1, ends >= 0
    k = int(np.argmax(diff >= 0))
    if diff[k] == 0:
        return float(far[k])
    lam = -diff[k - 1] / (diff[k] - diff[k - 1])
    return float(far[k - 1] + lam * (far[k] - far[k - 1]))


@dataclass
class EERReport:
    method: str
    regime: str
    fold_eers: list
    counts: list  # per fold: {"genuine", "impostor", "excluded", "failed"}
    mean_genuine: list = field(default_factory=list)
    mean_impostor: list = field(default_factory=list)
    fold_seed: Any = None
    dataset: str = ""
    extra: list = field(default_factory=list)

    @property
    def mean_eer(self):
        return float(np.mean(self.fold_eers))

    def to_dict(self):
        d = asdict(self)
        d["mean_eer"] = self.mean_eer
        return d

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            d = json.load(fh)
        d.pop("mean_eer", None)
        return cls(**d)


def _count(records):
    out = {GENUINE: 0, IMPOSTOR: 0, EXCLUDED: 0, "failed": 0}
    for r in records:
        out["failed" if r.error else r.label] += 1
    return out


def _namespaced(sample, tag):
    acq_id, data = sample
    # extra-dataset identities must never merge with the evaluated dataset's classes
    return AcquisitionId(acq_id.dataset_tag, f"{tag}:{acq_id.log_id}", acq_id.end, acq_id.acq_index), data


def cross_validate(samples, folds, method, extra_train=None, method_name=None, fold_seed=None,
                   return_records=False):
    """k-fold verification experiment.

    ``samples`` is ``[(AcquisitionId, x), ...]``; ``method`` is an unfitted
    estimator with ``fit(X, labels)``, ``transform(X)`` and ``compare(f1, f2)``.
    For each fold a clone is fitted on the other folds (plus ``extra_train``,
    the "SqNet+" regime) and only the held-out fold's items are compared to
    each other.
    """
    samples = list(samples)
    k = max(folds.values()) + 1
    extra = [_namespaced(s, "extra") for s in (extra_train or [])]
    regime = "SqNet+" if extra_train else "SqNet"
    report = EERReport(method=method_name or type(method).__name__, regime=regime, fold_eers=[], counts=[],
                       fold_seed=fold_seed, extra=sorted({s[0].dataset_tag for s in extra}))
    all_records = []
    for f in range(k):
        test = [s for s in samples if folds[s[0].log_id] == f]
        train = [s for s in samples if folds[s[0].log_id] != f] + extra
        if not test:
            raise ProtocolError(f"fold {f} is empty", fold=f)
        est = clone(method)
        est.fit([x for _, x in train], [ClassLabel(a.log_id, a.end) for a, _ in train])
        feats = est.transform([x for _, x in test])
        records = score_fold([(a, feat) for (a, _), feat in zip(test, feats)], est.compare)
        gen, imp = split_scores(records)
        if not gen or not imp:
            raise ProtocolError(f"fold {f} has no {'genuine' if not gen else 'impostor'} pairs", fold=f)
        report.fold_eers.append(compute_eer(gen, imp))
        report.counts.append(_count(records))
        report.mean_genuine.append(float(np.mean(gen)))
        report.mean_impostor.append(float(np.mean(imp)))
        logger.info("fold %d: EER %.4f (%d genuine, %d impostor)", f, report.fold_eers[-1], len(gen), len(imp))
        all_records += records
    return (report, all_records) if return_records else report


def write_scores_csv(records, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["probe_id", "gallery_id", "distance", "label"])
        for r in records:
            w.writerow([str(r.probe_id), str(r.gallery_id), repr(r.distance), r.label])


def read_scores_csv(path):
    with open(path, newline="") as fh:
        return [
            ScoreRecord(AcquisitionId.parse(row["probe_id"]), AcquisitionId.parse(row["gallery_id"]),
                        float(row["distance"]), row["label"])
            for row in csv.DictReader(fh)
        ]


def render_table(results, datasets=None):
    """Text table of mean EERs in percent; ``results[method][dataset] = eer``."""
    datasets = datasets or sorted({d for row in results.values() for d in row})
    width = max([len("Methods")] + [len(m) for m in results]) + 2
    lines = ["Methods".ljust(width) + "".join(d.rjust(10) for d in datasets)]
    lines.append("-" * len(lines[0]))
    for method, row in results.items():
        cells = "".join((f"{100 * row[d]:.1f}" if d in row else "-").rjust(10) for d in datasets)
        lines.append(method.ljust(width) + cells)
    return "\n".join(lines) + "\n"
