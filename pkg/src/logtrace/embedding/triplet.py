"""Triplet loss and online hard-triplet mining."""

from typing import NamedTuple

import numpy as np
import torch

from ..exceptions import InvalidInputError
from ..records import ClassLabel


class Triplet(NamedTuple):
    """Indices into a batch: anchor, positive (same class), negative."""

    anchor: int
    positive: int
    negative: int


def is_valid_triplet(la, lp, ln):
    """Same class for anchor/positive, a different class for the negative,
    and never the other end of the anchor's own log as negative."""
    la, lp, ln = ClassLabel(*la), ClassLabel(*lp), ClassLabel(*ln)
    if la != lp or la == ln:
        return False
    return la.log_id != ln.log_id


def _check_triplet_inputs(a, p, n, margin):
    a, p, n = (np.asarray(v, dtype=np.float64) for v in (a, p, n))
    if not (a.shape == p.shape == n.shape) or a.ndim != 1:
        raise InvalidInputError("anchor, positive and negative must be vectors of equal dimension")
    if not margin > 0:
        raise InvalidInputError("margin must be > 0")
    return a, p, n


def triplet_loss(a, p, n, margin=0.2):
    """``max(0, |a-p|^2 - |a-n|^2 + margin)``."""
    a, p, n = _check_triplet_inputs(a, p, n, margin)
    return max(0.0, float(np.sum((a - p) ** 2) - np.sum((a - n) ** 2) + margin))


def triplet_loss_gradient(a, p, n, margin=0.2):
    """Analytic gradients ``(dL/da, dL/dp, dL/dn)``; zero where the hinge is inactive."""
    a, p, n = _check_triplet_inputs(a, p, n, margin)
    if triplet_loss(a, p, n, margin) <= 0.0:
        z = np.zeros_like(a)
        return z, z.copy(), z.copy()
    return 2 * (n - p), -2 * (a - p), 2 * (a - n)


def squared_distances(emb):
    emb = np.asarray(emb, dtype=np.float64)
    sq = np.sum(emb**2, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * emb @ emb.T
    return np.maximum(d2, 0.0)


def mine_hard_triplets(batch_embeddings, batch_labels, margin=0.2):
    """All valid triplets of the batch whose loss is strictly positive.

    Returned in lexicographic ``(anchor, positive, negative)`` order.
    """
    emb = np.asarray(batch_embeddings, dtype=np.float64)
    labels = [ClassLabel(*lab) for lab in batch_labels]
    if emb.ndim != 2 or len(labels) != len(emb):
        raise InvalidInputError("need one label per embedding row")
    if len(labels) < 3:
        return []
    d2 = squared_distances(emb)
    classes = {lab: k for k, lab in enumerate(dict.fromkeys(labels))}
    cls = np.array([classes[lab] for lab in labels])
    log_index = {log: k for k, log in enumerate(dict.fromkeys(lab.log_id for lab in labels))}
    logs = np.array([log_index[lab.log_id] for lab in labels])
    same = cls[:, None] == cls[None, :]
    pos_ok = same & ~np.eye(len(cls), dtype=bool)
    neg_ok = logs[:, None] != logs[None, :]
    # loss[a, p, n] = d2[a, p] - d2[a, n] + margin
    loss = d2[:, :, None] - d2[:, None, :] + margin
    active = pos_ok[:, :, None] & neg_ok[:, None, :] & (loss > 0)
    return [Triplet(int(a), int(p), int(n)) for a, p, n in np.argwhere(active)]


def batch_triplet_loss(embeddings, triplets, margin=0.2):
    """Mean hinge loss over ``triplets`` for a torch embedding batch."""
    idx = torch.as_tensor(np.asarray(triplets, dtype=np.int64).reshape(-1, 3))
    a, p, n = embeddings[idx[:, 0]], embeddings[idx[:, 1]], embeddings[idx[:, 2]]
    loss = ((a - p) ** 2).sum(1) - ((a - n) ** 2).sum(1) + margin
    return torch.clamp(loss, min=0.0).mean()
