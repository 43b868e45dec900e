"""Triplet-loss embedder with an sklearn-style interface."""

import json
import logging
from pathlib import Path

import numpy as np
import torch
from sklearn.base import BaseEstimator, TransformerMixin

from .. import __version__
from .._validation import check_is_fitted
from ..exceptions import InvalidInputError
from ..records import ClassLabel
from .augment import augment, resize_square
from .network import SqueezeEmbedder
from .schedule import TrainSchedule
from .triplet import batch_triplet_loss, mine_hard_triplets

logger = logging.getLogger(__name__)


def _to_batch(arrays):
    x = torch.from_numpy(np.stack(arrays)).permute(0, 3, 1, 2).float()
    return x / 127.5 - 1.0


class TripletEmbedder(TransformerMixin, BaseEstimator):
    """Learn a ``dim``-dimensional embedding of square patches.

    Each epoch draws class-balanced batches (``classes_per_batch`` classes x
    ``samples_per_class`` patches), augments them, mines every active triplet
    inside the batch and takes an SGD step on their mean loss. The learning
    rate is ``base_lr / decay_factor ** (epoch // decay_period)``.
    """

    def __init__(self, input_side=224, dim=256, epochs=400, base_lr=0.001, decay_factor=10.0,
                 decay_period=120, margin=0.2, classes_per_batch=8, samples_per_class=4,
                 batches_per_epoch=None, momentum=0.9, weight_decay=5e-4, normalize=True,
                 jitter=10, seed=0):
        self.input_side = input_side
        self.dim = dim
        self.epochs = epochs
        self.base_lr = base_lr
        self.decay_factor = decay_factor
        self.decay_period = decay_period
        self.margin = margin
        self.classes_per_batch = classes_per_batch
        self.samples_per_class = samples_per_class
        self.batches_per_epoch = batches_per_epoch
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.normalize = normalize
        self.jitter = jitter
        self.seed = seed

    @property
    def schedule(self):
        return TrainSchedule(
            epochs=self.epochs, base_lr=self.base_lr, decay_factor=self.decay_factor,
            decay_period_epochs=self.decay_period,
            batch_size=self.classes_per_batch * self.samples_per_class, margin=self.margin,
        ).validate()

    def build(self):
        """Fresh, seed-initialized network (also sets ``model_``)."""
        if int(self.input_side) < 32 or int(self.dim) < 2:
            raise InvalidInputError("input_side must be >= 32 and dim >= 2")
        torch.manual_seed(self.seed)
        self.model_ = SqueezeEmbedder(self.dim, self.normalize)
        self.model_.eval()
        return self.model_

    def fit(self, X, y):
        """Train on patches ``X`` with ClassLabels ``y``."""
        labels = [ClassLabel(*lab) for lab in y]
        if len(labels) != len(X):
            raise InvalidInputError("X and y differ in length")
        by_class = {}
        for i, lab in enumerate(labels):
            by_class.setdefault(lab, []).append(i)
        if len(by_class) < 2:
            raise InvalidInputError("training needs at least 2 classes")
        schedule = self.schedule
        model = self.build()

        # pre-shrink once; augmentation then works on small arrays
        work_side = 2 * (self.input_side + self.jitter)
        pixels = [resize_square(p, work_side) if getattr(p, "pixels", p).shape[0] > work_side else getattr(p, "pixels", p)
                  for p in X]

        classes = list(by_class)
        anchor_classes = [c for c in classes if len(by_class[c]) >= 2] or classes
        n_cls = min(self.classes_per_batch, len(classes))
        n_per = self.samples_per_class
        n_batches = self.batches_per_epoch or max(1, int(np.ceil(len(X) / (n_cls * n_per))))

        params = [p for p in model.parameters() if p.requires_grad]
        opt = torch.optim.SGD(params, lr=schedule.base_lr, momentum=self.momentum, weight_decay=self.weight_decay)
        rng = np.random.default_rng(self.seed)
        self.lr_trace_, self.loss_history_, self.active_history_ = [], [], []
        for epoch in range(schedule.epochs):
            lr = schedule.learning_rate(epoch)
            for group in opt.param_groups:
                group["lr"] = lr
            self.lr_trace_.append(lr)
            model.train()
            losses, actives = [], 0
            for _ in range(n_batches):
                n_anchor = min(len(anchor_classes), n_cls)
                picked = [anchor_classes[k] for k in rng.choice(len(anchor_classes), size=n_anchor, replace=False)]
                if n_anchor < n_cls:
                    rest = [c for c in classes if c not in picked]
                    picked += [rest[k] for k in rng.choice(len(rest), size=n_cls - n_anchor, replace=False)]
                idx, blabels = [], []
                for c in picked:
                    members = by_class[c]
                    take = rng.choice(members, size=n_per, replace=len(members) < n_per)
                    idx += [int(t) for t in take]
                    blabels += [c] * n_per
                seeds = rng.integers(0, 2**31 - 1, size=len(idx))
                batch = _to_batch([augment(pixels[i], int(s), self.input_side, self.jitter) for i, s in zip(idx, seeds)])
                emb = model(batch)
                triplets = mine_hard_triplets(emb.detach().double().numpy(), blabels, schedule.margin)
                if not triplets:
                    continue
                loss = batch_triplet_loss(emb, triplets, schedule.margin)
                opt.zero_grad()
                loss.backward()
                opt.step()
                losses.append(float(loss.detach()))
                actives += len(triplets)
            self.loss_history_.append(float(np.mean(losses)) if losses else 0.0)
            self.active_history_.append(actives)
            logger.debug("epoch %d lr %.2g loss %.4f active %d", epoch, lr, self.loss_history_[-1], actives)
        model.eval()
        return self

    def transform(self, X):
        """Embeddings as an ``(n, dim)`` float64 array (unit rows if normalizing)."""
        check_is_fitted(self, "model_")
        single = hasattr(X, "pixels") or (isinstance(X, np.ndarray) and X.ndim == 3)
        X = [X] if single else list(X)
        out = []
        with torch.no_grad():
            for start in range(0, len(X), 64):
                chunk = [resize_square(p, self.input_side) for p in X[start:start + 64]]
                out.append(self.model_(_to_batch(chunk)).double().numpy())
        emb = np.concatenate(out) if out else np.zeros((0, self.dim))
        if self.normalize:
            emb /= np.maximum(np.linalg.norm(emb, axis=1, keepdims=True), 1e-12)
        return emb[0] if single else emb

    @staticmethod
    def compare(a, b):
        """Euclidean distance between two embeddings."""
        return float(np.linalg.norm(np.asarray(a, float) - np.asarray(b, float)))

    def save(self, path):
        check_is_fitted(self, "model_")
        path = Path(path)
        torch.save(self.model_.state_dict(), path)
        sidecar = {"input_side": self.input_side, "dim": self.dim, "version": __version__, "params": self.get_params()}
        with open(str(path) + ".json", "w") as fh:
            json.dump(sidecar, fh, indent=1)
        return path

    @classmethod
    def load(cls, path):
        with open(str(path) + ".json") as fh:
            sidecar = json.load(fh)
        est = cls(**sidecar["params"])
        model = est.build()
        model.load_state_dict(torch.load(path, weights_only=True))
        model.eval()
        return est


EmbedderModel = TripletEmbedder


def build_embedder(input_side=224, dim=256, seed=0, **params):
    est = TripletEmbedder(input_side=input_side, dim=dim, seed=seed, **params)
    est.build()
    return est


def train_embedder(model, train_set, schedule=None, seed=None):
    """Train a copy of ``model``'s configuration on ``[(patch, label), ...]``.

    With ``schedule.epochs == 0`` the seed-initialized model is returned as is.
    """
    params = model.get_params()
    if schedule is not None:
        schedule.validate()
        params.update(epochs=schedule.epochs, base_lr=schedule.base_lr, decay_factor=schedule.decay_factor,
                      decay_period=schedule.decay_period_epochs, margin=schedule.margin)
    if seed is not None:
        params["seed"] = seed
    patches, labels = zip(*train_set) if train_set else ((), ())
    return TripletEmbedder(**params).fit(list(patches), list(labels))


def embed(model, patch):
    return model.transform(patch)
