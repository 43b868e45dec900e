"""Triplet-loss embedding stage."""

from .augment import augment, augment_with
from .estimator import EmbedderModel, TripletEmbedder, build_embedder, embed, train_embedder
from .schedule import TrainSchedule
from .triplet import (
    Triplet,
    batch_triplet_loss,
    is_valid_triplet,
    mine_hard_triplets,
    triplet_loss,
    triplet_loss_gradient,
)

__all__ = [
    "EmbedderModel", "TrainSchedule", "Triplet", "TripletEmbedder", "augment", "augment_with",
    "batch_triplet_loss", "build_embedder", "embed", "is_valid_triplet", "mine_hard_triplets",
    "train_embedder", "triplet_loss", "triplet_loss_gradient",
]
