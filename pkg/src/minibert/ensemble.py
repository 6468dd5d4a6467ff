"""Train N member classifiers and combine their predictions by voting.

Members share initial weights by default; diversity comes from distinct
per-member batch-shuffle seeds.  Majority voting is the default rule;
average-probability voting is also available.  Ties break toward the
lowest class index (with odd member counts and binary labels the
majority rule never ties).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import TextIO

import numpy as np

from .errors import ConfigError, TrainingError
from .model import ClassifierModel, ModelConfig, init_model
from .tokenizer import EncodedExample
from .training import TrainConfig, TrainRun, train

MAJORITY = "majority"
AVERAGE_PROBABILITY = "average_probability"
VOTING_RULES = (MAJORITY, AVERAGE_PROBABILITY)


@dataclass
class EnsembleConfig:
    """Shape of the ensemble: member count, member model, seeds, voting rule."""

    member_model_config: ModelConfig
    n_members: int = 3
    shared_init: bool = True
    member_shuffle_seeds: list[int] = field(default_factory=lambda: [1, 2, 3])
    voting: str = MAJORITY

    def __post_init__(self):
        if self.n_members < 1:
            raise ConfigError(f"n_members must be >= 1, got {self.n_members}")
        if len(self.member_shuffle_seeds) != self.n_members:
            raise ConfigError(
                f"need exactly {self.n_members} member_shuffle_seeds, "
                f"got {len(self.member_shuffle_seeds)}"
            )
        if self.voting not in VOTING_RULES:
            raise ConfigError(f"voting must be one of {VOTING_RULES}, got {self.voting!r}")


@dataclass
class EnsemblePrediction:
    labels: np.ndarray
    member_labels: np.ndarray = field(repr=False)  # (N, B)
    disagreement_count: int = 0


class EnsembleModel:
    """N trained members plus the configured voting rule."""

    def __init__(self, members: list[ClassifierModel], config: EnsembleConfig):
        if len(members) != config.n_members:
            raise ConfigError(
                f"expected {config.n_members} members, got {len(members)}"
            )
        first = members[0].config
        for m in members[1:]:
            if replace(m.config, init_seed=first.init_seed) != first:
                raise ConfigError("ensemble members must share one model shape")
        self.members = members
        self.config = config

    def predict(self, examples: list[EncodedExample]) -> EnsemblePrediction:
        return predict_ensemble(self, examples)


def train_ensemble(
    train_set: list[EncodedExample],
    val_set: list[EncodedExample],
    ensemble_config: EnsembleConfig,
    train_config: TrainConfig,
    parallel: bool = False,
    log_stream: TextIO | None = None,
) -> tuple[EnsembleModel, list[TrainRun]]:
    """Train every member independently on the same split.

    With ``shared_init`` all members start from identical parameters
    (same init seed); otherwise each member's init seed is offset by its
    index.  Each member shuffles batches with its own seed.  Members run
    sequentially unless ``parallel`` is set; either way the returned runs
    carry per-member wall-clock times so summed sequential-equivalent
    cost can be reported.
    """
    base = ensemble_config.member_model_config

    def build_and_train(index: int) -> TrainRun:
        cfg = base if ensemble_config.shared_init else replace(
            base, init_seed=base.init_seed + index
        )
        member = init_model(cfg)
        member_train = replace(
            train_config, shuffle_seed=ensemble_config.member_shuffle_seeds[index]
        )
        try:
            return train(
                member,
                train_set,
                val_set,
                member_train,
                log_stream=log_stream,
                log_prefix=f"member={index} ",
            )
        except Exception as err:
            raise TrainingError(f"member {index}: {err}") from err

    if parallel and ensemble_config.n_members > 1:
        with ThreadPoolExecutor(max_workers=ensemble_config.n_members) as pool:
            runs = list(pool.map(build_and_train, range(ensemble_config.n_members)))
    else:
        runs = [build_and_train(i) for i in range(ensemble_config.n_members)]
    ensemble = EnsembleModel([run.model for run in runs], ensemble_config)
    return ensemble, runs


def majority_vote(member_labels) -> np.ndarray:
    """Per example, the class with the most votes; ties break to the
    lowest class index."""
    votes = _validated_votes(member_labels)
    num_classes = int(votes.max()) + 1
    counts = np.zeros((votes.shape[1], num_classes), dtype=np.int64)
    for member_row in votes:
        counts[np.arange(votes.shape[1]), member_row] += 1
    return np.argmax(counts, axis=1)


def average_vote(member_probabilities) -> np.ndarray:
    """Argmax of the mean member probability vector; same tie-break rule."""
    probs = np.asarray(member_probabilities, dtype=np.float64)
    if probs.ndim != 3:
        raise ValueError(
            f"expected probabilities shaped (members, batch, classes), got {probs.shape}"
        )
    sums = probs.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > 1e-5):
        worst = float(np.abs(sums - 1.0).max())
        raise ValueError(f"probability rows must sum to 1 within 1e-5 (worst off by {worst:g})")
    return np.argmax(probs.mean(axis=0), axis=-1)


def predict_ensemble(
    ensemble: EnsembleModel, examples: list[EncodedExample]
) -> EnsemblePrediction:
    """Vote member predictions into final labels and count disagreements."""
    member_labels = np.stack([m.predict(examples) for m in ensemble.members])
    if ensemble.config.voting == AVERAGE_PROBABILITY:
        member_probs = np.stack([m.predict_proba(examples) for m in ensemble.members])
        labels = average_vote(member_probs)
    else:
        labels = majority_vote(member_labels)
    disagreement = int(np.sum(~np.all(member_labels == member_labels[0], axis=0)))
    return EnsemblePrediction(
        labels=labels, member_labels=member_labels, disagreement_count=disagreement
    )


def _validated_votes(member_labels) -> np.ndarray:
    if isinstance(member_labels, np.ndarray):
        votes = member_labels
    else:
        rows = list(member_labels)
        lengths = {len(row) for row in rows}
        if len(lengths) > 1:
            raise ValueError(f"ragged vote matrix: row lengths {sorted(lengths)}")
        votes = np.asarray(rows)
    if votes.ndim != 2:
        raise ValueError(f"expected votes shaped (members, batch), got {votes.shape}")
    if votes.shape[0] < 1:
        raise ValueError("need at least one member's votes")
    if votes.size and votes.min() < 0:
        raise ValueError("class indices must be nonnegative")
    return votes.astype(np.int64)
