"""Mini-batch training with early stopping, seeding, and prediction.

A training run is sequential over batches (the optimizer state is a serial
dependency); all randomness flows from the config seed, so identical
inputs give bit-identical trained taggers.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import neural
from .corpus import LABEL_TO_INDEX, LABELS, Corpus, Sentence
from .metrics import TOKEN_MICRO, ConfusionCounts, report_from_counts
from .neural import TaggerConfig


class TrainError(RuntimeError):
    pass


@dataclass(frozen=True)
class Batch:
    """Padded mini-batch: xs (B, Tmax, d), labels (B, Tmax), mask (B, Tmax)."""

    sentences: tuple[Sentence, ...]
    xs: np.ndarray
    labels: np.ndarray
    mask: np.ndarray

    @property
    def n_tokens(self) -> int:
        return int(self.mask.sum())


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_metric: list[float] = field(default_factory=list)
    stopped_epoch: int = 0
    stop_reason: str = ""  # "early" or "max_epochs"

    def to_dict(self) -> dict:
        return {
            "train_loss": self.train_loss,
            "val_metric": self.val_metric,
            "stopped_epoch": self.stopped_epoch,
            "stop_reason": self.stop_reason,
        }


@dataclass
class TrainedTagger:
    config: TaggerConfig
    params: dict[str, np.ndarray]
    history: TrainHistory
    embedding_dim: int


def _sentence_list(data) -> list[Sentence]:
    if isinstance(data, Corpus):
        return list(data.sentences)
    return list(data)


def make_batches(corpus, store, batch_size: int, seed: int, epoch: int) -> list[Batch]:
    """Chunk a per-epoch reshuffle of the corpus into padded batches.

    The shuffle is seeded by (seed, epoch), so every sentence appears
    exactly once per epoch and the composition is reproducible. Labels in
    padded positions are 0 and masked out.
    """
    sentences = _sentence_list(corpus)
    order = np.random.default_rng([seed, epoch]).permutation(len(sentences))
    batches = []
    for start in range(0, len(sentences), batch_size):
        chunk = [sentences[i] for i in order[start : start + batch_size]]
        mats = [store.lookup(sent) for sent in chunk]
        t_max = max(len(sent) for sent in chunk)
        xs = np.zeros((len(chunk), t_max, store.dim))
        labels = np.zeros((len(chunk), t_max), dtype=np.int64)
        mask = np.zeros((len(chunk), t_max), dtype=bool)
        for i, (sent, mat) in enumerate(zip(chunk, mats)):
            t_len = len(sent)
            xs[i, :t_len] = mat.values.astype(np.float64)
            labels[i, :t_len] = [LABEL_TO_INDEX[lab] for lab in sent.labels]
            mask[i, :t_len] = True
        batches.append(Batch(tuple(chunk), xs, labels, mask))
    return batches


def _holdout(sentences: list[Sentence], validation_fraction: float, seed: int):
    """Seeded validation holdout mirroring the corpus split arithmetic:
    the training part keeps floor((1 - fraction) * N) sentences."""
    n = len(sentences)
    n_train = math.floor((1.0 - validation_fraction) * n)
    if n_train == 0 or n_train == n:
        raise TrainError(
            f"validation_fraction {validation_fraction} leaves an empty part "
            f"for {n} sentences"
        )
    perm = np.random.default_rng(seed).permutation(n)
    train_idx = sorted(perm[:n_train].tolist())
    val_idx = sorted(perm[n_train:].tolist())
    return [sentences[i] for i in train_idx], [sentences[i] for i in val_idx]


def _micro_f1(params, config, sentences, store) -> float:
    counts = ConfusionCounts()
    for sent in sentences:
        pred = _decode(params, config, sent, store)
        counts.add_sequences(pred, sent.labels)
    return report_from_counts(counts, TOKEN_MICRO).f1


def _decode(params, config, sentence: Sentence, store) -> tuple[str, ...]:
    mat = store.lookup(sentence)
    if mat.dim != config.input_dim:
        raise TrainError(
            f"embedding dim {mat.dim} does not match tagger input_dim {config.input_dim}"
        )
    indices = neural.predict_labels(params, config, mat.values.astype(np.float64))
    return tuple(LABELS[i] for i in indices)


def train_tagger(config: TaggerConfig, train_corpus, store, validation_fraction: float = 0.0,
                 log_fn=None) -> TrainedTagger:
    """Train one tagger.

    With validation_fraction > 0, that fraction is held out (seeded from
    the config seed), validation token-F1 is monitored each epoch, and
    training stops once the metric has not improved for `patience` epochs,
    never before min_epochs; the best-validation parameters are returned.
    With validation_fraction = 0 the run is the fixed regime: exactly
    max_epochs, final parameters kept.
    """
    if not 0.0 <= validation_fraction < 0.5:
        raise TrainError(
            f"validation_fraction must be in [0, 0.5), got {validation_fraction}"
        )
    sentences = _sentence_list(train_corpus)
    if not sentences:
        raise TrainError("training corpus is empty")
    if validation_fraction > 0.0:
        train_sents, val_sents = _holdout(sentences, validation_fraction, config.seed)
    else:
        train_sents, val_sents = sentences, []

    params = neural.init_params(config, config.seed)
    state = neural.init_adam(params)
    history = TrainHistory()
    best_metric = -math.inf
    best_epoch = 0
    best_params = params
    stop_reason = "max_epochs"
    stopped_epoch = config.max_epochs

    for epoch in range(1, config.max_epochs + 1):
        loss_sum = 0.0
        token_sum = 0
        for batch_no, batch in enumerate(
            make_batches(train_sents, store, config.batch_size, config.seed, epoch)
        ):
            loss, grads = neural.loss_and_gradients(
                params, config, batch.xs, batch.labels, batch.mask
            )
            if not math.isfinite(loss):
                raise TrainError(
                    f"non-finite loss {loss} at epoch {epoch}, batch {batch_no}"
                )
            params, state = neural.adam_step(params, grads, state, config.learning_rate)
            loss_sum += loss * batch.n_tokens
            token_sum += batch.n_tokens
        history.train_loss.append(loss_sum / token_sum)

        if val_sents:
            metric = _micro_f1(params, config, val_sents, store)
            history.val_metric.append(metric)
            if metric > best_metric:
                best_metric = metric
                best_epoch = epoch
                best_params = {name: block.copy() for name, block in params.items()}
            if log_fn:
                log_fn(
                    f"epoch {epoch}: loss {history.train_loss[-1]:.6f} "
                    f"val_f1 {metric:.4f}"
                )
            if epoch >= config.min_epochs and epoch - best_epoch >= config.patience:
                stop_reason = "early"
                stopped_epoch = epoch
                break
        elif log_fn:
            log_fn(f"epoch {epoch}: loss {history.train_loss[-1]:.6f}")

    history.stopped_epoch = stopped_epoch if stop_reason == "early" else len(history.train_loss)
    history.stop_reason = stop_reason
    final_params = best_params if val_sents else params
    return TrainedTagger(
        config=config,
        params=final_params,
        history=history,
        embedding_dim=store.dim,
    )


def predict(tagger: TrainedTagger, sentence: Sentence, store) -> tuple[str, ...]:
    """Label one sentence: per-token argmax for the linear decoder, Viterbi
    for the CRF. Deterministic given (params, sentence)."""
    return _decode(tagger.params, tagger.config, sentence, store)


def save_history(path, tagger: TrainedTagger) -> None:
    payload = {
        "config": neural.config_to_dict(tagger.config),
        "embedding_dim": tagger.embedding_dim,
        **tagger.history.to_dict(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
