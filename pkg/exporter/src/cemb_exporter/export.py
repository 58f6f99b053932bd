"""Feature extraction: transformer hidden states pooled to word vectors.

The exporter never fine-tunes anything: the named model runs in eval mode
and its (by default final) hidden layer is pooled over the word pieces of
each corpus token, mean or first-piece. Output is a canonical CEMB file,
written atomically, that downstream training consumes as-is.
"""

from __future__ import annotations

import logging
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from . import cemb
from .cemb import CembFormatError
from .corpus import CorpusFormatError, CorpusSentence, read_corpus

logger = logging.getLogger("cemb_exporter")

POOLINGS = ("mean", "first")

# The embedding identity is configuration: any model-hub identifier or local
# path works. These shorthands name the usual BERT-family baselines.
MODEL_PRESETS = {
    "bert-base": "bert-base-uncased",
    "biobert": "dmis-lab/biobert-base-cased-v1.1",
    "roberta": "roberta-base",
}


class ExportError(RuntimeError):
    pass


@dataclass(frozen=True)
class ExportSpec:
    corpus_path: str
    model: str
    out_path: str
    pooling: str = "mean"
    layer: int = -1  # index into hidden_states; -1 = final layer
    batch_size: int = 8

    def __post_init__(self):
        if self.pooling not in POOLINGS:
            raise ExportError(f"pooling must be one of {POOLINGS}, got {self.pooling!r}")
        if self.batch_size < 1:
            raise ExportError(f"batch_size must be >= 1, got {self.batch_size}")


def resolve_model_id(name: str) -> str:
    return MODEL_PRESETS.get(name, name)


def _load_model(model_id: str):
    from transformers import AutoModel, AutoTokenizer

    try:
        tokenizer = AutoTokenizer.from_pretrained(model_id)
        model = AutoModel.from_pretrained(model_id)
    except Exception as exc:
        raise ExportError(f"cannot load model {model_id!r}: {exc}") from exc
    try:
        tokenizer([["probe"]], is_split_into_words=True)
    except Exception:
        # BPE tokenizers (RoBERTa family) need the prefix-space flag for
        # pre-tokenized input
        tokenizer = AutoTokenizer.from_pretrained(model_id, add_prefix_space=True)
    if not tokenizer.is_fast:
        raise ExportError(
            f"model {model_id!r} has no fast tokenizer; word alignment needs one"
        )
    model.eval()
    return tokenizer, model


def _max_length(tokenizer, model) -> int | None:
    limit = getattr(model.config, "max_position_embeddings", None)
    declared = tokenizer.model_max_length
    if declared and declared < int(1e12):
        limit = min(limit, declared) if limit else declared
    return limit


def _pool_rows(sentence: CorpusSentence, hidden: torch.Tensor, word_ids, pooling: str) -> np.ndarray:
    pieces: dict[int, list[int]] = {}
    for position, word in enumerate(word_ids):
        if word is not None:
            pieces.setdefault(word, []).append(position)
    rows = np.zeros((len(sentence.tokens), hidden.shape[-1]), dtype=np.float32)
    for word in range(len(sentence.tokens)):
        positions = pieces.get(word)
        if not positions:
            logger.warning(
                "sentence %r: token %d (%r) maps to no word pieces; writing zeros",
                sentence.id, word, sentence.tokens[word],
            )
            continue
        if pooling == "first":
            rows[word] = hidden[positions[0]].numpy()
        else:
            rows[word] = hidden[positions].mean(dim=0).numpy()
    return rows


def export(spec: ExportSpec) -> Path:
    """Run the export end to end and return the output path.

    One CEMB record per corpus sentence, row count equal to the corpus
    token count, dim equal to the model hidden size. Deterministic given
    (model weights, spec): sentences are processed in canonical id order
    and inference runs under no_grad in eval mode.
    """
    sentences = read_corpus(spec.corpus_path)
    sentences.sort(key=lambda s: s.id.encode("utf-8"))
    tokenizer, model = _load_model(resolve_model_id(spec.model))
    dim = int(model.config.hidden_size)
    max_length = _max_length(tokenizer, model)

    records: dict[str, np.ndarray] = {}
    with torch.no_grad():
        for start in range(0, len(sentences), spec.batch_size):
            batch = sentences[start : start + spec.batch_size]
            encoded = tokenizer(
                [list(s.tokens) for s in batch],
                is_split_into_words=True,
                padding=True,
                truncation=max_length is not None,
                max_length=max_length,
                return_tensors="pt",
            )
            if spec.layer == -1:
                hidden = model(**encoded).last_hidden_state
            else:
                states = model(**encoded, output_hidden_states=True).hidden_states
                hidden = states[spec.layer]
            for i, sentence in enumerate(batch):
                records[sentence.id] = _pool_rows(
                    sentence, hidden[i], encoded.word_ids(i), spec.pooling
                )

    payload = cemb.encode(dim, records)
    out_path = Path(spec.out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=out_path.parent, suffix=".cemb.tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp_name, out_path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    logger.info("wrote %d records (dim %d) to %s", len(records), dim, out_path)
    return out_path


@dataclass
class Diagnostics:
    checked: int
    problems: list[str]

    @property
    def ok(self) -> bool:
        return not self.problems

    def summary(self) -> str:
        if self.ok:
            return f"OK: {self.checked} sentences aligned"
        lines = [f"{len(self.problems)} problem(s) over {self.checked} sentences:"]
        lines.extend(f"  - {p}" for p in self.problems)
        return "\n".join(lines)


def verify_alignment(corpus_path, cemb_path) -> Diagnostics:
    """Check id coverage, per-sentence row counts, and finiteness.

    All findings are reported in the returned diagnostics; nothing is
    raised past this boundary, so the exit status is usable in CI.
    """
    problems: list[str] = []
    checked = 0
    try:
        sentences = read_corpus(corpus_path)
    except (OSError, CorpusFormatError) as exc:
        return Diagnostics(0, [f"cannot read corpus: {exc}"])
    try:
        with open(cemb_path, "rb") as fh:
            _, records = cemb.decode(fh.read())
    except (OSError, CembFormatError) as exc:
        return Diagnostics(0, [f"cannot read embedding file: {exc}"])

    corpus_ids = {s.id for s in sentences}
    for sentence in sentences:
        checked += 1
        matrix = records.get(sentence.id)
        if matrix is None:
            problems.append(f"missing id {sentence.id!r} in embedding file")
            continue
        if matrix.shape[0] != len(sentence.tokens):
            problems.append(
                f"sentence {sentence.id!r}: {matrix.shape[0]} rows for "
                f"{len(sentence.tokens)} tokens"
            )
        if not np.all(np.isfinite(matrix)):
            problems.append(f"sentence {sentence.id!r}: non-finite values")
    for extra in sorted(set(records) - corpus_ids):
        problems.append(f"embedding file has id {extra!r} not present in the corpus")
    return Diagnostics(checked, problems)
