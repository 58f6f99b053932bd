"""Unified sentence-level annotation format.

A corpus is an ordered collection of sentences, each carrying word-level
tokens with dependency heads/relations and a gold C/E/O label per token.
This module loads and validates the newline-delimited JSON corpus format,
produces seeded train/test splits and marker-based subsets, classifies
sentences as explicitly or implicitly causal, and reports dataset
statistics.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources

import numpy as np

LABELS = ("C", "E", "O")  # fixed label order: C < E < O
LABEL_TO_INDEX = {lab: i for i, lab in enumerate(LABELS)}

ROOT_HEAD = -1  # head sentinel marking the dependency root

# Inflected family matched by a bare "cause" lexicon entry.
CAUSE_VARIANTS = ("cause", "caused", "causes", "causing")
_VARIANT_FAMILIES = {"cause": frozenset(CAUSE_VARIANTS)}

# A marker pattern is a tuple of lowercase tokens; a lexicon is a tuple of patterns.
MarkerPattern = tuple[str, ...]
MarkerLexicon = tuple[MarkerPattern, ...]


class CorpusError(ValueError):
    """Malformed corpus data: bad JSON, broken invariants, or invalid arguments."""


@dataclass(frozen=True)
class Token:
    """One word-level token with its dependency attachment."""

    index: int
    surface: str
    head: int  # 0-based head index, or ROOT_HEAD for the root
    rel: str


@dataclass(frozen=True)
class Sentence:
    """A tokenized, dependency-parsed sentence with gold C/E/O labels.

    ``explicit`` is optional provenance metadata carried from converters;
    classification against a marker lexicon is done by
    :func:`classify_explicitness`, never read from this flag.
    """

    id: str
    dataset: str
    tokens: tuple[Token, ...]
    labels: tuple[str, ...]
    explicit: bool | None = None

    def __post_init__(self):
        t = len(self.tokens)
        if t < 1:
            raise CorpusError(f"sentence {self.id!r}: empty token sequence")
        if len(self.labels) != t:
            raise CorpusError(
                f"sentence {self.id!r}: {len(self.labels)} labels for {t} tokens"
            )
        for lab in self.labels:
            if lab not in LABEL_TO_INDEX:
                raise CorpusError(f"sentence {self.id!r}: unknown label {lab!r}")
        roots = 0
        for pos, tok in enumerate(self.tokens):
            if tok.index != pos:
                raise CorpusError(
                    f"sentence {self.id!r}: token index {tok.index} at position {pos}"
                )
            if tok.head == ROOT_HEAD:
                roots += 1
            elif not 0 <= tok.head < t:
                raise CorpusError(
                    f"sentence {self.id!r}: head {tok.head} out of range [0, {t})"
                )
        self._check_acyclic()
        if roots != 1:
            raise CorpusError(f"sentence {self.id!r}: {roots} roots, expected exactly 1")

    def _check_acyclic(self):
        # Each token has one head, so any cycle is reachable by walking up.
        state = [0] * len(self.tokens)  # 0 unvisited, 1 on path, 2 done
        for start in range(len(self.tokens)):
            if state[start]:
                continue
            path = []
            node = start
            while node != ROOT_HEAD and state[node] == 0:
                state[node] = 1
                path.append(node)
                node = self.tokens[node].head
            if node != ROOT_HEAD and state[node] == 1:
                raise CorpusError(f"sentence {self.id!r}: cyclic head graph at token {node}")
            for n in path:
                state[n] = 2

    def __len__(self) -> int:
        return len(self.tokens)

    def surfaces(self) -> tuple[str, ...]:
        return tuple(tok.surface for tok in self.tokens)


@dataclass(frozen=True)
class Corpus:
    """An ordered, nonempty collection of sentences with distinct ids."""

    name: str
    sentences: tuple[Sentence, ...]

    def __post_init__(self):
        if not self.sentences:
            raise CorpusError(f"corpus {self.name!r} is empty")
        seen = set()
        for sent in self.sentences:
            if sent.id in seen:
                raise CorpusError(f"corpus {self.name!r}: duplicate sentence id {sent.id!r}")
            seen.add(sent.id)

    def __len__(self) -> int:
        return len(self.sentences)

    def __iter__(self):
        return iter(self.sentences)


@dataclass(frozen=True)
class CorpusStats:
    n_sentences: int
    pct_implicit: float
    mean_cause_len: float
    mean_effect_len: float


def _sentence_from_record(record: dict, line_no: int) -> Sentence:
    required = ("id", "dataset", "tokens", "labels", "heads", "rels")
    for key in required:
        if key not in record:
            raise CorpusError(f"line {line_no}: missing key {key!r}")
    surfaces, heads, rels = record["tokens"], record["heads"], record["rels"]
    if not (len(surfaces) == len(heads) == len(rels)):
        raise CorpusError(
            f"line {line_no}: sentence {record['id']!r} has mismatched "
            f"tokens/heads/rels lengths {len(surfaces)}/{len(heads)}/{len(rels)}"
        )
    tokens = tuple(
        Token(index=i, surface=str(s), head=int(h), rel=str(r))
        for i, (s, h, r) in enumerate(zip(surfaces, heads, rels))
    )
    explicit = record.get("explicit")
    if explicit is not None and not isinstance(explicit, bool):
        raise CorpusError(f"line {line_no}: 'explicit' must be a boolean")
    try:
        return Sentence(
            id=str(record["id"]),
            dataset=str(record["dataset"]),
            tokens=tokens,
            labels=tuple(str(lab) for lab in record["labels"]),
            explicit=explicit,
        )
    except CorpusError as exc:
        raise CorpusError(f"line {line_no}: {exc}") from None


def parse_corpus(data: bytes, name: str | None = None) -> Corpus:
    """Parse a UTF-8 newline-delimited JSON corpus file.

    One sentence per line with keys id, dataset, tokens, labels, heads
    (-1 = root), rels, and optional explicit. Raises :class:`CorpusError`
    with the offending line number on malformed input.
    """
    sentences = []
    for line_no, line in enumerate(data.decode("utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"line {line_no}: malformed JSON ({exc.msg})") from None
        if not isinstance(record, dict):
            raise CorpusError(f"line {line_no}: expected a JSON object")
        sentences.append(_sentence_from_record(record, line_no))
    if not sentences:
        raise CorpusError("corpus file contains no sentences")
    return Corpus(name=name or sentences[0].dataset, sentences=tuple(sentences))


def serialize_corpus(corpus: Corpus) -> bytes:
    """Serialize to the newline-delimited JSON format (inverse of parse_corpus)."""
    lines = []
    for sent in corpus:
        record = {
            "id": sent.id,
            "dataset": sent.dataset,
            "tokens": list(sent.surfaces()),
            "labels": list(sent.labels),
            "heads": [tok.head for tok in sent.tokens],
            "rels": [tok.rel for tok in sent.tokens],
        }
        if sent.explicit is not None:
            record["explicit"] = sent.explicit
        lines.append(json.dumps(record, ensure_ascii=False))
    return ("\n".join(lines) + "\n").encode("utf-8")


def load_corpus(path, name: str | None = None) -> Corpus:
    with open(path, "rb") as fh:
        return parse_corpus(fh.read(), name=name)


def save_corpus(corpus: Corpus, path) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize_corpus(corpus))


def split_train_test(corpus: Corpus, train_fraction: float, seed: int) -> tuple[Corpus, Corpus]:
    """Seeded exact partition into train/test halves.

    Membership comes from a seeded shuffle; the train half gets
    ``floor(train_fraction * N)`` sentences and the original corpus order
    is preserved within each half.
    """
    if not 0.0 < train_fraction < 1.0:
        raise CorpusError(f"train_fraction must be in (0, 1), got {train_fraction}")
    n = len(corpus)
    if n < 2:
        raise CorpusError(f"corpus {corpus.name!r} has {n} sentence(s); need at least 2 to split")
    n_train = math.floor(train_fraction * n)
    if n_train == 0 or n_train == n:
        raise CorpusError(
            f"train_fraction {train_fraction} leaves an empty half for {n} sentences"
        )
    perm = np.random.default_rng(seed).permutation(n)
    train_idx = sorted(perm[:n_train].tolist())
    test_idx = sorted(perm[n_train:].tolist())
    train = Corpus(corpus.name, tuple(corpus.sentences[i] for i in train_idx))
    test = Corpus(corpus.name, tuple(corpus.sentences[i] for i in test_idx))
    return train, test


def load_lexicon(text: str) -> MarkerLexicon:
    """Parse a marker lexicon: one lowercase pattern per line, '#' comments."""
    patterns = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip().lower()
        if line:
            patterns.append(tuple(line.split()))
    return tuple(patterns)


def default_lexicon() -> MarkerLexicon:
    """The shipped marker lexicon (data/markers.txt); editable package data."""
    text = resources.files("causetag").joinpath("data/markers.txt").read_text("utf-8")
    return load_lexicon(text)


def _token_matches(pattern_tok: str, token: str) -> bool:
    if token == pattern_tok:
        return True
    family = _VARIANT_FAMILIES.get(pattern_tok)
    return family is not None and token in family


def _has_pattern(lower_tokens: list[str], pattern: MarkerPattern) -> bool:
    k = len(pattern)
    if k == 0 or k > len(lower_tokens):
        return False
    for start in range(len(lower_tokens) - k + 1):
        if all(_token_matches(pattern[j], lower_tokens[start + j]) for j in range(k)):
            return True
    return False


def sentence_has_marker(sentence: Sentence, patterns: MarkerLexicon) -> bool:
    lower = [tok.surface.lower() for tok in sentence.tokens]
    return any(_has_pattern(lower, pat) for pat in patterns)


def classify_explicitness(sentence: Sentence, marker_lexicon: MarkerLexicon) -> bool:
    """True (explicit) iff any lexicon pattern matches a contiguous token
    subsequence, case-insensitively. A bare "cause" pattern also matches its
    inflected family (caused/causes/causing)."""
    if not marker_lexicon:
        raise CorpusError("marker lexicon is empty")
    return sentence_has_marker(sentence, marker_lexicon)


def _as_patterns(markers) -> MarkerLexicon:
    return tuple(tuple(str(m).lower().split()) for m in markers)


def subsample_by_marker(corpus: Corpus, required_markers, forbidden_markers, n: int, seed: int) -> Corpus:
    """Seeded uniform sample of n sentences matching >=1 required marker and
    no forbidden marker. Output preserves corpus order.

    Reproduces the CauseNet-style constructions: required {"cause", "caused",
    "causing"} for the cause subsample, and cause variants forbidden with
    other causal markers required for the non-cause subsample.
    """
    required = _as_patterns(required_markers)
    forbidden = _as_patterns(forbidden_markers)
    if not required:
        raise CorpusError("required marker set is empty")
    if set(required) & set(forbidden):
        raise CorpusError("required and forbidden marker sets overlap")
    qualifying = [
        i
        for i, sent in enumerate(corpus)
        if sentence_has_marker(sent, required) and not sentence_has_marker(sent, forbidden)
    ]
    if n > len(qualifying):
        raise CorpusError(
            f"requested {n} sentences but only {len(qualifying)} qualify in {corpus.name!r}"
        )
    rng = np.random.default_rng(seed)
    chosen = rng.choice(len(qualifying), size=n, replace=False)
    keep = sorted(qualifying[i] for i in chosen.tolist())
    return Corpus(corpus.name, tuple(corpus.sentences[i] for i in keep))


def label_spans(labels) -> list[tuple[str, int, int]]:
    """Maximal runs of identical non-O labels as (label, start, end-exclusive)."""
    spans = []
    start = None
    current = None
    for i, lab in enumerate(labels):
        if lab != current:
            if current is not None and current != "O":
                spans.append((current, start, i))
            current, start = lab, i
    if current is not None and current != "O":
        spans.append((current, start, len(labels)))
    return spans


def corpus_stats(corpus: Corpus, marker_lexicon: MarkerLexicon) -> CorpusStats:
    """Sentence count, implicit fraction, and mean C/E span lengths.

    A span is a maximal contiguous run of identical non-O labels; each span
    counts once. All-O sentences contribute nothing to the span means.
    """
    n_implicit = 0
    cause_lens: list[int] = []
    effect_lens: list[int] = []
    for sent in corpus:
        if not classify_explicitness(sent, marker_lexicon):
            n_implicit += 1
        for lab, start, end in label_spans(sent.labels):
            (cause_lens if lab == "C" else effect_lens).append(end - start)
    return CorpusStats(
        n_sentences=len(corpus),
        pct_implicit=n_implicit / len(corpus),
        mean_cause_len=float(np.mean(cause_lens)) if cause_lens else 0.0,
        mean_effect_len=float(np.mean(effect_lens)) if effect_lens else 0.0,
    )
