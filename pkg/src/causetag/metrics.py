"""Token-level and phrase-level evaluation.

Token scores are plain per-class precision/recall/F1 with micro or macro
aggregation. The phrase metric collapses every gold cause/effect noun
phrase (tokens linked by "compound" or "amod" dependency edges) to a
single evaluation unit before scoring: a phrase counts as entirely correct
when any of its member tokens carries the right label, because the full
phrase is recoverable from any member through the dependency tree. The
collapse is built from gold labels and gold trees only, so the metric is a
fixed target that predictions cannot shift.
"""

from __future__ import annotations

from dataclasses import dataclass

from .corpus import LABELS, ROOT_HEAD, Corpus, Sentence

TOKEN_MICRO = "TOKEN_MICRO"
TOKEN_MACRO = "TOKEN_MACRO"
PHRASE = "PHRASE"
MODES = (TOKEN_MICRO, TOKEN_MACRO, PHRASE)

# Dependency relations whose edges glue tokens into one phrase unit.
PHRASE_RELATIONS = frozenset({"compound", "amod"})


class MetricsError(ValueError):
    pass


@dataclass(frozen=True)
class ClassScores:
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class EvalReport:
    """Per-class and aggregated precision/recall/F1 for one mode.

    Micro modes pool counts over the C and E classes; macro averages the
    per-class values over all three classes.
    """

    mode: str
    precision: float
    recall: float
    f1: float
    per_class: dict[str, ClassScores]

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "precision": round(self.precision, 6),
            "recall": round(self.recall, 6),
            "f1": round(self.f1, 6),
            "per_class": {
                lab: {
                    "precision": round(cs.precision, 6),
                    "recall": round(cs.recall, 6),
                    "f1": round(cs.f1, 6),
                }
                for lab, cs in self.per_class.items()
            },
        }


@dataclass(frozen=True)
class PhrasePartition:
    """Grouping of token indices into cause/effect phrases.

    ``groups[k]`` holds the member indices of phrase k, ``root_of_group[k]``
    the one member whose dependency head lies outside the group, and
    ``unit_label[k]`` the gold label the phrase stands for. Tokens outside
    every group are singleton units carrying their own label.
    """

    n_tokens: int
    groups: tuple[tuple[int, ...], ...]
    root_of_group: tuple[int, ...]
    unit_label: tuple[str, ...]

    def units(self):
        """All units as (root_index, members, unit_label-or-None), ordered by
        root index; None marks a singleton passthrough unit."""
        grouped = set()
        for members in self.groups:
            grouped.update(members)
        units = [
            (root, members, label)
            for members, root, label in zip(self.groups, self.root_of_group, self.unit_label)
        ]
        units.extend((t, (t,), None) for t in range(self.n_tokens) if t not in grouped)
        units.sort(key=lambda u: u[0])
        return units


def build_phrase_partition(sentence: Sentence, relations=PHRASE_RELATIONS) -> PhrasePartition:
    """Connected components of compound/amod dependency edges.

    A component joined by at least one edge and containing at least one
    gold C or E token becomes a phrase group; components of only-O tokens
    and tokens untouched by phrase edges stay singletons. The group root is
    the unique member whose head lies outside the group; the group label is
    the root's gold label when it is C or E, otherwise the majority non-O
    label of the members (ties go to C).
    """
    t_len = len(sentence)
    adjacency: list[list[int]] = [[] for _ in range(t_len)]
    for tok in sentence.tokens:
        if tok.rel in relations and tok.head != ROOT_HEAD:
            adjacency[tok.index].append(tok.head)
            adjacency[tok.head].append(tok.index)

    seen = [False] * t_len
    groups, roots, labels = [], [], []
    for start in range(t_len):
        if seen[start]:
            continue
        component = []
        stack = [start]
        seen[start] = True
        while stack:
            node = stack.pop()
            component.append(node)
            for neighbor in adjacency[node]:
                if not seen[neighbor]:
                    seen[neighbor] = True
                    stack.append(neighbor)
        component.sort()
        member_set = set(component)
        if len(component) < 2:
            continue  # no phrase edges touch this token: singleton unit
        if not any(sentence.labels[m] != "O" for m in component):
            continue  # only-O component: members stay singleton units
        outside = [m for m in component if sentence.tokens[m].head not in member_set]
        if len(outside) != 1:
            raise MetricsError(
                f"sentence {sentence.id!r}: phrase component {component} has "
                f"{len(outside)} external attachment points, expected 1"
            )
        root = outside[0]
        if sentence.labels[root] != "O":
            label = sentence.labels[root]
        else:
            counts = {lab: 0 for lab in LABELS[:2]}
            for m in component:
                if sentence.labels[m] != "O":
                    counts[sentence.labels[m]] += 1
            label = "C" if counts["C"] >= counts["E"] else "E"
        groups.append(tuple(component))
        roots.append(root)
        labels.append(label)
    return PhrasePartition(
        n_tokens=t_len,
        groups=tuple(groups),
        root_of_group=tuple(roots),
        unit_label=tuple(labels),
    )


def collapse_labels(labels, partition: PhrasePartition) -> tuple[str, ...]:
    """One label per unit, ordered by root token index.

    Singleton units pass their token's label through. A phrase group
    collapses to its unit label when any member carries it (so one correct
    member token earns the whole phrase), and to the root token's label
    otherwise. Applied to the gold labels this returns each group's unit
    label exactly.
    """
    labels = tuple(labels)
    if len(labels) != partition.n_tokens:
        raise MetricsError(
            f"{len(labels)} labels for a partition over {partition.n_tokens} tokens"
        )
    collapsed = []
    for root, members, unit_label in partition.units():
        if unit_label is None:
            collapsed.append(labels[root])
        elif any(labels[m] == unit_label for m in members):
            collapsed.append(unit_label)
        else:
            collapsed.append(labels[root])
    return tuple(collapsed)


class ConfusionCounts:
    """Per-class tp/fp/fn tallies, poolable across sentences."""

    def __init__(self):
        self.tp = {lab: 0 for lab in LABELS}
        self.fp = {lab: 0 for lab in LABELS}
        self.fn = {lab: 0 for lab in LABELS}

    def add_pair(self, pred: str, gold: str):
        if pred == gold:
            self.tp[gold] += 1
        else:
            self.fp[pred] += 1
            self.fn[gold] += 1

    def add_sequences(self, pred, gold):
        if len(pred) != len(gold):
            raise MetricsError(f"length mismatch: {len(pred)} predictions, {len(gold)} gold")
        for p, g in zip(pred, gold):
            self.add_pair(p, g)

    def merge(self, other: "ConfusionCounts"):
        for lab in self.tp:
            self.tp[lab] += other.tp[lab]
            self.fp[lab] += other.fp[lab]
            self.fn[lab] += other.fn[lab]


def _prf(tp: int, fp: int, fn: int) -> ClassScores:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return ClassScores(precision, recall, f1)


def report_from_counts(counts: ConfusionCounts, mode: str) -> EvalReport:
    if mode not in MODES:
        raise MetricsError(f"unknown metric mode {mode!r}")
    per_class = {
        lab: _prf(counts.tp[lab], counts.fp[lab], counts.fn[lab]) for lab in LABELS
    }
    if mode == TOKEN_MACRO:
        precision = sum(cs.precision for cs in per_class.values()) / len(LABELS)
        recall = sum(cs.recall for cs in per_class.values()) / len(LABELS)
        f1 = sum(cs.f1 for cs in per_class.values()) / len(LABELS)
        return EvalReport(mode, precision, recall, f1, per_class)
    # micro over the non-O classes, for token and phrase modes alike
    tp = sum(counts.tp[lab] for lab in ("C", "E"))
    fp = sum(counts.fp[lab] for lab in ("C", "E"))
    fn = sum(counts.fn[lab] for lab in ("C", "E"))
    pooled = _prf(tp, fp, fn)
    return EvalReport(mode, pooled.precision, pooled.recall, pooled.f1, per_class)


def token_prf(pred, gold, mode: str = TOKEN_MICRO) -> EvalReport:
    """Token-level precision/recall/F1 of one labeled sequence pair."""
    counts = ConfusionCounts()
    counts.add_sequences(tuple(pred), tuple(gold))
    return report_from_counts(counts, mode)


def f1_phrase(pred, gold, sentence: Sentence) -> EvalReport:
    """Phrase-level score: collapse both sequences through the gold phrase
    partition, then score the collapsed units (micro over C/E)."""
    partition = build_phrase_partition(sentence)
    counts = ConfusionCounts()
    counts.add_sequences(collapse_labels(pred, partition), collapse_labels(gold, partition))
    return report_from_counts(counts, PHRASE)


def corpus_confusion(tagger, corpus: Corpus, store, modes=MODES) -> dict[str, ConfusionCounts]:
    """Confusion counts for a tagger over a corpus, pooled across sentences,
    one tally per requested mode."""
    from .train import predict  # deferred: train depends on metrics for its monitor

    for mode in modes:
        if mode not in MODES:
            raise MetricsError(f"unknown metric mode {mode!r}")
    counts = {mode: ConfusionCounts() for mode in modes}
    for sentence in corpus:
        pred = predict(tagger, sentence, store)
        for mode in modes:
            if mode == PHRASE:
                partition = build_phrase_partition(sentence)
                counts[mode].add_sequences(
                    collapse_labels(pred, partition),
                    collapse_labels(sentence.labels, partition),
                )
            else:
                counts[mode].add_sequences(pred, sentence.labels)
    return counts


def corpus_eval(tagger, corpus: Corpus, store, modes=MODES) -> dict[str, EvalReport]:
    """Evaluate a trained tagger over a corpus in every requested mode.

    Confusion counts are pooled over all sentences (micro pooling within
    each mode); deterministic given (tagger, corpus, store).
    """
    counts = corpus_confusion(tagger, corpus, store, modes)
    return {mode: report_from_counts(counts[mode], mode) for mode in modes}
