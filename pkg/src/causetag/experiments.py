"""Transfer experiment drivers.

Pairwise train-on-i/test-on-j matrices, combined-data augmentation,
training-size sweeps, implicit/explicit composition sweeps, multi-seed
aggregation, Welch significance tests, and report rendering. Every driver
is reproducible: the same inputs and seed list yield byte-identical report
files, regardless of the `jobs` worker count, because results are keyed
and assembled in a fixed order. Diagonal matrix cells train on the 70%
split of the corpus; off-diagonal cells train on the entire source corpus.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.stats import t as t_distribution

from .corpus import Corpus, MarkerLexicon, classify_explicitness, split_train_test
from .embeddings import EmbeddingStore, StoreSet
from .metrics import (
    PHRASE,
    ConfusionCounts,
    EvalReport,
    corpus_confusion,
    report_from_counts,
)
from .neural import TaggerConfig
from .train import train_tagger


class ExperimentError(RuntimeError):
    pass


@dataclass(frozen=True)
class SignificanceResult:
    mean_a: float
    mean_b: float
    t_stat: float
    p_value: float
    alpha: float
    decision: str  # "REJECT" or "FTR"


@dataclass
class TransferCell:
    train_name: str
    test_name: str
    per_seed: list[float]
    report: EvalReport  # confusion counts pooled over sentences and seeds

    @property
    def mean(self) -> float:
        return sum(self.per_seed) / len(self.per_seed)

    @property
    def std(self) -> float:
        if len(self.per_seed) < 2:
            return 0.0
        return float(np.std(self.per_seed, ddof=1))


@dataclass
class TransferMatrix:
    names: tuple[str, ...]
    seeds: tuple[int, ...]
    cells: dict[tuple[str, str], TransferCell]
    audit_lines: list[str] = field(default_factory=list)
    kind = "pairwise"


@dataclass
class CombinedResult:
    target: str
    others: tuple[str, ...]
    seeds: tuple[int, ...]
    baseline: list[float]
    augmented: list[float]
    audit_lines: list[str] = field(default_factory=list)
    kind = "combined"

    @property
    def baseline_mean(self) -> float:
        return sum(self.baseline) / len(self.baseline)

    @property
    def augmented_mean(self) -> float:
        return sum(self.augmented) / len(self.augmented)

    @property
    def delta(self) -> float:
        return self.augmented_mean - self.baseline_mean

    @property
    def pct_change(self) -> float | None:
        if self.baseline_mean == 0.0:
            return None
        return 100.0 * self.delta / self.baseline_mean


@dataclass
class SweepResult:
    kind: str  # "size_sweep", "composition_explicit", "composition_implicit"
    source: str
    axis: tuple
    targets: tuple[str, ...]
    seeds: tuple[int, ...]
    # scores[target][axis_value] -> per-seed phrase F1
    scores: dict[str, dict] = field(default_factory=dict)
    audit_lines: list[str] = field(default_factory=list)

    def mean(self, target: str, value) -> float:
        per_seed = self.scores[target][value]
        return sum(per_seed) / len(per_seed)


@dataclass
class CompositionResult:
    source: str
    sizes: tuple[int, ...]
    targets: tuple[str, ...]
    seeds: tuple[int, ...]
    explicit: SweepResult
    implicit: SweepResult
    kind = "composition_sweep"

    @property
    def audit_lines(self) -> list[str]:
        return self.explicit.audit_lines + self.implicit.audit_lines


def _store_set(stores) -> StoreSet:
    if isinstance(stores, StoreSet):
        return stores
    if isinstance(stores, EmbeddingStore):
        raise ExperimentError("pass stores as {dataset_name: store} or a StoreSet")
    return StoreSet(stores)


def _run_config(config: TaggerConfig, stores: StoreSet, seed: int) -> TaggerConfig:
    return replace(config, input_dim=stores.dim, seed=seed)


def _sentence_keys(sentences) -> set[tuple[str, str]]:
    return {(s.dataset, s.id) for s in sentences}


def _run_units(worker, units, jobs: int):
    """Run independent experiment units, optionally across processes.

    Unit order is preserved either way, so downstream assembly (and the
    rendered files) cannot depend on scheduling.
    """
    if jobs <= 1 or len(units) <= 1:
        return [worker(unit) for unit in units]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(worker, units))


def _train(config: TaggerConfig, train_sents, stores: StoreSet, seed: int, desc: str):
    try:
        return train_tagger(_run_config(config, stores, seed), train_sents, stores)
    except Exception as exc:
        raise ExperimentError(f"{desc}: {exc}") from exc


def _score_cell(tagger, train_sents, test_corpus: Corpus, stores: StoreSet,
                audit_lines: list[str], desc: str) -> tuple[float, ConfusionCounts]:
    """Phrase-F1 of one cell plus its leakage audit line; any train/test
    overlap aborts the cell."""
    overlap = _sentence_keys(train_sents) & _sentence_keys(test_corpus.sentences)
    audit_lines.append(
        f"{desc}: train={len(train_sents)} test={len(test_corpus)} overlap={len(overlap)}"
    )
    if overlap:
        raise ExperimentError(f"{desc}: {len(overlap)} train/test sentences overlap")
    try:
        counts = corpus_confusion(tagger, test_corpus, stores, modes=(PHRASE,))[PHRASE]
    except Exception as exc:
        raise ExperimentError(f"{desc}: {exc}") from exc
    return report_from_counts(counts, PHRASE).f1, counts


def _pairwise_unit(args):
    """One (seed, source) job: train the full-source and split models and
    score the whole matrix row."""
    corpora, config, stores, train_fraction, seed, source_index = args
    source = corpora[source_index]
    splits = {c.name: split_train_test(c, train_fraction, seed) for c in corpora}
    audit: list[str] = []
    full_sents = list(source.sentences)
    diag_sents = list(splits[source.name][0].sentences)
    full_model = _train(config, full_sents, stores, seed,
                        f"train={source.name} (full) seed={seed}")
    diag_model = _train(config, diag_sents, stores, seed,
                        f"train={source.name} (split) seed={seed}")
    row = {}
    for target in corpora:
        test = splits[target.name][1]
        if source.name == target.name:
            model, train_sents = diag_model, diag_sents
        else:
            model, train_sents = full_model, full_sents
        desc = f"cell train={source.name} test={target.name} seed={seed}"
        row[target.name] = _score_cell(model, train_sents, test, stores, audit, desc)
    return source.name, row, audit


def run_pairwise(corpora, config: TaggerConfig, stores, seeds,
                 train_fraction: float = 0.7, jobs: int = 1) -> TransferMatrix:
    """Train-on-row, test-on-column phrase-F1 matrix, averaged over seeds.

    Per seed, every corpus gets a seeded train/test split; each source
    trains one model on its full corpus (used against every other target's
    test split) and one on its train split (used for the diagonal cell).
    """
    corpora = list(corpora)
    if len(corpora) < 2:
        raise ExperimentError("pairwise transfer needs at least 2 corpora")
    seeds = tuple(seeds)
    if not seeds:
        raise ExperimentError("need at least one seed")
    names = tuple(c.name for c in corpora)
    if len(set(names)) != len(names):
        raise ExperimentError(f"corpus names are not distinct: {names}")
    stores = _store_set(stores)

    units = [
        (corpora, config, stores, train_fraction, seed, i)
        for seed in seeds
        for i in range(len(corpora))
    ]
    per_seed: dict[tuple[str, str], list[float]] = {}
    pooled: dict[tuple[str, str], ConfusionCounts] = {}
    audit: list[str] = []
    for source_name, row, unit_audit in _run_units(_pairwise_unit, units, jobs):
        audit.extend(unit_audit)
        for target_name, (f1, counts) in row.items():
            key = (source_name, target_name)
            per_seed.setdefault(key, []).append(f1)
            pooled.setdefault(key, ConfusionCounts()).merge(counts)

    cells = {
        key: TransferCell(
            train_name=key[0],
            test_name=key[1],
            per_seed=scores,
            report=report_from_counts(pooled[key], PHRASE),
        )
        for key, scores in per_seed.items()
    }
    return TransferMatrix(names=names, seeds=seeds, cells=cells, audit_lines=audit)


def _combined_unit(args):
    """One seed's paired baseline/augmented comparison."""
    target, others, config, stores, seed = args
    audit: list[str] = []
    train_split, test_split = split_train_test(target, 0.7, seed)
    base_sents = list(train_split.sentences)
    base_model = _train(config, base_sents, stores, seed,
                        f"baseline target={target.name} seed={seed}")
    base_f1, _ = _score_cell(base_model, base_sents, test_split, stores, audit,
                             f"baseline target={target.name} seed={seed}")
    combined_sents = list(base_sents)
    for other in others:
        combined_sents.extend(other.sentences)
    aug_model = _train(config, combined_sents, stores, seed,
                       f"augmented target={target.name} seed={seed}")
    aug_f1, _ = _score_cell(aug_model, combined_sents, test_split, stores, audit,
                            f"augmented target={target.name} seed={seed}")
    return base_f1, aug_f1, audit


def run_combined(target: Corpus, others, config: TaggerConfig, stores, seeds,
                 jobs: int = 1) -> CombinedResult:
    """Augmentation study: train on target-train plus the entirety of every
    other corpus, test on target-test, and compare against the plain
    target-train baseline with paired seeds."""
    others = list(others)
    seeds = tuple(seeds)
    if not seeds:
        raise ExperimentError("need at least one seed")
    stores = _store_set(stores)
    result = CombinedResult(
        target=target.name,
        others=tuple(o.name for o in others),
        seeds=seeds,
        baseline=[],
        augmented=[],
    )
    units = [(target, others, config, stores, seed) for seed in seeds]
    for base_f1, aug_f1, audit in _run_units(_combined_unit, units, jobs):
        result.baseline.append(base_f1)
        result.augmented.append(aug_f1)
        result.audit_lines.extend(audit)
    return result


def _nested_subset(sentences: tuple, k: int, seed: int) -> list:
    """First k of a seeded permutation, returned in original corpus order,
    so growing k yields nested subsets and k = N yields the corpus as-is."""
    perm = np.random.default_rng(seed).permutation(len(sentences))
    return [sentences[i] for i in sorted(perm[:k].tolist())]


def _subset_sweep_unit(args):
    """One (seed, subset) job shared by size and composition sweeps: train
    on the subset and score every target's test split."""
    pool, k, label, targets, config, stores, seed, desc_prefix = args
    audit: list[str] = []
    subset = _nested_subset(pool, k, seed)
    model = _train(config, subset, stores, seed, f"{desc_prefix} seed={seed}")
    scores = {}
    for target in targets:
        _, test_split = split_train_test(target, 0.7, seed)
        desc = f"{desc_prefix} target={target.name} seed={seed}"
        f1, _ = _score_cell(model, subset, test_split, stores, audit, desc)
        scores[target.name] = f1
    return label, scores, audit


def run_size_sweep(source: Corpus, fractions, targets, config: TaggerConfig,
                   stores, seeds, jobs: int = 1) -> SweepResult:
    """Train on nested seeded subsets of the source at each fraction and
    evaluate phrase F1 on every target's test split."""
    fractions = tuple(float(f) for f in fractions)
    if not fractions or any(not 0.0 < f <= 1.0 for f in fractions):
        raise ExperimentError(f"fractions must lie in (0, 1], got {fractions}")
    if list(fractions) != sorted(set(fractions)):
        raise ExperimentError(f"fractions must be strictly increasing, got {fractions}")
    targets = list(targets)
    seeds = tuple(seeds)
    stores = _store_set(stores)
    result = SweepResult(
        kind="size_sweep",
        source=source.name,
        axis=fractions,
        targets=tuple(t.name for t in targets),
        seeds=seeds,
        scores={t.name: {f: [] for f in fractions} for t in targets},
    )
    units = []
    for seed in seeds:
        for fraction in fractions:
            k = math.floor(fraction * len(source))
            if k == 0:
                raise ExperimentError(
                    f"fraction {fraction} yields 0 sentences from {source.name!r}"
                )
            units.append((
                source.sentences, k, fraction, targets, config, stores, seed,
                f"sweep source={source.name} fraction={fraction}",
            ))
    for fraction, scores, audit in _run_units(_subset_sweep_unit, units, jobs):
        result.audit_lines.extend(audit)
        for target_name, f1 in scores.items():
            result.scores[target_name][fraction].append(f1)
    return result


def run_composition_sweep(source: Corpus, targets, sizes, config: TaggerConfig,
                          stores, seeds, lexicon: MarkerLexicon,
                          jobs: int = 1) -> CompositionResult:
    """Parallel sweeps over explicit-only and implicit-only training subsets
    of the source (equal sizes, nested per seed), evaluated on all targets."""
    sizes = tuple(int(s) for s in sizes)
    if not sizes or any(s < 1 for s in sizes):
        raise ExperimentError(f"sizes must be positive, got {sizes}")
    if list(sizes) != sorted(set(sizes)):
        raise ExperimentError(f"sizes must be strictly increasing, got {sizes}")
    targets = list(targets)
    seeds = tuple(seeds)
    stores = _store_set(stores)
    explicit_sents = tuple(s for s in source if classify_explicitness(s, lexicon))
    implicit_sents = tuple(s for s in source if not classify_explicitness(s, lexicon))
    for arm, sents in (("explicit", explicit_sents), ("implicit", implicit_sents)):
        if max(sizes) > len(sents):
            raise ExperimentError(
                f"size {max(sizes)} exceeds the {arm} partition of "
                f"{source.name!r} ({len(sents)} sentences)"
            )

    arms = {}
    for arm, sents in (("explicit", explicit_sents), ("implicit", implicit_sents)):
        sweep = SweepResult(
            kind=f"composition_{arm}",
            source=source.name,
            axis=sizes,
            targets=tuple(t.name for t in targets),
            seeds=seeds,
            scores={t.name: {s: [] for s in sizes} for t in targets},
        )
        units = [
            (
                sents, size, size, targets, config, stores, seed,
                f"composition arm={arm} source={source.name} size={size}",
            )
            for seed in seeds
            for size in sizes
        ]
        for size, scores, audit in _run_units(_subset_sweep_unit, units, jobs):
            sweep.audit_lines.extend(audit)
            for target_name, f1 in scores.items():
                sweep.scores[target_name][size].append(f1)
        arms[arm] = sweep
    return CompositionResult(
        source=source.name,
        sizes=sizes,
        targets=tuple(t.name for t in targets),
        seeds=seeds,
        explicit=arms["explicit"],
        implicit=arms["implicit"],
    )


def welch_t_test(scores_a, scores_b, alpha: float = 0.05) -> SignificanceResult:
    """Two-sided Welch t test with Welch-Satterthwaite degrees of freedom.

    Zero variance in both groups degenerates to p = 1 for equal means and
    p = 0 otherwise.
    """
    a = np.asarray(list(scores_a), dtype=np.float64)
    b = np.asarray(list(scores_b), dtype=np.float64)
    if len(a) < 2 or len(b) < 2:
        raise ExperimentError("welch_t_test needs at least 2 samples per group")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ExperimentError("welch_t_test requires finite values")
    mean_a, mean_b = float(a.mean()), float(b.mean())
    var_a = float(a.var(ddof=1))
    var_b = float(b.var(ddof=1))
    sa, sb = var_a / len(a), var_b / len(b)
    if sa + sb == 0.0:
        p_value = 1.0 if mean_a == mean_b else 0.0
        t_stat = 0.0 if mean_a == mean_b else math.copysign(math.inf, mean_a - mean_b)
    else:
        t_stat = (mean_a - mean_b) / math.sqrt(sa + sb)
        df = (sa + sb) ** 2 / (sa**2 / (len(a) - 1) + sb**2 / (len(b) - 1))
        p_value = float(2.0 * t_distribution.sf(abs(t_stat), df))
    decision = "REJECT" if p_value < alpha else "FTR"
    return SignificanceResult(mean_a, mean_b, t_stat, p_value, alpha, decision)


def _fmt(value: float) -> str:
    return f"{value:.6f}"


def _csv_table(col_names, rows) -> str:
    lines = ["," + ",".join(col_names)]
    for row_name, values in rows:
        lines.append(row_name + "," + ",".join(_fmt(v) for v in values))
    return "\n".join(lines) + "\n"


def _md_table(col_names, rows) -> str:
    # best score per column in bold, mirroring the transfer-table convention
    col_max = {j: max(values[j] for _, values in rows) for j in range(len(col_names))}
    lines = ["| | " + " | ".join(col_names) + " |"]
    lines.append("|" + "---|" * (len(col_names) + 1))
    for row_name, values in rows:
        cells = []
        for j, v in enumerate(values):
            text = _fmt(v)
            if v == col_max[j]:
                text = f"**{text}**"
            cells.append(text)
        lines.append(f"| {row_name} | " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def _mean(values) -> float:
    return sum(values) / len(values)

def _payload_rows(payload: dict):
    """(column names, [(row name, row values)]) for the main table of a
    serialized result payload."""
    kind = payload.get("kind")
    if kind == "pairwise":
        names = payload["names"]
        rows = [
            (src, [payload["cells"][f"{src}->{tgt}"]["mean"] for tgt in names])
            for src in names
        ]
        return list(names), rows
    if kind == "combined":
        return [payload["target"]], [
            ("baseline", [payload["baseline_mean"]]),
            ("augmented", [payload["augmented_mean"]]),
        ]
    if kind in ("size_sweep", "composition_explicit", "composition_implicit"):
        cols = list(payload["targets"])
        rows = [
            (str(v), [_mean(payload["scores"][t][str(v)]) for t in cols])
            for v in payload["axis"]
        ]
        return cols, rows
    if kind == "composition_sweep":
        targets = payload["targets"]
        cols = [f"{t}:{arm}" for t in targets for arm in ("explicit", "implicit")]
        rows = []
        for size in payload["sizes"]:
            values = []
            for t in targets:
                values.append(_mean(payload["explicit"]["scores"][t][str(size)]))
                values.append(_mean(payload["implicit"]["scores"][t][str(size)]))
            rows.append((str(size), values))
        return cols, rows
    raise ExperimentError(f"cannot render result payload of kind {kind!r}")


def _raw_payload(result) -> dict:
    if isinstance(result, TransferMatrix):
        return {
            "kind": "pairwise",
            "names": list(result.names),
            "seeds": list(result.seeds),
            "cells": {
                f"{src}->{tgt}": {
                    "per_seed": cell.per_seed,
                    "mean": cell.mean,
                    "std": cell.std,
                    "pooled_report": cell.report.to_dict(),
                }
                for (src, tgt), cell in sorted(result.cells.items())
            },
        }
    if isinstance(result, CombinedResult):
        return {
            "kind": "combined",
            "target": result.target,
            "others": list(result.others),
            "seeds": list(result.seeds),
            "baseline": result.baseline,
            "augmented": result.augmented,
            "baseline_mean": result.baseline_mean,
            "augmented_mean": result.augmented_mean,
            "delta": result.delta,
            "pct_change": result.pct_change,
        }
    if isinstance(result, SweepResult):
        return {
            "kind": result.kind,
            "source": result.source,
            "axis": list(result.axis),
            "targets": list(result.targets),
            "seeds": list(result.seeds),
            "scores": {
                target: {str(value): scores for value, scores in by_value.items()}
                for target, by_value in result.scores.items()
            },
        }
    if isinstance(result, CompositionResult):
        return {
            "kind": "composition_sweep",
            "source": result.source,
            "sizes": list(result.sizes),
            "targets": list(result.targets),
            "seeds": list(result.seeds),
            "explicit": _raw_payload(result.explicit),
            "implicit": _raw_payload(result.implicit),
        }
    raise ExperimentError(f"cannot serialize result of type {type(result).__name__}")


def render_payload(payload: dict, out_dir, audit_lines=None) -> None:
    """Write matrix.csv, matrix.md, and raw_scores.json for one serialized
    result; optionally audit.log. Used both when an experiment finishes and
    when re-rendering from a saved raw_scores.json."""
    cols, rows = _payload_rows(payload)
    if not rows or not cols:
        raise ExperimentError("refusing to render an empty result")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "matrix.csv").write_text(_csv_table(cols, rows), encoding="utf-8")
    (out_dir / "matrix.md").write_text(_md_table(cols, rows), encoding="utf-8")
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    (out_dir / "raw_scores.json").write_text(text, encoding="utf-8")
    if audit_lines is not None:
        audit = "\n".join(audit_lines) + "\n" if audit_lines else ""
        (out_dir / "audit.log").write_text(audit, encoding="utf-8")


def render_report(result, out_dir) -> None:
    """Render one experiment result into its report files; identical results
    produce byte-identical files."""
    render_payload(_raw_payload(result), out_dir, audit_lines=result.audit_lines)
