"""Command-line surface: validate, ingest, train, eval, experiment, report.

Exit codes: 0 success, 1 validation error (bad inputs), 2 runtime failure.
All randomness flows from explicit seeds in configs; reruns with identical
inputs produce identical outputs.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields
from pathlib import Path

from . import experiments
from .corpus import (
    Corpus,
    CorpusError,
    ROOT_HEAD,
    Sentence,
    Token,
    corpus_stats,
    default_lexicon,
    load_corpus,
    load_lexicon,
    save_corpus,
)
from .embeddings import EmbeddingError, StoreSet, load_store
from .metrics import MODES, MetricsError, corpus_eval
from .neural import TaggerConfig, config_to_dict, load_checkpoint, save_checkpoint
from .train import TrainedTagger, TrainHistory, save_history, train_tagger

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2

EXPERIMENT_KINDS = ("pairwise", "combined", "size_sweep", "composition_sweep")

_TAGGER_FIELDS = {f.name for f in fields(TaggerConfig)}


class SpecError(ValueError):
    """Invalid run or experiment configuration."""


def _log(message: str) -> None:
    print(message, file=sys.stderr)


def _read_lexicon(path: str | None):
    if path is None:
        return default_lexicon()
    return load_lexicon(Path(path).read_text("utf-8"))


def cmd_validate(args) -> int:
    corpus = load_corpus(args.corpus)
    stats = corpus_stats(corpus, _read_lexicon(args.lexicon))
    print(f"corpus:          {corpus.name}")
    print(f"sentences:       {stats.n_sentences}")
    print(f"pct_implicit:    {stats.pct_implicit:.4f}")
    print(f"mean_cause_len:  {stats.mean_cause_len:.4f}")
    print(f"mean_effect_len: {stats.mean_effect_len:.4f}")
    return EXIT_OK


def _parse_conll_tsv(text: str, dataset: str) -> Corpus:
    """Example adapter for a simple CoNLL-style TSV export.

    Four tab-separated columns per token: surface, label, head (1-based,
    0 = root), relation. Sentences are separated by blank lines; an
    optional "# id = NAME" comment names the sentence.
    """
    sentences = []
    rows: list[tuple[str, str, int, str]] = []
    sent_id: str | None = None

    def flush():
        nonlocal rows, sent_id
        if rows:
            tokens = tuple(
                Token(i, surface, head - 1 if head else ROOT_HEAD, rel)
                for i, (surface, _, head, rel) in enumerate(rows)
            )
            labels = tuple(label for _, label, _, _ in rows)
            sid = sent_id if sent_id is not None else f"s{len(sentences) + 1}"
            sentences.append(Sentence(sid, dataset, tokens, labels))
        rows, sent_id = [], None

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\n")
        if not line.strip():
            flush()
            continue
        if line.startswith("#"):
            comment = line.lstrip("#").strip()
            if comment.startswith("id"):
                sent_id = comment.split("=", 1)[1].strip()
            continue
        cols = line.split("\t")
        if len(cols) != 4:
            raise CorpusError(f"line {line_no}: expected 4 tab-separated columns")
        try:
            rows.append((cols[0], cols[1], int(cols[2]), cols[3]))
        except ValueError:
            raise CorpusError(f"line {line_no}: head {cols[2]!r} is not an integer") from None
    flush()
    if not sentences:
        raise CorpusError("no sentences found")
    return Corpus(dataset, tuple(sentences))


def cmd_ingest(args) -> int:
    if args.format != "conll-tsv":
        raise SpecError(f"unknown ingest format {args.format!r}")
    corpus = _parse_conll_tsv(Path(args.input).read_text("utf-8"), args.dataset)
    save_corpus(corpus, args.output)
    _log(f"wrote {len(corpus)} sentences to {args.output}")
    return EXIT_OK


def _tagger_config(overrides: dict, input_dim: int) -> TaggerConfig:
    unknown = set(overrides) - _TAGGER_FIELDS
    if unknown:
        raise SpecError(f"unknown tagger config keys: {sorted(unknown)}")
    merged = dict(overrides)
    if merged.setdefault("input_dim", input_dim) != input_dim:
        raise SpecError(
            f"config input_dim {merged['input_dim']} does not match "
            f"embedding dim {input_dim}"
        )
    try:
        return TaggerConfig(**merged)
    except ValueError as exc:
        raise SpecError(str(exc)) from None


def cmd_train(args) -> int:
    run = json.loads(Path(args.config).read_text("utf-8"))
    for key in ("corpus", "store", "out_dir"):
        if key not in run:
            raise SpecError(f"train config is missing {key!r}")
    corpus = load_corpus(run["corpus"])
    store = load_store(run["store"])
    overrides = {k: v for k, v in run.items()
                 if k not in ("corpus", "store", "out_dir", "validation_fraction")}
    config = _tagger_config(overrides, store.dim)
    tagger = train_tagger(
        config, corpus, store,
        validation_fraction=float(run.get("validation_fraction", 0.0)),
        log_fn=_log,
    )
    out_dir = Path(run["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out_dir / "checkpoint.ckpt", tagger.config, tagger.params)
    save_history(out_dir / "history.json", tagger)
    echo = {"run_config": run, "resolved_config": config_to_dict(config)}
    (out_dir / "config.json").write_text(
        json.dumps(echo, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    _log(f"checkpoint and history written to {out_dir}")
    return EXIT_OK


def cmd_eval(args) -> int:
    config, params = load_checkpoint(args.checkpoint)
    corpus = load_corpus(args.corpus)
    store = load_store(args.store)
    if store.dim != config.input_dim:
        raise EmbeddingError(
            f"store dim {store.dim} does not match checkpoint input_dim {config.input_dim}"
        )
    modes = tuple(m.strip() for m in args.modes.split(",") if m.strip())
    for mode in modes:
        if mode not in MODES:
            raise SpecError(f"unknown metric mode {mode!r}; choose from {MODES}")
    tagger = TrainedTagger(config, params, TrainHistory(), store.dim)
    reports = corpus_eval(tagger, corpus, store, modes)
    payload = {mode: reports[mode].to_dict() for mode in modes}
    for mode in modes:
        r = reports[mode]
        print(f"{mode}: precision={r.precision:.6f} recall={r.recall:.6f} f1={r.f1:.6f}")
    if args.out:
        Path(args.out).write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    return EXIT_OK


def _validate_spec(spec: dict) -> None:
    for key in ("corpora", "stores", "seeds", "experiments", "output_dir"):
        if key not in spec:
            raise SpecError(f"experiment spec is missing {key!r}")
    if not spec["experiments"]:
        raise SpecError("experiment spec lists no experiments")
    known = set(spec["corpora"])
    for i, exp in enumerate(spec["experiments"]):
        kind = exp.get("kind")
        if kind not in EXPERIMENT_KINDS:
            raise SpecError(f"experiment {i}: unknown kind {kind!r}")
        referenced: list[str] = []
        if kind == "pairwise":
            referenced = exp.get("corpora", [])
            if len(referenced) < 2:
                raise SpecError(f"experiment {i}: pairwise needs >= 2 corpora")
        elif kind == "combined":
            referenced = [exp.get("target")] + list(exp.get("others", []))
        elif kind == "size_sweep":
            referenced = [exp.get("source")] + list(exp.get("targets", []))
            if not exp.get("fractions"):
                raise SpecError(f"experiment {i}: size_sweep needs fractions")
        elif kind == "composition_sweep":
            referenced = [exp.get("source")] + list(exp.get("targets", []))
            if not exp.get("sizes"):
                raise SpecError(f"experiment {i}: composition_sweep needs sizes")
        for name in referenced:
            if name not in known:
                raise SpecError(f"experiment {i}: unknown corpus {name!r}")


def cmd_experiment(args) -> int:
    spec = json.loads(Path(args.spec).read_text("utf-8"))
    _validate_spec(spec)
    corpora = {name: load_corpus(path, name=name) for name, path in spec["corpora"].items()}
    stores = StoreSet({name: load_store(path) for name, path in spec["stores"].items()})
    lexicon = _read_lexicon(spec.get("lexicon"))
    config = _tagger_config(spec.get("config", {}), stores.dim)
    seeds = [int(s) for s in spec["seeds"]]
    out_root = Path(args.out_dir or spec["output_dir"])
    out_root.mkdir(parents=True, exist_ok=True)

    jobs = max(1, args.jobs)
    manifest: dict[str, str] = {}
    try:
        for i, exp in enumerate(spec["experiments"]):
            kind = exp["kind"]
            subdir = exp.get("name") or f"{i:02d}_{kind}"
            _log(f"running {subdir} ...")
            if kind == "pairwise":
                result = experiments.run_pairwise(
                    [corpora[n] for n in exp["corpora"]], config, stores, seeds,
                    jobs=jobs,
                )
            elif kind == "combined":
                result = experiments.run_combined(
                    corpora[exp["target"]],
                    [corpora[n] for n in exp.get("others", [])],
                    config, stores, seeds, jobs=jobs,
                )
            elif kind == "size_sweep":
                result = experiments.run_size_sweep(
                    corpora[exp["source"]], exp["fractions"],
                    [corpora[n] for n in exp.get("targets", [])],
                    config, stores, seeds, jobs=jobs,
                )
            else:
                result = experiments.run_composition_sweep(
                    corpora[exp["source"]],
                    [corpora[n] for n in exp.get("targets", [])],
                    exp["sizes"], config, stores, seeds, lexicon, jobs=jobs,
                )
            experiments.render_report(result, out_root / subdir)
            manifest[subdir] = "ok"
    except Exception as exc:
        manifest[subdir] = f"failed: {exc}"
        _write_manifest(out_root, manifest)
        raise
    _write_manifest(out_root, manifest)
    _log(f"results written to {out_root}")
    return EXIT_OK


def _write_manifest(out_root: Path, manifest: dict) -> None:
    (out_root / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def cmd_report(args) -> int:
    payload = json.loads(Path(args.raw).read_text("utf-8"))
    experiments.render_payload(payload, args.out_dir)
    _log(f"re-rendered {payload.get('kind')} report into {args.out_dir}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="causetag",
        description="Causal relation extraction: tagging, evaluation, transfer experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="validate a corpus file and print its stats")
    p.add_argument("corpus")
    p.add_argument("--lexicon", help="marker lexicon file (default: shipped lexicon)")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("ingest", help="convert a foreign annotation export to corpus JSON")
    p.add_argument("--format", default="conll-tsv", help="input format (conll-tsv)")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--dataset", required=True, help="dataset name stamped on sentences")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train", help="train a tagger from a JSON run config")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a corpus")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--modes", default="PHRASE,TOKEN_MICRO,TOKEN_MACRO")
    p.add_argument("--out", help="write reports to this JSON file")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("experiment", help="run an experiment spec")
    p.add_argument("--spec", required=True)
    p.add_argument("--out-dir", help="override the spec's output_dir")
    p.add_argument("--jobs", type=int, default=1,
                   help="worker processes for independent cells (default 1)")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("report", help="re-render report files from raw_scores.json")
    p.add_argument("--raw", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CorpusError, EmbeddingError, MetricsError, SpecError) as exc:
        _log(f"error: {exc}")
        return EXIT_VALIDATION
    except (OSError, json.JSONDecodeError, ValueError) as exc:
        _log(f"error: {exc}")
        return EXIT_VALIDATION
    except Exception as exc:  # training/experiment failures
        _log(f"runtime failure: {exc}")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
