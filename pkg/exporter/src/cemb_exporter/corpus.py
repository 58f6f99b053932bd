"""Minimal reader for the newline-delimited JSON corpus format.

The exporter only needs sentence ids and word-level tokens; labels, heads,
and relations are passed over.
"""

from __future__ import annotations

import json
from dataclasses import dataclass


class CorpusFormatError(ValueError):
    pass


@dataclass(frozen=True)
class CorpusSentence:
    id: str
    dataset: str
    tokens: tuple[str, ...]


def parse_corpus(data: bytes) -> list[CorpusSentence]:
    sentences = []
    seen = set()
    for line_no, line in enumerate(data.decode("utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusFormatError(f"line {line_no}: malformed JSON ({exc.msg})") from None
        for key in ("id", "tokens"):
            if key not in record:
                raise CorpusFormatError(f"line {line_no}: missing key {key!r}")
        sent_id = str(record["id"])
        if sent_id in seen:
            raise CorpusFormatError(f"line {line_no}: duplicate sentence id {sent_id!r}")
        seen.add(sent_id)
        tokens = tuple(str(t) for t in record["tokens"])
        if not tokens:
            raise CorpusFormatError(f"line {line_no}: sentence {sent_id!r} has no tokens")
        sentences.append(
            CorpusSentence(sent_id, str(record.get("dataset", "")), tokens)
        )
    if not sentences:
        raise CorpusFormatError("corpus file contains no sentences")
    return sentences


def read_corpus(path) -> list[CorpusSentence]:
    with open(path, "rb") as fh:
        return parse_corpus(fh.read())
