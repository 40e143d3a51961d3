"""Corpus ingestion, balanced in-sample selection, and stratified partitioning.

A corpus is a list of labeled interview transcripts. The in-sample subset is
small, class-balanced, and lexically diverse (greedy vocabulary coverage);
the remainder becomes the out-of-sample validation set. Partitions supply the
evaluation slices used for robustness estimation.
"""

from __future__ import annotations

import csv
import heapq
import json
import unicodedata
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from .errors import (
    BadLabel,
    BadPartitionCount,
    ClassMissing,
    DuplicateId,
    EmptyTranscript,
    ParseError,
    PartitionInfeasible,
    SampleTooSmall,
)
from .hashutil import unit_interval


class GoldLabel(str, Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"


@dataclass(frozen=True)
class Transcript:
    """One interview text; token_count is the whitespace-token count."""

    id: str
    text: str
    token_count: int = -1

    def __post_init__(self):
        if not self.id:
            raise ValueError("transcript id must be nonempty")
        if not self.text.strip():
            raise EmptyTranscript(f"transcript {self.id!r} has empty text")
        computed = len(self.text.split())
        if self.token_count == -1:
            object.__setattr__(self, "token_count", computed)
        elif self.token_count != computed:
            raise ValueError(
                f"token_count {self.token_count} does not match text ({computed} tokens)"
            )


@dataclass(frozen=True)
class LabeledRecord:
    transcript: Transcript
    label: GoldLabel


@dataclass(frozen=True)
class LabeledCorpus:
    records: tuple

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        seen = set()
        for rec in self.records:
            if rec.transcript.id in seen:
                raise DuplicateId(f"duplicate transcript id {rec.transcript.id!r}")
            seen.add(rec.transcript.id)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def class_counts(self) -> dict:
        return dict(Counter(rec.label for rec in self.records))

    def ids(self) -> list:
        return [rec.transcript.id for rec in self.records]

    def gold_map(self) -> dict:
        return {rec.transcript.id: rec.label for rec in self.records}

    def subset(self, ids: Iterable[str]) -> "LabeledCorpus":
        wanted = set(ids)
        return LabeledCorpus(tuple(r for r in self.records if r.transcript.id in wanted))


@dataclass(frozen=True)
class SamplePlan:
    """How to carve the in-sample subset out of a corpus.

    diversity_weight blends greedy vocabulary coverage (1.0) with seeded
    random selection (0.0); the default keeps selection fully greedy with
    the seed used only for tie-breaking.
    """

    in_sample_fraction: float = 0.2
    seed: int = 0
    diversity_weight: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.in_sample_fraction <= 1.0):
            raise ValueError("in_sample_fraction must be in (0, 1]")
        if not (0.0 <= self.diversity_weight <= 1.0):
            raise ValueError("diversity_weight must be in [0, 1]")


@dataclass(frozen=True)
class CorpusSplit:
    in_sample: LabeledCorpus
    out_of_sample: LabeledCorpus


@dataclass(frozen=True)
class PartitionSet:
    partitions: tuple
    k: int
    seed: int


# --- tokenization -----------------------------------------------------------

def _strip_edge_punct(token: str) -> str:
    start, end = 0, len(token)
    while start < end and unicodedata.category(token[start]).startswith("P"):
        start += 1
    while end > start and unicodedata.category(token[end - 1]).startswith("P"):
        end -= 1
    return token[start:end]


def normalize_tokens(text: str) -> list:
    """Lowercase, split on whitespace, strip edge punctuation.

    Tokens that are punctuation-only are kept in their raw lowercased form so
    the vocabulary of a nonempty token list is never empty.
    """
    out = []
    for raw in text.lower().split():
        stripped = _strip_edge_punct(raw)
        out.append(stripped if stripped else raw)
    return out


def lexical_diversity(text: str) -> float:
    """Type-token ratio of the text, in (0, 1]."""
    tokens = normalize_tokens(text)
    if not tokens:
        raise EmptyTranscript("cannot score empty or whitespace-only text")
    return len(set(tokens)) / len(tokens)


# --- loading ----------------------------------------------------------------

_LABEL_VALUES = {label.value for label in GoldLabel}


def _parse_label(raw: object, where: str) -> GoldLabel:
    if not isinstance(raw, str):
        raise BadLabel(f"{where}: label must be a string, got {type(raw).__name__}")
    norm = raw.strip().lower()
    if norm not in _LABEL_VALUES:
        raise BadLabel(f"{where}: unknown label {raw!r} (expected positive|negative)")
    return GoldLabel(norm)


def _build_record(rid: object, text: object, label: object, where: str) -> LabeledRecord:
    if not isinstance(rid, str) or not rid:
        raise ParseError(f"{where}: id must be a nonempty string")
    if not isinstance(text, str):
        raise ParseError(f"{where}: text must be a string")
    if not text.strip():
        raise EmptyTranscript(f"{where}: transcript {rid!r} has empty text")
    return LabeledRecord(Transcript(id=rid, text=text), _parse_label(label, where))


def load_corpus(path, format: str | None = None) -> LabeledCorpus:
    """Load a labeled corpus from JSONL or CSV, preserving input order.

    JSONL rows are objects with id, text, label; CSV needs an id,text,label
    header (RFC 4180 quoting). Raises DuplicateId, BadLabel, EmptyTranscript,
    or ParseError (with the offending line number).
    """
    path = Path(path)
    if format is None:
        suffix = path.suffix.lower()
        if suffix in (".jsonl", ".json"):
            format = "jsonl"
        elif suffix == ".csv":
            format = "csv"
        else:
            raise ParseError(f"cannot infer corpus format from {path.name!r}")
    if format not in ("jsonl", "csv"):
        raise ParseError(f"unsupported corpus format {format!r}")

    records = []
    if format == "jsonl":
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                where = f"{path.name} line {lineno}"
                try:
                    row = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ParseError(f"{where}: invalid JSON ({exc.msg})") from exc
                if not isinstance(row, dict):
                    raise ParseError(f"{where}: expected a JSON object")
                missing = [k for k in ("id", "text", "label") if k not in row]
                if missing:
                    raise ParseError(f"{where}: missing fields {missing}")
                records.append(_build_record(row["id"], row["text"], row["label"], where))
    else:
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            headers = reader.fieldnames or []
            missing = [k for k in ("id", "text", "label") if k not in headers]
            if missing:
                raise ParseError(f"{path.name}: CSV header missing columns {missing}")
            for lineno, row in enumerate(reader, start=2):
                where = f"{path.name} line {lineno}"
                if any(row.get(k) is None for k in ("id", "text", "label")):
                    raise ParseError(f"{where}: row has missing values")
                records.append(_build_record(row["id"], row["text"], row["label"], where))

    return LabeledCorpus(tuple(records))


def write_corpus_jsonl(corpus: LabeledCorpus, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in corpus.records:
            row = {"id": rec.transcript.id, "label": rec.label.value, "text": rec.transcript.text}
            fh.write(json.dumps(row, sort_keys=True, ensure_ascii=False) + "\n")


# --- in-sample selection ----------------------------------------------------

def _round_half_up(x: float) -> int:
    return int(x + 0.5)


def _greedy_select(records: Sequence[LabeledRecord], quota: int, plan: SamplePlan) -> set:
    """Pick `quota` transcript ids maximizing marginal vocabulary coverage.

    Ties on gain break by seeded draw (larger first), then ascending id.
    With diversity_weight < 1 the gain is blended with the seeded draw, so
    weight 0 degrades to plain seeded random sampling.
    """
    vocab = {r.transcript.id: set(normalize_tokens(r.transcript.text)) for r in records}
    draws = {
        r.transcript.id: unit_interval(plan.seed, "diversity", r.transcript.id)
        for r in records
    }
    w = plan.diversity_weight

    if w == 1.0:
        # Lazy greedy: cached gains are upper bounds because coverage gains
        # only shrink as the covered vocabulary grows.
        covered = set()
        heap = [(-len(vocab[rid]), -draws[rid], rid) for rid in vocab]
        heapq.heapify(heap)
        picked = set()
        while len(picked) < quota:
            neg_gain, neg_draw, rid = heapq.heappop(heap)
            true_gain = len(vocab[rid] - covered)
            key = (-true_gain, neg_draw, rid)
            if not heap or key <= heap[0]:
                picked.add(rid)
                covered |= vocab[rid]
            else:
                heapq.heappush(heap, key)
        return picked

    covered = set()
    remaining = [r.transcript.id for r in records]
    picked = set()
    for _ in range(quota):
        gains = {rid: len(vocab[rid] - covered) for rid in remaining}
        max_gain = max(gains.values())
        best = min(
            remaining,
            key=lambda rid: (
                -(w * (gains[rid] / max_gain if max_gain else 0.0) + (1.0 - w) * draws[rid]),
                -draws[rid],
                rid,
            ),
        )
        picked.add(best)
        covered |= vocab[best]
        remaining.remove(best)
    return picked


def build_in_sample(corpus: LabeledCorpus, plan: SamplePlan) -> CorpusSplit:
    """Split the corpus into a balanced, diverse in-sample set and the rest.

    In-sample size is round(fraction * |corpus|), split evenly between the
    classes (odd sizes favor the majority class). Deterministic for a fixed
    corpus order and plan.
    """
    counts = corpus.class_counts
    for label in GoldLabel:
        if counts.get(label, 0) == 0:
            raise ClassMissing(f"corpus has no {label.value} records")

    n = min(_round_half_up(plan.in_sample_fraction * len(corpus)), len(corpus))
    if n < 2:
        raise SampleTooSmall(
            f"fraction {plan.in_sample_fraction} of {len(corpus)} records gives "
            f"in-sample size {n}; need at least 2"
        )

    n_pos, n_neg = counts[GoldLabel.POSITIVE], counts[GoldLabel.NEGATIVE]
    base_pos = n // 2
    if n % 2 and n_pos >= n_neg:
        base_pos += 1
    q_pos = min(base_pos, n_pos)
    q_neg = min(n - q_pos, n_neg)
    q_pos = min(n_pos, n - q_neg)  # reclaim spill if the negative class ran short

    selected = set()
    for label, quota in ((GoldLabel.POSITIVE, q_pos), (GoldLabel.NEGATIVE, q_neg)):
        members = [r for r in corpus.records if r.label == label]
        selected |= _greedy_select(members, quota, plan)

    in_records = tuple(r for r in corpus.records if r.transcript.id in selected)
    out_records = tuple(r for r in corpus.records if r.transcript.id not in selected)
    return CorpusSplit(LabeledCorpus(in_records), LabeledCorpus(out_records))


def write_split(split: CorpusSplit, out_dir, plan: SamplePlan) -> list:
    """Persist a split as in_sample.jsonl / out_of_sample.jsonl + manifest."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = [out_dir / "in_sample.jsonl", out_dir / "out_of_sample.jsonl"]
    write_corpus_jsonl(split.in_sample, paths[0])
    write_corpus_jsonl(split.out_of_sample, paths[1])
    manifest = {
        "seed": plan.seed,
        "in_sample_fraction": plan.in_sample_fraction,
        "diversity_weight": plan.diversity_weight,
        "in_sample_counts": {k.value: v for k, v in split.in_sample.class_counts.items()},
        "out_of_sample_counts": {k.value: v for k, v in split.out_of_sample.class_counts.items()},
    }
    manifest_path = out_dir / "split_manifest.json"
    manifest_path.write_text(
        json.dumps(manifest, sort_keys=True, indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )
    paths.append(manifest_path)
    return paths


# --- partitioning -----------------------------------------------------------

def partition_k(corpus: LabeledCorpus, k: int, seed: int) -> PartitionSet:
    """Stratified split of the corpus ids into k near-equal partitions.

    Partitions are disjoint, cover the corpus, differ in size by at most one
    record, and keep per-class counts within one of each other. Deterministic
    for a fixed seed.
    """
    if k < 2:
        raise BadPartitionCount(f"k must be >= 2, got {k}")
    counts = corpus.class_counts
    min_class = min(counts.get(label, 0) for label in GoldLabel)
    if k > min_class:
        raise PartitionInfeasible(
            f"k={k} exceeds the smallest class count ({min_class})"
        )

    buckets = [[] for _ in range(k)]
    offset = 0
    for label in GoldLabel:
        ids = [r.transcript.id for r in corpus.records if r.label == label]
        ids.sort(key=lambda rid: (unit_interval(seed, "partition", label.value, rid), rid))
        for j, rid in enumerate(ids):
            buckets[(offset + j) % k].append(rid)
        offset = (offset + len(ids)) % k

    return PartitionSet(tuple(tuple(b) for b in buckets), k, seed)
