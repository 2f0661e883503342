"""Corpus pipeline: ingest financial QA records, filter for grounded
responses, drive insertion, split train/validation, emit training pairs,
and report error-type distributions.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Iterable, Iterator

from .markup import derive_erroneous, label_of, serialize, to_target_output
from .patterns import extract_numbers
from .prompts import build_detection_prompt, passage_of_prompt
from .quality import TaggedRecord

log = logging.getLogger(__name__)

__all__ = [
    "QARecord", "IngestStats", "TrainingPair", "DistributionReport",
    "SourceDistribution", "ingest", "write_qa_records", "filter_grounded",
    "split", "emit_training_pair", "distribution_report", "write_pairs",
    "read_pairs", "passage_of_prompt",
]


@dataclass(frozen=True)
class QARecord:
    """One retrieval-augmented QA example: evidence, question, response."""

    id: str
    documents: tuple
    question: str
    response: str
    source: str = ""

    @property
    def reference(self) -> str:
        """Evidence strings joined with blank lines, table rows as given."""
        return "\n\n".join(self.documents)


@dataclass
class IngestStats:
    read: int = 0
    kept: int = 0
    skipped: int = 0
    hook_failures: int = 0
    reasons: list = field(default_factory=list)

    def skip(self, line_no: int, reason: str) -> None:
        self.skipped += 1
        if len(self.reasons) < 50:
            self.reasons.append(f"line {line_no}: {reason}")


_REQUIRED_FIELDS = ("id", "documents", "question", "response")


def ingest(
    path: str | Path,
    source_label: str = "",
    field_map: dict | None = None,
    stats: IngestStats | None = None,
) -> Iterator[QARecord]:
    """Yield validated QA records from a JSONL file.

    Malformed lines (bad JSON, missing fields, empty response, no
    documents) are skipped with a counted warning in `stats`. `field_map`
    renames source keys onto the expected schema, e.g. {"documents":
    "context"} for corpora laid out differently.
    """
    stats = stats if stats is not None else IngestStats()
    mapping = dict(zip(_REQUIRED_FIELDS, _REQUIRED_FIELDS)) | (field_map or {})
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            stats.read += 1
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                stats.skip(line_no, f"bad JSON ({exc.msg})")
                continue
            if "_meta" in obj:
                stats.read -= 1
                continue
            try:
                record = _validate(obj, mapping, source_label)
            except ValueError as exc:
                stats.skip(line_no, str(exc))
                continue
            stats.kept += 1
            yield record


def _validate(obj: dict, mapping: dict, source_label: str) -> QARecord:
    values = {}
    for name in _REQUIRED_FIELDS:
        key = mapping[name]
        if key not in obj:
            raise ValueError(f"missing field {key!r}")
        values[name] = obj[key]
    documents = values["documents"]
    if isinstance(documents, str):
        documents = [documents]
    if not isinstance(documents, list) or not documents:
        raise ValueError("documents must be a nonempty list")
    if not all(isinstance(d, str) for d in documents):
        raise ValueError("documents must be strings")
    response = values["response"]
    if not isinstance(response, str) or not response.strip():
        raise ValueError("response must be a nonempty string")
    return QARecord(
        id=str(values["id"]),
        documents=tuple(documents),
        question=str(values["question"]),
        response=response,
        source=source_label,
    )


def write_qa_records(path: str | Path, records: Iterable[QARecord]) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(
                json.dumps(
                    {
                        "id": r.id,
                        "documents": list(r.documents),
                        "question": r.question,
                        "response": r.response,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )
            count += 1
    return count


def filter_grounded(
    record: QARecord,
    hook: Callable[[QARecord], bool] | None = None,
    stats: IngestStats | None = None,
) -> bool:
    """Retain a record iff its response is grounded in its documents.

    Default heuristic: every number and year token in the response must
    appear (normalized) in the concatenated documents. An optional judge
    hook overrides the heuristic; a hook failure retains the record and is
    flagged in `stats`.
    """
    if hook is not None:
        try:
            return bool(hook(record))
        except Exception as exc:
            log.warning("grounding hook failed for %s: %s", record.id, exc)
            if stats is not None:
                stats.hook_failures += 1
            return True
    response_numbers = extract_numbers(record.response)
    if not response_numbers:
        return True
    return response_numbers <= extract_numbers(record.reference)


def split(records: Iterable, ratio: float = 0.95, seed: int = 0) -> tuple[list, list]:
    """Deterministic shuffled split into (train, validation).

    The validation size is floor(n * (1 - ratio)), so the partition differs
    from the exact ratio by less than one record; disjoint and exhaustive.
    """
    if not 0 < ratio < 1:
        raise ValueError("ratio must be strictly between 0 and 1")
    items = list(records)
    rng = random.Random(f"split:{seed}")
    order = list(range(len(items)))
    rng.shuffle(order)
    n_val = int(Fraction(len(items)) * (1 - Fraction(str(ratio))))
    shuffled = [items[i] for i in order]
    cut = len(items) - n_val
    return shuffled[:cut], shuffled[cut:]


@dataclass(frozen=True)
class TrainingPair:
    """Aligned input/output: structured prompt and tagged target output."""

    id: str
    prompt: str
    target: str
    meta: dict


def emit_training_pair(record: TaggedRecord, qa: QARecord) -> TrainingPair:
    """Build the training pair for a gate-passing record: the prompt embeds
    the reference and the erroneous rendering; the target is the
    target-output serialization (tag-free passages pass through as-is)."""
    erroneous, _ = derive_erroneous(record.doc)
    prompt = build_detection_prompt(erroneous, qa.reference)
    target = serialize(to_target_output(record.doc))
    kinds = [label_of(k) for k in record.doc.kinds()]
    return TrainingPair(
        id=record.id,
        prompt=prompt,
        target=target,
        meta={"kinds": kinds, "source": qa.source},
    )


def write_pairs(path: str | Path, pairs: Iterable[TrainingPair], meta: dict | None = None) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        if meta is not None:
            fh.write(json.dumps({"_meta": meta}, ensure_ascii=False) + "\n")
        for pair in pairs:
            fh.write(
                json.dumps(
                    {"id": pair.id, "prompt": pair.prompt, "target": pair.target, "meta": pair.meta},
                    ensure_ascii=False,
                )
                + "\n"
            )
            count += 1
    return count


def read_pairs(path: str | Path) -> list[TrainingPair]:
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            if "_meta" in obj:
                continue
            pairs.append(TrainingPair(str(obj["id"]), obj["prompt"], obj["target"], obj.get("meta", {})))
    return pairs


_KIND_ROWS = (
    ("numerical", "Numerical Errors"),
    ("temporal", "Temporal Errors"),
    ("entity", "Entity Errors"),
    ("relation", "Relation Errors"),
    ("contradictory", "Contradictory Statements"),
    ("unverifiable", "Unverifiable Statements"),
)


@dataclass(frozen=True)
class SourceDistribution:
    passages: int
    tags: int
    hallucinated_pct: float
    non_hallucinated_pct: float
    kind_pct: dict


@dataclass(frozen=True)
class DistributionReport:
    sources: dict
    total: SourceDistribution

    def to_json(self) -> dict:
        def row(d: SourceDistribution) -> dict:
            return {
                "passages": d.passages,
                "tags": d.tags,
                "hallucinated_pct": round(d.hallucinated_pct, 1),
                "non_hallucinated_pct": round(d.non_hallucinated_pct, 1),
                "kind_pct": {k: round(v, 1) for k, v in d.kind_pct.items()},
            }

        return {
            "sources": {label: row(d) for label, d in sorted(self.sources.items())},
            "total": row(self.total),
        }

    def format_table(self) -> str:
        labels = sorted(self.sources)
        columns = labels + ["Total"]
        dists = [self.sources[label] for label in labels] + [self.total]
        width = max(24, max((len(c) for c in columns), default=5) + 2)
        lines = ["Type".ljust(width) + "".join(c.rjust(12) for c in columns)]

        def emit(name: str, values: list) -> None:
            lines.append(name.ljust(width) + "".join(f"{v:11.1f}%" for v in values))

        emit("Hallucinated", [d.hallucinated_pct for d in dists])
        emit("Non-hallucinated", [d.non_hallucinated_pct for d in dists])
        for key, name in _KIND_ROWS:
            emit(name, [d.kind_pct.get(key, 0.0) for d in dists])
        return "\n".join(lines)


def _distribution(records: list) -> SourceDistribution:
    passages = len(records)
    tagged = sum(1 for r in records if r.doc.has_tags)
    kind_counts: dict[str, int] = {}
    for r in records:
        for kind in r.doc.kinds():
            label = label_of(kind)
            kind_counts[label] = kind_counts.get(label, 0) + 1
    tags = sum(kind_counts.values())
    return SourceDistribution(
        passages=passages,
        tags=tags,
        hallucinated_pct=100.0 * tagged / passages if passages else 0.0,
        non_hallucinated_pct=100.0 * (passages - tagged) / passages if passages else 0.0,
        kind_pct={k: 100.0 * v / tags for k, v in kind_counts.items()} if tags else {},
    )


def distribution_report(
    records: Iterable[TaggedRecord], source_of: dict | None = None
) -> DistributionReport:
    """Passage-level hallucinated share and tag-level kind shares, per
    source and in total."""
    records = list(records)
    source_of = source_of or {}
    by_source: dict[str, list] = {}
    for r in records:
        by_source.setdefault(source_of.get(r.id, "all"), []).append(r)
    return DistributionReport(
        sources={label: _distribution(rs) for label, rs in by_source.items()},
        total=_distribution(records),
    )
