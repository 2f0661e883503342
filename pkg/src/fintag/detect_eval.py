"""Span-level detection scoring: align predicted tags against gold tags and
compute per-kind, overall (micro) and passage-level binary precision,
recall and F1.

Alignment works on character offsets into the erroneous rendering, with
greedy one-to-one matching: exact span-and-type matches first, then by
overlap length descending, then leftmost. A pair with mismatched kinds
counts as a false positive for the predicted kind and a false negative for
the gold kind, keeping per-kind columns independent.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .markup import (
    FAVA_EXTRA_STATEMENT_TAGS,
    Form,
    TaggedDocument,
    TagSpan,
    derive_erroneous,
    label_of,
    parse,
)
from .patterns import squash_ws

DEFAULT_LABELS = (
    "numerical", "temporal", "entity", "relation", "contradictory", "unverifiable",
)
FAVA_LABELS = (
    "entity", "relation", "contradictory", "invented", "subjective", "unverifiable",
)

_ABBREV = {
    "numerical": "Num.", "temporal": "Tem.", "entity": "Ent.", "relation": "Rel.",
    "contradictory": "Con.", "unverifiable": "Unv.", "invented": "Inv.",
    "subjective": "Sub.",
}

_FENCE_OPEN_RE = re.compile(r"^```[A-Za-z0-9_-]*[ \t]*\n?")
_FENCE_CLOSE_RE = re.compile(r"\n?```\s*$")


def strip_reply_envelope(raw: str, keys: Sequence[str] = ("Edited",)) -> str:
    """Unwrap a model reply: optional code fences, then an optional one-key
    JSON envelope ({"Edited": ...}); tolerates single-quoted and bare keys
    and unescaped content. Returns the payload unchanged when no envelope
    is recognized."""
    s = raw.strip()
    if s.startswith("```"):
        s = _FENCE_CLOSE_RE.sub("", _FENCE_OPEN_RE.sub("", s)).strip()
    if s.startswith("{") and s.endswith("}"):
        try:
            obj = json.loads(s)
        except json.JSONDecodeError:
            obj = None
        if isinstance(obj, dict):
            for key in keys:
                if key in obj and isinstance(obj[key], str):
                    return obj[key]
        for key in keys:
            m = re.match(
                rf"^\{{\s*['\"]?{re.escape(key)}['\"]?\s*:\s*(.*?)\s*\}}$",
                s,
                re.DOTALL,
            )
            if m:
                inner = m.group(1)
                if len(inner) >= 2 and inner[0] in "'\"" and inner[-1] == inner[0]:
                    inner = inner[1:-1]
                return inner
    return s


def parse_prediction(raw: str, extra_statement_tags: tuple = ()) -> tuple[TaggedDocument, tuple]:
    """Lenient parse of a raw model reply in target-output form.

    Never fails: the worst case is an all-text document plus warnings.
    """
    payload = strip_reply_envelope(raw)
    doc, warnings = parse(
        payload, Form.TARGET_OUTPUT, extra_statement_tags=extra_statement_tags
    )
    return doc, warnings


@dataclass(frozen=True)
class MatchSet:
    """One-to-one span alignment between a gold and a predicted document."""

    pairs: tuple  # (gold TagSpan, pred TagSpan, type_equal)
    unmatched_gold: tuple
    unmatched_pred: tuple
    render_mismatch: bool = False


def align_spans(
    gold_spans: Sequence[TagSpan],
    pred_spans: Sequence[TagSpan],
    mode: str = "overlap",
) -> tuple:
    """Greedy one-to-one matching over candidate pairs with >=1 character
    overlap (mode "exact" restricts candidates to identical spans)."""
    if mode not in ("overlap", "exact"):
        raise ValueError(f"unknown match mode {mode!r}")
    candidates = []
    for gi, g in enumerate(gold_spans):
        for pi, p in enumerate(pred_spans):
            overlap = min(g.end, p.end) - max(g.start, p.start)
            if overlap <= 0:
                continue
            exact = g.start == p.start and g.end == p.end
            if mode == "exact" and not exact:
                continue
            exact_typed = exact and label_of(g.kind) == label_of(p.kind)
            # Tie-breaks use min/max so the ordering is invariant under
            # swapping gold and pred; that makes P and R swap exactly.
            key = (
                0 if exact_typed else 1,
                -overlap,
                min(g.start, p.start),
                max(g.start, p.start),
                min(gi, pi),
                max(gi, pi),
            )
            candidates.append((key, gi, pi))
    candidates.sort()
    used_g: set[int] = set()
    used_p: set[int] = set()
    pairs = []
    for _, gi, pi in candidates:
        if gi in used_g or pi in used_p:
            continue
        used_g.add(gi)
        used_p.add(pi)
        g, p = gold_spans[gi], pred_spans[pi]
        pairs.append((g, p, label_of(g.kind) == label_of(p.kind)))
    unmatched_gold = tuple(g for i, g in enumerate(gold_spans) if i not in used_g)
    unmatched_pred = tuple(p for i, p in enumerate(pred_spans) if i not in used_p)
    return tuple(pairs), unmatched_gold, unmatched_pred


def align(gold: TaggedDocument, pred: TaggedDocument, mode: str = "overlap") -> MatchSet:
    """Align two documents on their erroneous renderings.

    When the renderings differ (whitespace-insensitively) alignment still
    proceeds on each document's own offsets, flagged via render_mismatch.
    """
    gold_render, gold_spans = derive_erroneous(gold)
    pred_render, pred_spans = derive_erroneous(pred)
    mismatch = squash_ws(gold_render) != squash_ws(pred_render)
    pairs, unmatched_gold, unmatched_pred = align_spans(gold_spans, pred_spans, mode)
    return MatchSet(pairs, unmatched_gold, unmatched_pred, mismatch)


def _rate(numer: int, denom: int) -> float:
    return 100.0 * numer / denom if denom else 0.0


@dataclass
class KindCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def precision(self) -> float:
        return _rate(self.tp, self.tp + self.fp)

    @property
    def recall(self) -> float:
        return _rate(self.tp, self.tp + self.fn)

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0


@dataclass
class BinaryCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    @property
    def precision(self) -> float:
        return _rate(self.tp, self.tp + self.fp)

    @property
    def recall(self) -> float:
        return _rate(self.tp, self.tp + self.fn)

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0


@dataclass
class DetectionReport:
    per_kind: dict
    overall: KindCounts
    binary: BinaryCounts
    unparseable: int = 0
    labels: tuple = DEFAULT_LABELS

    def macro_overall(self) -> tuple[float, float, float]:
        """Unweighted mean of per-kind precision/recall, F1 from those.

        The default overall metric is micro; macro sits behind this flag
        for corpora where kind imbalance should not dominate.
        """
        labels = self.labels
        precision = sum(self.per_kind[l].precision for l in labels) / len(labels)
        recall = sum(self.per_kind[l].recall for l in labels) / len(labels)
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        return precision, recall, f1

    def to_json(self) -> dict:
        def counts(c):
            return {
                "tp": c.tp, "fp": c.fp, "fn": c.fn,
                "precision": round(c.precision, 1),
                "recall": round(c.recall, 1),
                "f1": round(c.f1, 1),
            }

        macro_p, macro_r, macro_f1 = self.macro_overall()
        payload = {
            "per_kind": {label: counts(self.per_kind[label]) for label in self.labels},
            "overall": counts(self.overall),
            "overall_macro": {
                "precision": round(macro_p, 1),
                "recall": round(macro_r, 1),
                "f1": round(macro_f1, 1),
            },
            "binary": {**counts(self.binary), "tn": self.binary.tn},
            "unparseable_predictions": self.unparseable,
        }
        return payload

    def format_table(self) -> str:
        columns = [_ABBREV.get(label, label[:3].title() + ".") for label in self.labels]
        header = "Metric  " + "".join(c.rjust(8) for c in columns + ["Ov.", "Bi."])
        rows = []
        for name in ("precision", "recall", "f1"):
            cells = [getattr(self.per_kind[label], name) for label in self.labels]
            cells.append(getattr(self.overall, name))
            cells.append(getattr(self.binary, name))
            label = {"precision": "P", "recall": "R", "f1": "F1"}[name]
            rows.append(label.ljust(8) + "".join(f"{c:8.1f}" for c in cells))
        return "\n".join([header] + rows)


def score(
    match: MatchSet,
    gold_doc: TaggedDocument,
    pred_doc: TaggedDocument,
    labels: tuple = DEFAULT_LABELS,
) -> DetectionReport:
    """Score one aligned document pair.

    Per-kind: a type-equal pair is a TP of that kind; a type-unequal pair
    contributes FP to the predicted kind and FN to the gold kind; unmatched
    spans are FP/FN of their own kind. Overall micro-aggregates the kinds.
    Binary is passage-level: positive iff a document contains any tag.
    """
    per_kind = {label: KindCounts() for label in labels}

    def bucket(kind) -> KindCounts:
        return per_kind.setdefault(label_of(kind), KindCounts())

    for g, p, type_equal in match.pairs:
        if type_equal:
            bucket(g.kind).tp += 1
        else:
            bucket(p.kind).fp += 1
            bucket(g.kind).fn += 1
    for g in match.unmatched_gold:
        bucket(g.kind).fn += 1
    for p in match.unmatched_pred:
        bucket(p.kind).fp += 1

    overall = KindCounts(
        tp=sum(c.tp for c in per_kind.values()),
        fp=sum(c.fp for c in per_kind.values()),
        fn=sum(c.fn for c in per_kind.values()),
    )
    binary = BinaryCounts()
    gold_pos, pred_pos = gold_doc.has_tags, pred_doc.has_tags
    if gold_pos and pred_pos:
        binary.tp = 1
    elif gold_pos:
        binary.fn = 1
    elif pred_pos:
        binary.fp = 1
    else:
        binary.tn = 1
    return DetectionReport(per_kind, overall, binary, 0, labels)


def combine_reports(reports: Iterable[DetectionReport], labels: tuple = DEFAULT_LABELS) -> DetectionReport:
    """Sum per-document reports into one corpus report (order-invariant)."""
    per_kind = {label: KindCounts() for label in labels}
    overall = KindCounts()
    binary = BinaryCounts()
    unparseable = 0
    for report in reports:
        for label, counts in report.per_kind.items():
            target = per_kind.setdefault(label, KindCounts())
            target.tp += counts.tp
            target.fp += counts.fp
            target.fn += counts.fn
        overall.tp += report.overall.tp
        overall.fp += report.overall.fp
        overall.fn += report.overall.fn
        binary.tp += report.binary.tp
        binary.fp += report.binary.fp
        binary.fn += report.binary.fn
        binary.tn += report.binary.tn
        unparseable += report.unparseable
    return DetectionReport(per_kind, overall, binary, unparseable, labels)


def evaluate_corpus(
    gold_docs: dict,
    raw_predictions: dict,
    labels: tuple = DEFAULT_LABELS,
    mode: str = "overlap",
) -> DetectionReport:
    """Score a corpus of raw predictions against gold documents by id.

    Gold ids with no prediction are scored against an empty reply; replies
    with demoted parse structure count toward `unparseable` but are still
    scored on whatever survived.
    """
    extra = tuple(t for t in FAVA_EXTRA_STATEMENT_TAGS if t in labels)
    reports = []
    unparseable = 0
    for rid, gold in gold_docs.items():
        raw = raw_predictions.get(rid, "")
        pred, warnings = parse_prediction(raw, extra_statement_tags=extra)
        if any(w.category == "demoted" for w in warnings):
            unparseable += 1
        reports.append(score(align(gold, pred, mode), gold, pred, labels))
    combined = combine_reports(reports, labels)
    combined.unparseable = unparseable
    return combined


def f1_from_pr(precision: float, recall: float) -> float:
    """Harmonic mean of percentage precision/recall, rounded to one decimal
    (the convention used in reported result tables)."""
    if not (0 <= precision <= 100 and 0 <= recall <= 100):
        raise ValueError("precision and recall must be percentages in [0, 100]")
    if precision + recall == 0:
        return 0.0
    return round(2 * precision * recall / (precision + recall), 1)


def read_gold_documents(path: str | Path, labels: tuple = DEFAULT_LABELS) -> dict:
    """Load gold documents from a training-pair JSONL (parses each target
    in target-output form)."""
    extra = tuple(t for t in FAVA_EXTRA_STATEMENT_TAGS if t in labels)
    gold: dict[str, TaggedDocument] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            if "_meta" in obj:
                continue
            doc, _ = parse(obj["target"], Form.TARGET_OUTPUT, extra_statement_tags=extra)
            gold[str(obj["id"])] = doc
    return gold


def read_predictions(path: str | Path) -> dict:
    """Load raw predictions from JSONL of {"id", "raw"}."""
    preds: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            if "_meta" in obj:
                continue
            preds[str(obj["id"])] = obj["raw"]
    return preds
