"""Editing evaluation: decompose an edited passage into sentence-level
units and score the fraction a judge finds supported by the reference.

The judge is pluggable: the built-in containment judge is deterministic
and offline (number/year containment plus relation-antonym contradiction),
and an LLM judge can be built over any chat-completion client. Abstentions
are excluded from the denominator so transport flakiness cannot silently
deflate scores.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable

from .markup import Form, derive_original, parse
from .patterns import (
    ANTONYMS,
    RELATION_WORD_RE,
    extract_numbers,
    sentence_spans,
)

class VerdictLabel(Enum):
    SUPPORTED = "supported"
    UNSUPPORTED = "unsupported"
    ABSTAIN = "abstain"


@dataclass(frozen=True)
class JudgeVerdict:
    label: VerdictLabel
    rationale: str | None = None


Judge = Callable[[str, str], JudgeVerdict]


@dataclass(frozen=True)
class FactScore:
    supported: int
    total: int
    abstained: int

    def __post_init__(self) -> None:
        if self.supported + self.abstained > self.total:
            raise ValueError("supported + abstained cannot exceed total")

    @property
    def score(self) -> float:
        denom = self.total - self.abstained
        return self.supported / denom if denom else 0.0


def split_facts(passage: str) -> list[str]:
    """Deterministic sentence segmentation with abbreviation and decimal
    guards; the atomic units of the editing score."""
    return [passage[s:e] for s, e in sentence_spans(passage)]


_STOPWORDS = frozenset(
    "a an and are as at be by for from in is it its of on or that the this "
    "to was were with".split()
)


def _content_words(text: str) -> set[str]:
    return {
        w
        for w in (t.strip(".,;:()%$").lower() for t in text.split())
        if w and w not in _STOPWORDS and w.isalpha()
    }


def containment_judge(fact: str, reference: str) -> JudgeVerdict:
    """Deterministic offline judge; never abstains.

    Supported iff every number/percent/currency/year token of the fact
    appears (normalized) in the reference, and no relation word in the fact
    is contradicted by its antonym in the reference sentence sharing the
    most content words with the fact.
    """
    fact_numbers = extract_numbers(fact)
    missing = fact_numbers - extract_numbers(reference)
    if missing:
        return JudgeVerdict(
            VerdictLabel.UNSUPPORTED,
            f"values absent from reference: {sorted(missing)}",
        )

    relation_words = {m.group().lower() for m in RELATION_WORD_RE.finditer(fact)}
    if relation_words:
        ref_sentences = split_facts(reference) or [reference]
        fact_words = _content_words(fact)
        counterpart = max(
            ref_sentences, key=lambda s: len(_content_words(s) & fact_words)
        )
        counterpart_lower = counterpart.lower()
        counterpart_words = {
            m.group().lower() for m in RELATION_WORD_RE.finditer(counterpart_lower)
        }
        for word in relation_words:
            antonym = ANTONYMS[word]
            if antonym in counterpart_words and word not in counterpart_words:
                return JudgeVerdict(
                    VerdictLabel.UNSUPPORTED,
                    f"{word!r} contradicts {antonym!r} in the reference",
                )
    return JudgeVerdict(VerdictLabel.SUPPORTED)


def score_editing(edited: str, reference: str, judge: Judge) -> FactScore:
    """FactScore of an edited passage against a reference.

    Residual tags are stripped first (lenient parse in target-output form,
    rendering corrections and dropping statement-level tags). A judge
    exception abstains that unit; it never fails the whole evaluation.
    """
    doc, _ = parse(edited, Form.TARGET_OUTPUT)
    final_text = derive_original(doc)
    units = split_facts(final_text)
    supported = abstained = 0
    for unit in units:
        try:
            verdict = judge(unit, reference)
        except Exception:
            verdict = JudgeVerdict(VerdictLabel.ABSTAIN, "judge failure")
        if verdict.label is VerdictLabel.SUPPORTED:
            supported += 1
        elif verdict.label is VerdictLabel.ABSTAIN:
            abstained += 1
    return FactScore(supported, len(units), abstained)


# Minimal supported/unsupported template for LLM judging; recorded here so
# runs are reproducible from config alone.
JUDGE_SYSTEM_PROMPT = (
    "You check whether a statement is supported by a reference document. "
    "Answer with exactly one word: Supported or Unsupported."
)

JUDGE_PROMPT_TEMPLATE = """\
Reference:
{reference}

Statement: {fact}

Is the statement fully supported by the reference? Answer Supported or \
Unsupported."""


def llm_judge(client) -> Judge:
    """Wrap a chat-completion client as a judge callable."""
    from .llm_client import CompletionRequest

    def judge(fact: str, reference: str) -> JudgeVerdict:
        reply = client.complete(
            CompletionRequest(
                system=JUDGE_SYSTEM_PROMPT,
                user=JUDGE_PROMPT_TEMPLATE.format(reference=reference, fact=fact),
                seed_tag="judge",
            )
        )
        text = reply.text.strip().lower()
        if text.startswith("supported") or " supported" in f" {text}":
            if "unsupported" not in text:
                return JudgeVerdict(VerdictLabel.SUPPORTED, reply.text.strip())
        if "unsupported" in text:
            return JudgeVerdict(VerdictLabel.UNSUPPORTED, reply.text.strip())
        return JudgeVerdict(VerdictLabel.ABSTAIN, reply.text.strip())

    return judge


def score_corpus(rows: Iterable[dict], judge: Judge) -> tuple[list[dict], float]:
    """Score {"id", "edited", "reference"} rows; returns per-record results
    and the corpus mean score."""
    results = []
    for row in rows:
        fs = score_editing(row["edited"], row["reference"], judge)
        results.append(
            {
                "id": row["id"],
                "supported": fs.supported,
                "total": fs.total,
                "abstained": fs.abstained,
                "score": round(fs.score, 4),
            }
        )
    mean = sum(r["score"] for r in results) / len(results) if results else 0.0
    return results, mean


def read_editing_rows(path: str | Path) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            if "_meta" in obj:
                continue
            rows.append(obj)
    return rows
