"""Controlled error insertion: turn clean QA responses into tagged passages.

Two inserters share one planning layer:

* a deterministic rule-based inserter whose output always passes the
  quality gate and reconstructs its input exactly (the offline oracle);
* an LLM-backed inserter that prompts a model with few-shot exemplars,
  gates the reply, and retries on unfixable defects.

Planning scales the error count with passage length and samples error
kinds from configured weights, with a configured share of passages left
clean.
"""

from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .detect_eval import strip_reply_envelope
from .llm_client import CompletionRequest
from .markup import (
    Edit,
    ErrorType,
    Form,
    Statement,
    TaggedDocument,
    Text,
    parse,
)
from .patterns import (
    MONTH_NAMES,
    NUMBER_TOKEN_RE,
    RELATION_WORD_RE,
    YEAR_RE,
    flip_relation_word,
    sentence_spans,
)
from .prompts import (
    INSERTION_PROMPT_TEMPLATE,
    INSERTION_SYSTEM_PROMPT,
    TAG_DEFINITIONS,
)
from .quality import TaggedRecord, fix

# Kind weights proportional to the target corpus-wide error-type shares
# (percent); the clean share is the target fraction of untouched passages.
DEFAULT_TYPE_WEIGHTS: dict[ErrorType, float] = {
    ErrorType.NUMERICAL: 20.0,
    ErrorType.TEMPORAL: 30.8,
    ErrorType.ENTITY: 13.6,
    ErrorType.RELATION: 7.7,
    ErrorType.CONTRADICTORY: 18.6,
    ErrorType.UNVERIFIABLE: 9.2,
}

DEFAULT_CLEAN_PROBABILITY = 0.325


@dataclass(frozen=True)
class InserterConfig:
    clean_probability: float = DEFAULT_CLEAN_PROBABILITY
    type_weights: dict = field(default_factory=lambda: dict(DEFAULT_TYPE_WEIGHTS))
    tokens_per_error: int = 60
    max_errors: int = 6

    def __post_init__(self) -> None:
        if not 0.0 <= self.clean_probability <= 1.0:
            raise ValueError("clean_probability must be in [0, 1]")
        if not self.type_weights or any(w <= 0 for w in self.type_weights.values()):
            raise ValueError("type weights must be positive")
        if self.tokens_per_error < 1 or self.max_errors < 1:
            raise ValueError("tokens_per_error and max_errors must be >= 1")


@dataclass(frozen=True)
class InsertionPlan:
    """How many errors of which kinds one passage receives."""

    clean: bool
    count: int
    kinds: tuple
    seed: int

    def __post_init__(self) -> None:
        if self.clean and (self.count != 0 or self.kinds):
            raise ValueError("a clean plan carries no errors")
        if self.count != len(self.kinds):
            raise ValueError("count must equal the number of planned kinds")


@dataclass(frozen=True)
class InsertionSkip:
    kind: ErrorType
    reason: str


@dataclass(frozen=True)
class InsertionResult:
    record: TaggedRecord
    plan: InsertionPlan
    applied: tuple
    skipped: tuple


def plan_errors(passage: str, config: InserterConfig | None = None, seed: int = 0) -> InsertionPlan:
    """Deterministic insertion plan for a passage.

    The error count grows with whitespace token length (one error per
    `tokens_per_error` tokens, clamped to [1, max_errors]); kinds are
    sampled i.i.d. from the configured weights.
    """
    if not passage.strip():
        raise ValueError("passage must be nonempty")
    config = config or InserterConfig()
    rng = random.Random(f"plan:{seed}:{passage}")
    if rng.random() < config.clean_probability:
        return InsertionPlan(True, 0, (), seed)
    tokens = len(passage.split())
    count = max(1, min(config.max_errors, round(tokens / config.tokens_per_error)))
    kinds = tuple(
        rng.choices(
            list(config.type_weights), weights=list(config.type_weights.values()), k=count
        )
    )
    return InsertionPlan(False, count, kinds, seed)


# --- rule-based insertion -------------------------------------------------

_MONTH_ALT = "|".join(MONTH_NAMES)
_YEAR = r"(?:1[89]\d\d|20\d\d)"

_TEMPORAL_SITE_RE = re.compile(
    rf"""\b(?:
        (?:{_MONTH_ALT})\s+\d{{1,2}},?\s+{_YEAR}
        | (?:{_MONTH_ALT})\s+{_YEAR}
        | fiscal(?:\s+year)?\s+{_YEAR}
        | fy\s?{_YEAR}
        | q[1-4]\s+{_YEAR}
        | (?:first|second|third|fourth)\s+quarter(?:\s+of\s+{_YEAR})?
        | {_YEAR}
    )\b""",
    re.IGNORECASE | re.VERBOSE,
)

_BARE_YEAR_RE = re.compile(r"(?:1[89]|20)\d\d")
_MONTH_WORD_RE = re.compile(rf"\b(?:{_MONTH_ALT})\b", re.IGNORECASE)
_ORDINAL_RE = re.compile(r"\b(first|second|third|fourth)\b", re.IGNORECASE)
_QUARTER_NUM_RE = re.compile(r"\b[Qq]([1-4])\b")

_MONTH_TITLES = tuple(m.title() for m in MONTH_NAMES)
_ORDINALS = ("first", "second", "third", "fourth")

_CAP_SPAN_RE = re.compile(r"\b[A-Z][A-Za-z&'-]*(?:\s+[A-Z][A-Za-z&'-]*)+\b")

_LEADING_STOPWORDS = {
    "The", "A", "An", "In", "On", "At", "As", "By", "For", "To", "Of",
    "Our", "We", "This", "That", "These", "Those", "It", "Its", "During",
    "From", "With", "After", "Before", "Since", "While", "However",
    "Therefore", "Additionally", "Meanwhile", "Overall",
}

FALLBACK_ENTITIES = (
    "Meridian Holdings",
    "Crestline Capital",
    "Harbor Financial",
    "Pacific Bancorp",
    "Summit Industrial",
    "Northbrook Partners",
    "Atlas Energy",
    "Beacon Insurance Group",
    "Lakeshore Trust",
    "Granite Peak Mining",
)

_SPECULATIVE_SENTENCES = (
    "The proceeds are rumored to be earmarked for undisclosed future projects.",
    "Management privately expects these figures to double within two years.",
    "The company is said to be preparing an unannounced acquisition.",
    "Several board members reportedly favor a far more aggressive expansion.",
    "Internal forecasts allegedly project much stronger growth next year.",
    "The firm is believed to hold significant undisclosed offshore assets.",
    "Executives have quietly discussed relocating headquarters next quarter.",
    "People close to the matter anticipate an imminent special dividend.",
)


def _overlaps(start: int, end: int, claimed: list) -> bool:
    return any(not (end <= s or start >= e) for s, e in claimed)


def _format_like(value: float, decimals: int, grouped: bool) -> str:
    if decimals:
        text = f"{value:,.{decimals}f}" if grouped else f"{value:.{decimals}f}"
    else:
        text = f"{round(value):,}" if grouped else str(round(value))
    return text


def _perturb_number_token(token: str, rng: random.Random) -> str | None:
    """Shift a number token's value by a nonzero +/-10..50% factor while
    preserving its formatting (currency sigil, separators, precision)."""
    m = re.fullmatch(r"([$€£]?)(\d[\d,]*(?:\.\d+)?)(%?)", token)
    if m is None:
        return None
    prefix, core, suffix = m.groups()
    grouped = "," in core
    decimals = len(core.split(".")[1]) if "." in core else 0
    value = float(core.replace(",", ""))
    for _ in range(8):
        factor = rng.choice((-1, 1)) * rng.uniform(0.1, 0.5)
        candidate = value * (1 + factor) if value else rng.uniform(1, 9)
        formatted = _format_like(candidate, decimals, grouped)
        if formatted != core:
            return prefix + formatted + suffix
    bumped = _format_like(value + 10 ** -decimals, decimals, grouped)
    if bumped == core:
        return None
    return prefix + bumped + suffix


def _perturb_temporal(span: str, rng: random.Random) -> str | None:
    """Shift a year by +/-1..5 or substitute the month/quarter."""
    moves = []
    year_m = YEAR_RE.search(span)
    month_m = _MONTH_WORD_RE.search(span)
    ordinal_m = _ORDINAL_RE.search(span)
    quarter_m = _QUARTER_NUM_RE.search(span)
    if year_m:
        moves.append("year")
    if month_m:
        moves.append("month")
    if ordinal_m or quarter_m:
        moves.append("quarter")
    if not moves:
        return None
    move = rng.choice(moves)
    if move == "year":
        year = int(year_m.group())
        delta = rng.choice((-5, -4, -3, -2, -1, 1, 2, 3, 4, 5))
        return span[: year_m.start()] + str(year + delta) + span[year_m.end():]
    if move == "month":
        original = month_m.group()
        replacement = rng.choice(
            [m for m in _MONTH_TITLES if m.lower() != original.lower()]
        )
        if original[0].islower():
            replacement = replacement.lower()
        return span[: month_m.start()] + replacement + span[month_m.end():]
    if ordinal_m:
        original = ordinal_m.group()
        replacement = rng.choice([o for o in _ORDINALS if o != original.lower()])
        if original[0].isupper():
            replacement = replacement.title()
        return span[: ordinal_m.start()] + replacement + span[ordinal_m.end():]
    digit = quarter_m.group(1)
    replacement = rng.choice([d for d in "1234" if d != digit])
    return span[: quarter_m.start(1)] + replacement + span[quarter_m.end(1):]


def _temporal_sites(text: str) -> list:
    return [(m.start(), m.end(), m.group()) for m in _TEMPORAL_SITE_RE.finditer(text)]


def _numeric_sites(text: str, temporal_spans: list) -> list:
    sites = []
    for m in NUMBER_TOKEN_RE.finditer(text):
        if _BARE_YEAR_RE.fullmatch(m.group()):
            continue  # bare years belong to the temporal inserter
        if any(not (m.end() <= s or m.start() >= e) for s, e, _ in temporal_spans):
            continue
        sites.append((m.start(), m.end(), m.group()))
    return sites


def _entity_sites(text: str) -> list:
    sites = []
    for m in _CAP_SPAN_RE.finditer(text):
        tokens = [
            (w.start() + m.start(), w.group()) for w in re.finditer(r"\S+", m.group())
        ]
        while tokens and tokens[0][1] in _LEADING_STOPWORDS:
            tokens.pop(0)
        if len(tokens) < 2:
            continue
        if any(tok.lower().strip(".,") in MONTH_NAMES for _, tok in tokens):
            continue
        start = tokens[0][0]
        end = tokens[-1][0] + len(tokens[-1][1])
        sites.append((start, end, text[start:end]))
    return sites


def _flip_sentence(sentence: str, rng: random.Random) -> str | None:
    """One contradictory rewrite of a sentence: flip a relation word, else
    perturb a number or shift a year."""
    relations = list(RELATION_WORD_RE.finditer(sentence))
    if relations:
        m = rng.choice(relations)
        flipped = flip_relation_word(m.group())
        if flipped is not None:
            return sentence[: m.start()] + flipped + sentence[m.end():]
    for m in sorted(NUMBER_TOKEN_RE.finditer(sentence), key=lambda x: rng.random()):
        token = m.group()
        if _BARE_YEAR_RE.fullmatch(token):
            replacement = str(int(token) + rng.choice((-5, -4, -3, -2, -1, 1, 2, 3, 4, 5)))
        else:
            replacement = _perturb_number_token(token, rng)
        if replacement is not None and replacement != token:
            return sentence[: m.start()] + replacement + sentence[m.end():]
    return None


def insert_rule_based(
    passage: str,
    context: str,
    plan: InsertionPlan,
    seed: int = 0,
    record_id: str | None = None,
) -> InsertionResult:
    """Apply a plan to a passage with deterministic rule-based edits.

    Every output passes the quality gate, and `derive_original` of the
    resulting document reproduces `passage` exactly; planned kinds with no
    applicable site are reported in `skipped`, never silently absorbed.
    """
    rng = random.Random(f"insert:{seed}:{passage}")
    rid = record_id if record_id is not None else f"rule-{seed}"
    if plan.clean or not plan.kinds:
        doc = TaggedDocument((Text(passage),), Form.TAGGED_PASSAGE)
        record = TaggedRecord(rid, passage, doc, "rule-based", seed)
        return InsertionResult(record, plan, (), ())

    claimed: list = []
    edits: list = []  # (start, end, kind, error_text)
    statements: list = []  # (point, seq, is_end, kind, content)
    applied: list = []
    skipped: list = []

    temporal_spans = _temporal_sites(passage)
    numeric_spans = _numeric_sites(passage, temporal_spans)
    entity_spans = _entity_sites(passage)
    relation_spans = [(m.start(), m.end(), m.group()) for m in RELATION_WORD_RE.finditer(passage)]

    sents = sentence_spans(passage)
    mid_points = [
        s2 for (s, e), (s2, e2) in zip(sents, sents[1:]) if passage[e:s2] == " "
    ]
    end_ok = bool(passage) and not passage[-1].isspace()

    def place_edit(kind: ErrorType, sites: list, perturb) -> str | None:
        free = [site for site in sites if not _overlaps(site[0], site[1], claimed)]
        rng.shuffle(free)
        for start, end, span in free:
            error = perturb(span)
            if error is not None and error != span:
                claimed.append((start, end))
                edits.append((start, end, kind, error))
                return None
        return "no applicable site"

    for kind in plan.kinds:
        reason: str | None
        if kind is ErrorType.NUMERICAL:
            reason = place_edit(kind, numeric_spans, lambda s: _perturb_number_token(s, rng))
        elif kind is ErrorType.TEMPORAL:
            reason = place_edit(kind, temporal_spans, lambda s: _perturb_temporal(s, rng))
        elif kind is ErrorType.ENTITY:
            reason = _place_entity(passage, context, entity_spans, claimed, edits, rng)
        elif kind is ErrorType.RELATION:
            reason = place_edit(kind, relation_spans, flip_relation_word)
        elif kind is ErrorType.CONTRADICTORY:
            reason = _place_contradictory(
                passage, sents, mid_points, end_ok, claimed, statements, rng
            )
        else:
            reason = _place_unverifiable(passage, mid_points, end_ok, statements, rng)
        if reason is None:
            applied.append(kind)
        else:
            skipped.append(InsertionSkip(kind, reason))

    segments = _build_segments(passage, edits, statements)
    doc = TaggedDocument(tuple(segments), Form.TAGGED_PASSAGE)
    record = TaggedRecord(rid, passage, doc, "rule-based", seed)
    return InsertionResult(record, plan, tuple(applied), tuple(skipped))


def _place_entity(passage, context, entity_spans, claimed, edits, rng) -> str | None:
    free = [site for site in entity_spans if not _overlaps(site[0], site[1], claimed)]
    if not free:
        return "no capitalized multi-word span"
    start, end, span = rng.choice(free)
    harvested = [
        cand
        for _, _, cand in _entity_sites(context)
        if cand.lower() != span.lower()
    ]
    pool = harvested or [e for e in FALLBACK_ENTITIES if e.lower() != span.lower()]
    replacement = rng.choice(pool)
    claimed.append((start, end))
    edits.append((start, end, ErrorType.ENTITY, replacement))
    return None


def _place_contradictory(passage, sents, mid_points, end_ok, claimed, statements, rng) -> str | None:
    candidates = []
    for idx, (s, e) in enumerate(sents):
        if idx + 1 < len(sents):
            point = sents[idx + 1][0]
            if point not in mid_points:
                continue
            is_end = False
        else:
            if not end_ok:
                continue
            point, is_end = len(passage), True
        has_edit = _overlaps(s, e, claimed)
        candidates.append((idx, s, e, point, is_end, has_edit))
    if not candidates:
        return "no sentence with an insertable boundary"
    # Prefer sentences untouched by span edits so the copy contradicts
    # what the passage actually says.
    untouched = [c for c in candidates if not c[5]]
    order = untouched or candidates
    for _, s, e, point, is_end, _ in sorted(order, key=lambda c: rng.random()):
        flipped = _flip_sentence(passage[s:e], rng)
        if flipped is not None:
            statements.append((point, len(statements), is_end, ErrorType.CONTRADICTORY, flipped))
            return None
    return "no flippable sentence"


def _place_unverifiable(passage, mid_points, end_ok, statements, rng) -> str | None:
    content = rng.choice(_SPECULATIVE_SENTENCES)
    if end_ok:
        statements.append((len(passage), len(statements), True, ErrorType.UNVERIFIABLE, content))
        return None
    if mid_points:
        point = rng.choice(mid_points)
        statements.append((point, len(statements), False, ErrorType.UNVERIFIABLE, content))
        return None
    return "no insertable boundary"


def _build_segments(passage: str, edits: list, statements: list) -> list:
    """Weave edits and statement insertions back into the passage text.

    Statement insertions sit at sentence starts (or the passage end) and
    contribute the single space that `derive_original` later folds away,
    which is what makes the reconstruction exact.
    """
    items = sorted(
        [(start, 1, 0, ("edit", start, end, kind, error)) for start, end, kind, error in edits]
        + [(point, 0, seq, ("stmt", point, is_end, kind, content))
           for point, seq, is_end, kind, content in statements]
    )
    segments: list = []
    cursor = 0
    for _, _, _, item in items:
        if item[0] == "edit":
            _, start, end, kind, error = item
            segments.append(Text(passage[cursor:start]))
            segments.append(Edit(kind, passage[start:end], error))
            cursor = end
        else:
            _, point, is_end, kind, content = item
            segments.append(Text(passage[cursor:point]))
            if is_end:
                segments.append(Text(" "))
                segments.append(Statement(kind, content))
            else:
                segments.append(Statement(kind, content))
                segments.append(Text(" "))
            cursor = point
    segments.append(Text(passage[cursor:]))
    return segments


# --- few-shot prompting and the LLM inserter ------------------------------


@dataclass(frozen=True)
class Exemplar:
    kind: ErrorType
    passage: str
    tagged: str


class MissingExemplar(Exception):
    """A planned kind has no exemplar in the pool."""


DEFAULT_EXEMPLARS = (
    Exemplar(
        ErrorType.TEMPORAL,
        "The total amount outstanding in 2019 was $412.6 million.",
        "The total amount outstanding in <temporal><delete>2019</delete><mark>2014</mark></temporal> was $412.6 million.",
    ),
    Exemplar(
        ErrorType.TEMPORAL,
        "Crestline Capital repaid the loan in March 2021.",
        "Crestline Capital repaid the loan in <temporal><delete>March 2021</delete><mark>July 2021</mark></temporal>.",
    ),
    Exemplar(
        ErrorType.NUMERICAL,
        "The charge related to the restructuring was $25 million.",
        "The charge related to the restructuring was <numerical><delete>$25</delete><mark>$34</mark></numerical> million.",
    ),
    Exemplar(
        ErrorType.NUMERICAL,
        "Gross margin came in at 41.2% for the period.",
        "Gross margin came in at <numerical><delete>41.2%</delete><mark>28.9%</mark></numerical> for the period.",
    ),
    Exemplar(
        ErrorType.ENTITY,
        "In 2014, the net change in tax positions at Harbor Financial was an increase of $17,290.",
        "In 2014, the net change in tax positions at <entity><delete>Harbor Financial</delete><mark>Summit Industrial</mark></entity> was an increase of $17,290.",
    ),
    Exemplar(
        ErrorType.ENTITY,
        "Atlas Energy completed the divestiture during the second quarter.",
        "<entity><delete>Atlas Energy</delete><mark>Pacific Bancorp</mark></entity> completed the divestiture during the second quarter.",
    ),
    Exemplar(
        ErrorType.RELATION,
        "Earnings from service operations decreased from $32.8 million in 2000 to $35.1 million in 2001.",
        "Earnings from service operations <relation><delete>decreased</delete><mark>increased</mark></relation> from $32.8 million in 2000 to $35.1 million in 2001.",
    ),
    Exemplar(
        ErrorType.RELATION,
        "Operating cash flow was higher than in the prior year.",
        "Operating cash flow was <relation><delete>higher</delete><mark>lower</mark></relation> than in the prior year.",
    ),
    Exemplar(
        ErrorType.CONTRADICTORY,
        "Net revenue rose 8% in the fourth quarter. The company remained profitable.",
        "Net revenue rose 8% in the fourth quarter. <contradictory>Net revenue fell 8% in the fourth quarter.</contradictory> The company remained profitable.",
    ),
    Exemplar(
        ErrorType.CONTRADICTORY,
        "Cash and equivalents increased to $88.1 million at year end.",
        "Cash and equivalents increased to $88.1 million at year end. <contradictory>Cash and equivalents decreased to $88.1 million at year end.</contradictory>",
    ),
    Exemplar(
        ErrorType.UNVERIFIABLE,
        "The notes bear interest at 5.25% and mature in 2027.",
        "The notes bear interest at 5.25% and mature in 2027. <unverifiable>Management privately expects to refinance them on far better terms.</unverifiable>",
    ),
    Exemplar(
        ErrorType.UNVERIFIABLE,
        "Segment revenue was flat compared with the prior period.",
        "Segment revenue was flat compared with the prior period. <unverifiable>Insiders attribute the plateau to an unannounced product delay.</unverifiable>",
    ),
)


def load_exemplars(path: str | Path) -> tuple:
    """Read an exemplar pool from JSONL of {"kind", "passage", "tagged"}."""
    pool = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            if "_meta" in obj:
                continue
            pool.append(Exemplar(ErrorType(obj["kind"]), obj["passage"], obj["tagged"]))
    return tuple(pool)


def build_insertion_prompt(
    passage: str,
    context: str,
    plan: InsertionPlan,
    exemplar_pool: Sequence[Exemplar] | None = None,
    seed: int = 0,
) -> str:
    """Assemble the few-shot insertion prompt for one plan.

    Contains the definition and exactly one seed-chosen exemplar for every
    planned kind; deterministic given its inputs.
    """
    pool: dict[ErrorType, list[Exemplar]] = {}
    for ex in exemplar_pool if exemplar_pool is not None else DEFAULT_EXEMPLARS:
        pool.setdefault(ex.kind, []).append(ex)
    rng = random.Random(f"prompt:{seed}")
    planned = [t for t in ErrorType if t in set(plan.kinds)]
    blocks = []
    for kind in planned:
        candidates = pool.get(kind)
        if not candidates:
            raise MissingExemplar(f"no exemplar for kind {kind.value!r}")
        ex = rng.choice(candidates)
        blocks.append(f"[{kind.value}]\nPassage: {ex.passage}\nTagged: {ex.tagged}")
    definitions = "\n".join(f"- {TAG_DEFINITIONS[kind]}" for kind in planned)
    kinds_label = ", ".join(kind.value for kind in plan.kinds)
    return INSERTION_PROMPT_TEMPLATE.format(
        count=plan.count,
        kinds=kinds_label,
        definitions=definitions,
        exemplars="\n\n".join(blocks),
        context=context,
        passage=passage,
    )


class InsertionFailure(Exception):
    """The LLM inserter exhausted its retries on unfixable defects."""

    def __init__(self, issues: Iterable):
        self.issues = tuple(issues)
        detail = "; ".join(i.detail for i in self.issues) or "no reply parsed"
        super().__init__(f"insertion failed quality gate: {detail}")


def _call_client(client, request):
    cached = getattr(client, "cached_complete", None)
    profile = getattr(client, "profile", None)
    if cached is not None and profile is not None and getattr(profile, "cache_path", None):
        return cached(request)
    return client.complete(request)


def insert_llm(
    passage: str,
    context: str,
    plan: InsertionPlan,
    client,
    max_retries: int = 2,
    exemplar_pool: Sequence[Exemplar] | None = None,
    record_id: str | None = None,
) -> TaggedRecord:
    """Insert errors via a chat-completion client, gated for quality.

    The reply is parsed leniently and passed through the quality gate;
    fixable issues are repaired in place, unfixable ones trigger a retry
    with a fresh prompt seed. Raises InsertionFailure after `max_retries`
    extra attempts, or ClientError on transport failure.
    """
    rid = record_id if record_id is not None else f"llm-{plan.seed}"
    provenance = getattr(client, "name", "") or "llm"
    if plan.clean:
        doc = TaggedDocument((Text(passage),), Form.TAGGED_PASSAGE)
        return TaggedRecord(rid, passage, doc, provenance, plan.seed)

    last_issues: tuple = ()
    for attempt in range(1 + max(0, max_retries)):
        prompt = build_insertion_prompt(
            passage, context, plan, exemplar_pool, seed=plan.seed + attempt
        )
        reply = _call_client(
            client,
            CompletionRequest(
                system=INSERTION_SYSTEM_PROMPT,
                user=prompt,
                seed_tag=f"insert:{plan.seed}:{attempt}",
            ),
        )
        payload = strip_reply_envelope(reply.text, keys=("Tagged", "Edited"))
        doc, warnings = parse(payload, Form.TAGGED_PASSAGE)
        record = TaggedRecord(rid, passage, doc, provenance or reply.model, plan.seed)
        outcome = fix(record, warnings)
        if outcome.fixed:
            return outcome.record
        last_issues = outcome.reasons
    raise InsertionFailure(last_issues)
