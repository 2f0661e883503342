"""Shared lexical machinery: number/date token shapes, the relation antonym
lexicon, and deterministic sentence segmentation.

Everything here is pure and regex-based so the modules built on top of it
(quality gate, rule-based inserter, grounding filter, containment judge)
stay deterministic and offline.
"""

from __future__ import annotations

import re
from decimal import Decimal, InvalidOperation

MONTH_NAMES = (
    "january", "february", "march", "april", "may", "june",
    "july", "august", "september", "october", "november", "december",
)

_MONTH_ALT = "|".join(MONTH_NAMES)
_YEAR = r"(?:1[89]\d\d|20\d\d)"
_ORDINAL_QUARTER = r"(?:first|second|third|fourth)"

YEAR_RE = re.compile(_YEAR)

# Span shapes used to decide what an edited span "looks like". These are
# fullmatch patterns over a trimmed span, not prose scanners.
TEMPORAL_SPAN_RE = re.compile(
    rf"""(?:
        (?:{_MONTH_ALT})(?:\s+\d{{1,2}}\s*,?)?(?:\s+{_YEAR})?
        | {_YEAR}(?:\s*[-–]\s*{_YEAR})?
        | (?:fiscal(?:\s+year)?|fy)\s*{_YEAR}
        | q[1-4](?:\s+(?:of\s+)?{_YEAR})?
        | {_ORDINAL_QUARTER}\s+quarter(?:\s+of\s+{_YEAR})?
    )""",
    re.IGNORECASE | re.VERBOSE,
)

_NUM_CORE = r"(?:\d{1,3}(?:,\d{3})+(?:\.\d+)?|\d+(?:\.\d+)?)"
_MAGNITUDE = r"(?:hundred|thousand|million|billion|trillion|bn|mm|k|bps|basis\s+points|percent|percentage\s+points)"

NUMERIC_SPAN_RE = re.compile(
    rf"""[-+]?\(?\s*[$€£]?\s?{_NUM_CORE}\s*\)?%?(?:\s+{_MAGNITUDE})?""",
    re.IGNORECASE | re.VERBOSE,
)

# Prose scanner for number-ish tokens (grounding filter, containment judge).
NUMBER_TOKEN_RE = re.compile(r"[$€£]?\d[\d,]*(?:\.\d+)?%?")


def is_temporal_span(span: str) -> bool:
    return bool(TEMPORAL_SPAN_RE.fullmatch(span.strip()))


def is_numeric_span(span: str) -> bool:
    return bool(NUMERIC_SPAN_RE.fullmatch(span.strip()))


def normalize_number(token: str) -> str | None:
    """Canonical value string for a number token, or None if not numeric.

    "$19.50" and "19.5" normalize identically; thousands separators and
    currency/percent sigils are ignored.
    """
    core = token.strip().strip("$€£%").replace(",", "")
    if not core:
        return None
    try:
        value = Decimal(core)
    except InvalidOperation:
        return None
    normalized = value.normalize()
    # Decimal renders 3500 as 3.5E+3 after normalize; undo scientific form.
    return format(normalized, "f")


def extract_numbers(text: str) -> set[str]:
    """All normalized number/year tokens appearing in `text`."""
    out = set()
    for m in NUMBER_TOKEN_RE.finditer(text):
        norm = normalize_number(m.group())
        if norm is not None:
            out.add(norm)
    return out


# Relation words whose flip inverts the claim. Kept symmetric: the mapping
# contains both directions of every pair.
ANTONYM_PAIRS = (
    ("increased", "decreased"),
    ("increase", "decrease"),
    ("increases", "decreases"),
    ("increasing", "decreasing"),
    ("rose", "fell"),
    ("rise", "fall"),
    ("rises", "falls"),
    ("risen", "fallen"),
    ("grew", "shrank"),
    ("growth", "decline"),
    ("gain", "loss"),
    ("gains", "losses"),
    ("gained", "lost"),
    ("higher", "lower"),
    ("highest", "lowest"),
    ("more", "less"),
    ("up", "down"),
    ("above", "below"),
    ("improved", "declined"),
    ("climbed", "dropped"),
    ("expanded", "contracted"),
    ("strengthened", "weakened"),
    ("outperformed", "underperformed"),
    ("has", "does not have"),
    ("have", "do not have"),
)

ANTONYMS: dict[str, str] = {}
for _a, _b in ANTONYM_PAIRS:
    ANTONYMS.setdefault(_a, _b)
    ANTONYMS.setdefault(_b, _a)

RELATION_WORD_RE = re.compile(
    r"\b(?:" + "|".join(sorted((re.escape(w) for w in ANTONYMS), key=len, reverse=True)) + r")\b",
    re.IGNORECASE,
)


def flip_relation_word(word: str) -> str | None:
    """Antonym of a relation word, preserving leading capitalization."""
    replacement = ANTONYMS.get(word.lower())
    if replacement is None:
        return None
    if word[:1].isupper():
        return replacement[:1].upper() + replacement[1:]
    return replacement


# Sentence segmentation. Terminal punctuation ends a sentence only when it
# is not part of a decimal or a known abbreviation and the following text
# starts a plausible new sentence.
_ABBREVIATIONS = {
    "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "no", "inc", "corp",
    "co", "ltd", "llc", "llp", "lp", "plc", "vs", "etc", "approx", "est",
    "dept", "fig", "jan", "feb", "mar", "apr", "jun", "jul", "aug", "sep",
    "sept", "oct", "nov", "dec", "u.s", "u.k", "e.g", "i.e",
}

_TERMINAL_RE = re.compile(r"[.!?]+")


def _is_abbreviation(word: str) -> bool:
    token = word.rstrip(".").lower()
    if not token:
        return False
    if token in _ABBREVIATIONS:
        return True
    # Single initials ("J.") and dotted acronyms ("u.s") read as abbreviations.
    return len(token) == 1 and token.isalpha()


def sentence_spans(text: str) -> list[tuple[int, int]]:
    """(start, end) spans of sentences in `text`, excluding separators."""
    spans: list[tuple[int, int]] = []
    n = len(text)
    start = 0
    while start < n and text[start].isspace():
        start += 1
    if start >= n:
        return []
    for m in _TERMINAL_RE.finditer(text):
        end = m.end()
        if end <= start:
            continue
        if end < n and not text[end].isspace():
            continue  # decimal point or mid-token punctuation
        nxt = end
        while nxt < n and text[nxt].isspace():
            nxt += 1
        if nxt < n and not (text[nxt].isupper() or text[nxt].isdigit() or text[nxt] in "\"'($“"):
            continue
        word_start = m.start()
        while word_start > 0 and not text[word_start - 1].isspace():
            word_start -= 1
        if _is_abbreviation(text[word_start:m.start()]):
            continue
        spans.append((start, end))
        start = nxt
    if start < n:
        end = n
        while end > start and text[end - 1].isspace():
            end -= 1
        if end > start:
            spans.append((start, end))
    return spans


def squash_ws(text: str) -> str:
    """Collapse all whitespace runs to single spaces and trim the ends."""
    return " ".join(text.split())
