"""Inline error-tag markup: grammar, parser, serializer, and the passage
renderings derived from a tagged document.

The grammar is deliberately small and flat. Six error tags exist:

    <temporal> <numerical> <entity> <relation>     (editable)
    <contradictory> <unverifiable>                 (statement-level)

An editable tag wraps exactly one ``<delete>`` and one ``<mark>`` child and
nothing else; a statement-level tag wraps plain text. No other nesting is
legal, tags carry no attributes, and names are lowercase ASCII.

A document has one of two forms that differ only in which child holds the
erroneous text:

* tagged passage -- ``<delete>`` holds the original span, ``<mark>`` the
  inserted error (children serialized delete-first);
* target output -- ``<mark>`` holds the correction, ``<delete>`` the error
  (children serialized mark-first).

Both child orders are accepted on input regardless of form (models mix
them); roles are assigned by tag name under the declared form, and a
non-canonical order is reported as an advisory warning. Whitespace directly
between the two children of an editable tag is insignificant and dropped.

Lenient parsing never fails: any construct that cannot be parsed is demoted
to literal text and reported as a warning, so every input byte survives in
the AST.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum


class ErrorType(Enum):
    """The six error kinds of the tag taxonomy."""

    TEMPORAL = "temporal"
    NUMERICAL = "numerical"
    ENTITY = "entity"
    RELATION = "relation"
    CONTRADICTORY = "contradictory"
    UNVERIFIABLE = "unverifiable"

    @property
    def editable(self) -> bool:
        return self in _EDITABLE_SET

    @property
    def statement_level(self) -> bool:
        return self not in _EDITABLE_SET


_EDITABLE_SET = frozenset(
    {ErrorType.TEMPORAL, ErrorType.NUMERICAL, ErrorType.ENTITY, ErrorType.RELATION}
)

EDITABLE_TYPES = tuple(t for t in ErrorType if t.editable)
STATEMENT_TYPES = tuple(t for t in ErrorType if t.statement_level)

# Extra statement-level labels accepted only when scoring corpora annotated
# with the FAVA taxonomy; they never occur in documents this package emits.
FAVA_EXTRA_STATEMENT_TAGS = ("invented", "subjective")

_CHILD_NAMES = ("delete", "mark")


class Form(Enum):
    TAGGED_PASSAGE = "tagged_passage"
    TARGET_OUTPUT = "target_output"


def label_of(kind: ErrorType | str) -> str:
    return kind.value if isinstance(kind, ErrorType) else kind


@dataclass(frozen=True)
class Text:
    content: str


@dataclass(frozen=True)
class Edit:
    """An editable error: the original span and the erroneous span."""

    kind: ErrorType
    original_text: str
    error_text: str


@dataclass(frozen=True)
class Statement:
    """A wholly inserted erroneous sentence (no correction span)."""

    kind: ErrorType | str
    content: str


Segment = Text | Edit | Statement


@dataclass(frozen=True)
class TaggedDocument:
    """Flat segment list plus the form its serialization follows.

    Construction canonicalizes the segment list: empty text segments are
    dropped and adjacent text segments merged, so structurally equal
    documents serialize identically and ``parse(serialize(d)) == d``.
    """

    segments: tuple
    form: Form = Form.TAGGED_PASSAGE

    def __post_init__(self) -> None:
        merged: list = []
        for seg in self.segments:
            if isinstance(seg, Text):
                if not seg.content:
                    continue
                if merged and isinstance(merged[-1], Text):
                    merged[-1] = Text(merged[-1].content + seg.content)
                    continue
            merged.append(seg)
        object.__setattr__(self, "segments", tuple(merged))

    @property
    def has_tags(self) -> bool:
        return any(not isinstance(s, Text) for s in self.segments)

    def kinds(self) -> list:
        """Tag kinds in document order (multiset, duplicates kept)."""
        return [s.kind for s in self.segments if not isinstance(s, Text)]


@dataclass(frozen=True)
class TagSpan:
    """One tag located by character offsets into the erroneous rendering."""

    kind: ErrorType | str
    start: int
    end: int
    error_text: str
    correction: str | None = None


class ParseErrorKind(Enum):
    UNCLOSED_TAG = "unclosed_tag"
    UNKNOWN_TAG = "unknown_tag"
    ILLEGAL_NESTING = "illegal_nesting"
    MISSING_DELETE_MARK_PAIR = "missing_delete_mark_pair"
    STRAY_CHILD = "stray_child"


class ParseError(ValueError):
    """Strict-mode parse failure; pinpoints the offending tag."""

    def __init__(self, kind: ParseErrorKind, offset: int, tag: str, message: str):
        super().__init__(f"{kind.value} at offset {offset} ({tag}): {message}")
        self.kind = kind
        self.offset = offset
        self.tag = tag


@dataclass(frozen=True)
class ParseWarning:
    """Lenient-mode diagnostic.

    category "demoted" means structure was lost (tag text kept literally);
    "order" flags a non-canonical delete/mark order for the declared form.
    """

    message: str
    offset: int
    tag: str
    category: str = "demoted"


@dataclass(frozen=True)
class ParseResult:
    document: TaggedDocument
    warnings: tuple

    def __iter__(self):
        return iter((self.document, self.warnings))


# Anything shaped like a simple tag; classification into known/unknown
# happens against the active tag set. Bare "<" or "<3.5>" is plain text.
_TAG_CANDIDATE_RE = re.compile(r"<(/?)([A-Za-z]+)>")


@dataclass(frozen=True)
class _Tok:
    start: int
    end: int
    name: str
    closing: bool

    @property
    def raw(self) -> str:
        return ("</" if self.closing else "<") + self.name + ">"


class _Demote(Exception):
    """Internal lenient-mode signal: literalize the opener and resume."""

    def __init__(self, message: str):
        self.message = message


def contains_tag_token(text: str, extra_statement_tags: tuple = ()) -> bool:
    """True if `text` contains any token of the grammar (or compat labels)."""
    known = _known_names(extra_statement_tags)
    return any(m.group(2) in known for m in _TAG_CANDIDATE_RE.finditer(text))


def _known_names(extra_statement_tags: tuple) -> frozenset:
    return frozenset(
        [t.value for t in ErrorType] + list(_CHILD_NAMES) + list(extra_statement_tags)
    )


def parse(
    text: str,
    form: Form = Form.TAGGED_PASSAGE,
    *,
    strict: bool = False,
    extra_statement_tags: tuple = (),
) -> ParseResult:
    """Parse `text` into a TaggedDocument.

    Strict mode raises ParseError on the first grammar violation. Lenient
    mode (default) always succeeds: violating constructs are demoted to
    literal text and reported as warnings, so the AST preserves every input
    byte.
    """
    statement_names = {t.value for t in STATEMENT_TYPES} | set(extra_statement_tags)
    editable_names = {t.value for t in EDITABLE_TYPES}
    known = _known_names(extra_statement_tags)

    toks = [
        _Tok(m.start(), m.end(), m.group(2), m.group(1) == "/")
        for m in _TAG_CANDIDATE_RE.finditer(text)
    ]

    segments: list = []
    warnings: list = []
    buf: list[str] = []

    def flush() -> None:
        if buf:
            segments.append(Text("".join(buf)))
            buf.clear()

    def demote(tok: _Tok, message: str) -> None:
        warnings.append(ParseWarning(message, tok.start, tok.raw))
        buf.append(text[tok.start:tok.end])

    i = 0
    pos = 0
    while True:
        tok = toks[i] if i < len(toks) else None
        buf.append(text[pos:tok.start] if tok else text[pos:])
        if tok is None:
            break
        if tok.name not in known:
            if strict:
                raise ParseError(
                    ParseErrorKind.UNKNOWN_TAG, tok.start, tok.raw, "not a grammar tag"
                )
            demote(tok, f"unknown tag {tok.raw} kept as text")
        elif tok.closing:
            if strict:
                raise ParseError(
                    ParseErrorKind.STRAY_CHILD, tok.start, tok.raw, "closer without opener"
                )
            demote(tok, f"stray closer {tok.raw} kept as text")
        elif tok.name in _CHILD_NAMES:
            if strict:
                raise ParseError(
                    ParseErrorKind.STRAY_CHILD,
                    tok.start,
                    tok.raw,
                    "delete/mark outside an editable tag",
                )
            demote(tok, f"orphan {tok.raw} kept as text")
        elif tok.name in editable_names:
            try:
                seg, i, pos, extra = _parse_edit(text, toks, i, form, strict, known)
            except _Demote as d:
                demote(tok, d.message)
            else:
                flush()
                segments.append(seg)
                warnings.extend(extra)
                continue
        else:  # statement-level opener
            try:
                seg, i, pos, extra = _parse_statement(text, toks, i, strict, known)
            except _Demote as d:
                demote(tok, d.message)
            else:
                flush()
                segments.append(seg)
                warnings.extend(extra)
                continue
        pos = tok.end
        i += 1
    flush()
    return ParseResult(TaggedDocument(tuple(segments), form), tuple(warnings))


def _parse_statement(text, toks, i, strict, known):
    opener = toks[i]
    inner_warnings = []
    j = i + 1
    while j < len(toks):
        t = toks[j]
        if t.closing and t.name == opener.name:
            content = text[opener.end:t.start]
            kind = _statement_kind(opener.name)
            return Statement(kind, content), j + 1, t.end, inner_warnings
        if strict:
            if t.name in known:
                raise ParseError(
                    ParseErrorKind.ILLEGAL_NESTING,
                    t.start,
                    t.raw,
                    f"tag inside <{opener.name}>",
                )
            raise ParseError(
                ParseErrorKind.UNKNOWN_TAG, t.start, t.raw, "not a grammar tag"
            )
        inner_warnings.append(
            ParseWarning(
                f"{t.raw} inside <{opener.name}> kept as literal text", t.start, t.raw
            )
        )
        j += 1
    if strict:
        raise ParseError(
            ParseErrorKind.UNCLOSED_TAG, opener.start, opener.raw, "no matching closer"
        )
    raise _Demote(f"unclosed {opener.raw} kept as text")


def _statement_kind(name: str):
    try:
        return ErrorType(name)
    except ValueError:
        return name  # compatibility label (e.g. FAVA's invented/subjective)


def _parse_edit(text, toks, i, form, strict, known):
    opener = toks[i]
    kind = ErrorType(opener.name)
    inner_warnings = []
    children: dict[str, str] = {}
    order: list[str] = []
    j = i + 1
    pos = opener.end
    while True:
        if j >= len(toks):
            if strict:
                raise ParseError(
                    ParseErrorKind.UNCLOSED_TAG, opener.start, opener.raw, "no matching closer"
                )
            raise _Demote(f"unclosed {opener.raw} kept as text")
        t = toks[j]
        gap = text[pos:t.start]
        if gap.strip():
            if strict:
                raise ParseError(
                    ParseErrorKind.STRAY_CHILD,
                    pos,
                    opener.raw,
                    f"text inside <{opener.name}> outside delete/mark",
                )
            raise _Demote(f"text inside {opener.raw} outside its children")
        if t.closing and t.name == opener.name:
            if set(children) != set(_CHILD_NAMES):
                if strict:
                    raise ParseError(
                        ParseErrorKind.MISSING_DELETE_MARK_PAIR,
                        opener.start,
                        opener.raw,
                        f"found {order or 'no children'}, need one delete and one mark",
                    )
                raise _Demote(f"{opener.raw} lacks a delete/mark pair")
            if form is Form.TAGGED_PASSAGE:
                original, error = children["delete"], children["mark"]
                canonical_first = "delete"
            else:
                original, error = children["mark"], children["delete"]
                canonical_first = "mark"
            if order[0] != canonical_first:
                inner_warnings.append(
                    ParseWarning(
                        f"<{opener.name}> children in {order[0]}-first order; "
                        f"canonical for this form is {canonical_first}-first",
                        opener.start,
                        opener.raw,
                        category="order",
                    )
                )
            return Edit(kind, original, error), j + 1, t.end, inner_warnings
        if not t.closing and t.name in _CHILD_NAMES:
            if t.name in children:
                if strict:
                    raise ParseError(
                        ParseErrorKind.MISSING_DELETE_MARK_PAIR,
                        t.start,
                        t.raw,
                        f"duplicate <{t.name}> child",
                    )
                raise _Demote(f"duplicate <{t.name}> inside {opener.raw}")
            k = j + 1
            while k < len(toks) and not (toks[k].closing and toks[k].name == t.name):
                inner = toks[k]
                if strict:
                    if inner.name in known:
                        raise ParseError(
                            ParseErrorKind.ILLEGAL_NESTING,
                            inner.start,
                            inner.raw,
                            f"tag inside <{t.name}>",
                        )
                    raise ParseError(
                        ParseErrorKind.UNKNOWN_TAG, inner.start, inner.raw, "not a grammar tag"
                    )
                inner_warnings.append(
                    ParseWarning(
                        f"{inner.raw} inside <{t.name}> kept as literal text",
                        inner.start,
                        inner.raw,
                    )
                )
                k += 1
            if k >= len(toks):
                if strict:
                    raise ParseError(
                        ParseErrorKind.UNCLOSED_TAG, t.start, t.raw, "no matching closer"
                    )
                raise _Demote(f"unclosed {t.raw} inside {opener.raw}")
            children[t.name] = text[t.end:toks[k].start]
            order.append(t.name)
            pos = toks[k].end
            j = k + 1
            continue
        # Some other token directly inside the wrapper.
        if strict:
            if t.name in known and not t.closing:
                raise ParseError(
                    ParseErrorKind.ILLEGAL_NESTING,
                    t.start,
                    t.raw,
                    f"tag inside <{opener.name}>",
                )
            if t.name in known:
                raise ParseError(
                    ParseErrorKind.STRAY_CHILD, t.start, t.raw, "mismatched closer"
                )
            raise ParseError(
                ParseErrorKind.UNKNOWN_TAG, t.start, t.raw, "not a grammar tag"
            )
        raise _Demote(f"unexpected {t.raw} inside {opener.raw}")


def serialize(doc: TaggedDocument) -> str:
    """Render the document back to tagged text in its declared form."""
    parts: list[str] = []
    for seg in doc.segments:
        if isinstance(seg, Text):
            parts.append(seg.content)
        elif isinstance(seg, Statement):
            label = label_of(seg.kind)
            parts.append(f"<{label}>{seg.content}</{label}>")
        else:
            label = seg.kind.value
            if doc.form is Form.TAGGED_PASSAGE:
                inner = (
                    f"<delete>{seg.original_text}</delete><mark>{seg.error_text}</mark>"
                )
            else:
                inner = (
                    f"<mark>{seg.original_text}</mark><delete>{seg.error_text}</delete>"
                )
            parts.append(f"<{label}>{inner}</{label}>")
    return "".join(parts)


def derive_erroneous(doc: TaggedDocument) -> tuple[str, list[TagSpan]]:
    """The corrupted rendering (tags stripped, errors kept) plus one TagSpan
    per tag with offsets into that rendering. Form-invariant."""
    parts: list[str] = []
    spans: list[TagSpan] = []
    pos = 0
    for seg in doc.segments:
        if isinstance(seg, Text):
            piece = seg.content
        elif isinstance(seg, Edit):
            piece = seg.error_text
            spans.append(
                TagSpan(seg.kind, pos, pos + len(piece), piece, seg.original_text)
            )
        else:
            piece = seg.content
            spans.append(TagSpan(seg.kind, pos, pos + len(piece), piece, None))
        parts.append(piece)
        pos += len(piece)
    return "".join(parts), spans


def derive_original(doc: TaggedDocument) -> str:
    """Reconstruct the clean passage: edits render their original span and
    statement-level insertions are removed, collapsing the doubled
    whitespace a removal leaves to a single space and trimming whitespace
    stranded at the ends."""
    acc = ""
    pending_removal = False
    for seg in doc.segments:
        if isinstance(seg, Statement):
            pending_removal = True
            continue
        piece = seg.content if isinstance(seg, Text) else seg.original_text
        if pending_removal:
            if not acc:
                piece = piece.lstrip()
            elif acc[-1].isspace() and piece[:1].isspace():
                acc = acc.rstrip() + " "
                piece = piece.lstrip()
            pending_removal = False
        acc += piece
    if pending_removal:
        acc = acc.rstrip()
    return acc


def to_target_output(doc: TaggedDocument) -> TaggedDocument:
    """Flip a tagged passage into target-output form. Segment semantics are
    unchanged; only the serialization order of delete/mark flips."""
    if doc.form is Form.TARGET_OUTPUT:
        raise ValueError("document is already in target-output form")
    return TaggedDocument(doc.segments, Form.TARGET_OUTPUT)
