"""Deterministic tokenization with exact byte offsets.

Raw text is split into tokens that each carry their byte range into the
UTF-8 encoding of the source.  Those offsets are the substrate everything
else builds on: masks address tokens, spans address byte ranges, and marker
injection splices at byte boundaries.  All offsets in this package are byte
offsets (unambiguous across implementations); token boundaries always fall
on code-point boundaries, so slicing the encoded source at token offsets can
never cut a multi-byte character in half.

The default rule splits on whitespace and keeps each punctuation character
as its own token: a token is either a maximal run of word characters
(Unicode letters, digits, underscore) or a single non-word, non-space
character.  Any tokenizer producing the same (text, byte range) contract can
be substituted; this one is the reference used by the test suite.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import RangeBoundsError

_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)


@dataclass(frozen=True)
class Token:
    """One token plus its byte range [char_start, char_end) in the source."""

    text: str
    char_start: int
    char_end: int


@dataclass
class TokenizedContext:
    """Source text, its tokens, and the policy-controlled index set omega.

    omega holds the token indices eligible for highlighting.  It defaults to
    every token (None at construction); callers exclude query/instruction
    regions via :func:`restrict_omega`.  An explicitly empty omega stays
    empty.
    """

    source: str
    tokens: list[Token]
    omega: tuple[int, ...] | None = field(default=None)

    def __post_init__(self):
        if self.omega is None:
            self.omega = tuple(range(len(self.tokens)))

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def source_bytes(self) -> bytes:
        return self.source.encode("utf-8")

    def token_texts(self) -> list[str]:
        return [t.text for t in self.tokens]


def tokenize(text: str) -> TokenizedContext:
    """Split ``text`` into offset-annotated tokens.

    Pure and deterministic; empty input yields zero tokens.  Offsets are
    byte offsets even though the regex runs over the decoded string, so the
    invariant ``source_bytes[t.char_start:t.char_end].decode() == t.text``
    holds for arbitrary Unicode input.
    """
    tokens: list[Token] = []
    if not text:
        return TokenizedContext(source=text, tokens=tokens)
    if text.isascii():
        for m in _TOKEN_RE.finditer(text):
            tokens.append(Token(m.group(0), m.start(), m.end()))
        return TokenizedContext(source=text, tokens=tokens)
    # byte offset of each character position, built once
    byte_at = [0] * (len(text) + 1)
    pos = 0
    for i, ch in enumerate(text):
        pos += len(ch.encode("utf-8"))
        byte_at[i + 1] = pos
    for m in _TOKEN_RE.finditer(text):
        tokens.append(Token(m.group(0), byte_at[m.start()], byte_at[m.end()]))
    return TokenizedContext(source=text, tokens=tokens)


def restrict_omega(
    ctx: TokenizedContext, excluded_char_ranges: list[tuple[int, int]]
) -> TokenizedContext:
    """Return a copy of ``ctx`` whose omega excludes tokens touching any
    excluded byte range.

    A token survives only if it lies fully outside every excluded range.
    Ranges must fall within the source bounds.
    """
    n_bytes = len(ctx.source_bytes)
    for start, end in excluded_char_ranges:
        if start < 0 or end > n_bytes or start > end:
            raise RangeBoundsError(
                f"excluded range [{start}, {end}) outside source bounds [0, {n_bytes})"
            )
    kept = []
    for i in ctx.omega:
        tok = ctx.tokens[i]
        inside = any(
            tok.char_start < end and tok.char_end > start
            for start, end in excluded_char_ranges
        )
        if not inside:
            kept.append(i)
    return TokenizedContext(source=ctx.source, tokens=ctx.tokens, omega=tuple(kept))
