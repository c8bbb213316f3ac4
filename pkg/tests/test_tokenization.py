import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hilite.errors import RangeBoundsError
from hilite.tokenization import TokenizedContext, restrict_omega, tokenize


def test_empty_text_yields_zero_tokens():
    ctx = tokenize("")
    assert ctx.tokens == []
    assert ctx.omega == ()


def test_two_word_identity_case():
    ctx = tokenize("a b")
    assert [(t.text, t.char_start, t.char_end) for t in ctx.tokens] == [
        ("a", 0, 1),
        ("b", 2, 3),
    ]


def test_punctuation_split_with_byte_offsets():
    # hand-applied split rule: punctuation is its own token
    ctx = tokenize("grips, makeup")
    assert [(t.text, t.char_start, t.char_end) for t in ctx.tokens] == [
        ("grips", 0, 5),
        (",", 5, 6),
        ("makeup", 7, 13),
    ]


def test_offsets_are_byte_offsets_for_multibyte_text():
    text = "café bar"  # é is 2 bytes in UTF-8
    ctx = tokenize(text)
    raw = text.encode("utf-8")
    for tok in ctx.tokens:
        assert raw[tok.char_start : tok.char_end].decode("utf-8") == tok.text
    assert ctx.tokens[1].char_start == 6  # "bar" starts after the 5-byte word + space


def test_omega_defaults_to_all_tokens():
    ctx = tokenize("one two three")
    assert ctx.omega == (0, 1, 2)


TEXTS = st.text(
    alphabet=st.characters(blacklist_categories=("Cs",)),
    max_size=200,
)


@given(TEXTS)
@settings(max_examples=300, deadline=None)
def test_round_trip_and_monotonicity(text):
    ctx = tokenize(text)
    raw = text.encode("utf-8")
    prev_end = -1
    for tok in ctx.tokens:
        assert raw[tok.char_start : tok.char_end].decode("utf-8") == tok.text
        assert tok.char_start < tok.char_end
        assert tok.char_start >= prev_end
        prev_end = tok.char_end
    # gaps between tokens contain no token characters; rebuilding the source
    # from slices + gaps is the identity
    pieces = []
    cursor = 0
    for tok in ctx.tokens:
        pieces.append(raw[cursor : tok.char_start])
        pieces.append(raw[tok.char_start : tok.char_end])
        cursor = tok.char_end
    pieces.append(raw[cursor:])
    assert b"".join(pieces) == raw


@given(TEXTS)
@settings(max_examples=100, deadline=None)
def test_determinism(text):
    assert tokenize(text) == tokenize(text)


def test_restrict_omega_no_ranges_is_identity():
    ctx = tokenize("a b c d e")
    assert restrict_omega(ctx, []).omega == ctx.omega


def test_restrict_omega_full_exclusion_empties_omega():
    ctx = tokenize("a b c")
    n = len(ctx.source_bytes)
    assert restrict_omega(ctx, [(0, n)]).omega == ()


def test_restrict_omega_partial():
    ctx = tokenize("aa bb cc dd ee")  # tokens at 0-2, 3-5, 6-8, 9-11, 12-14
    out = restrict_omega(ctx, [(0, 5)])  # covers tokens 0 and 1
    assert out.omega == (2, 3, 4)


def test_restrict_omega_out_of_bounds_rejected():
    ctx = tokenize("a b")
    with pytest.raises(RangeBoundsError):
        restrict_omega(ctx, [(0, 99)])


def test_explicit_empty_omega_is_preserved():
    ctx = TokenizedContext(source="a b", tokens=tokenize("a b").tokens, omega=())
    assert ctx.omega == ()
