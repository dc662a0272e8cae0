import itertools

import pytest
from hypothesis import given
from hypothesis import strategies as st

from prismghz.core import (
    ALL_SETTINGS,
    DEFECTIVE,
    MINUS,
    OMEGAS,
    PLUS,
    HiddenTuple,
    ParseError,
    format_tuple,
    parse_tuple,
    slot_index,
)


def test_parse_table_row():
    t = parse_tuple("(+-D-++)")
    assert t.slots == (PLUS, MINUS, DEFECTIVE, MINUS, PLUS, PLUS)


def test_parse_unicode_minus_and_spaces():
    assert parse_tuple("( − − − − D + )") == parse_tuple("----D+")


def test_parse_all_defective():
    assert parse_tuple("DDDDDD").slots == (DEFECTIVE,) * 6


@pytest.mark.parametrize("text", ["(+-)", "+-D-+++", ""])
def test_parse_wrong_length(text):
    with pytest.raises(ParseError, match="expected 6"):
        parse_tuple(text)


def test_parse_illegal_symbol_names_position():
    with pytest.raises(ParseError, match="position 3"):
        parse_tuple("+-DX++")


@pytest.mark.parametrize(
    "slots, text",
    [
        ((MINUS, MINUS, MINUS, MINUS, DEFECTIVE, PLUS), "----D+"),
        ((DEFECTIVE,) * 6, "DDDDDD"),
        ((PLUS, PLUS, PLUS, PLUS, DEFECTIVE, PLUS), "++++D+"),
    ],
)
def test_format(slots, text):
    assert format_tuple(HiddenTuple(slots)) == text


def test_round_trip_all_729():
    for chars in itertools.product("+-D", repeat=6):
        text = "".join(chars)
        assert format_tuple(parse_tuple(text)) == text


@given(st.tuples(*[st.sampled_from([PLUS, MINUS, DEFECTIVE])] * 6))
def test_round_trip_property(slots):
    t = HiddenTuple(slots)
    assert parse_tuple(format_tuple(t)) == t


def test_slot_layout():
    assert [slot_index(s, a) for s in range(3) for a in ("pi/2", "0")] == [0, 1, 2, 3, 4, 5]


def test_settings_and_omegas():
    assert len(set(ALL_SETTINGS)) == 8
    assert [o.setting.slots() for o in OMEGAS] == [(0, 3, 5), (1, 2, 5), (1, 3, 4), (0, 2, 4)]
    assert [o.required_value for o in OMEGAS] == [1, 1, 1, -1]


def test_canonical_order():
    assert parse_tuple("----D+") < parse_tuple("---D-+") < parse_tuple("---+-D")
