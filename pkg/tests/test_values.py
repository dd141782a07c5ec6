from __future__ import annotations

import keyword
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from casegen import values


def scalars():
    return st.one_of(
        st.none(),
        st.booleans(),
        st.integers(min_value=-(10**12), max_value=10**12),
        st.floats(allow_nan=False, allow_infinity=False, width=64),
        st.text(max_size=12),
    )


def model_values(max_depth=3):
    return st.recursive(
        scalars(),
        lambda children: st.one_of(
            st.lists(children, max_size=4),
            st.lists(children, max_size=4).map(tuple),
            st.sets(st.one_of(st.booleans(), st.integers(), st.text(max_size=6)), max_size=4),
            st.dictionaries(st.one_of(st.integers(), st.text(max_size=6)), children, max_size=4),
        ),
        max_leaves=12,
    )


class TestCanonicalText:
    def test_tuple_form(self):
        assert values.canonical_text((5, 0, 4)) == "(5, 0, 4)"

    def test_empty_map(self):
        assert values.canonical_text({}) == "{}"

    def test_set_order_independent(self):
        a = set()
        for x in (3, 1, 2):
            a.add(x)
        b = set()
        for x in (2, 3, 1):
            b.add(x)
        assert values.canonical_text(a) == values.canonical_text(b) == "{1, 2, 3}"

    def test_dict_sorted_by_key_text(self):
        d1 = {"b": 1, "a": 2}
        d2 = {"a": 2, "b": 1}
        assert values.canonical_text(d1) == values.canonical_text(d2) == "{'a': 2, 'b': 1}"

    def test_singleton_tuple(self):
        assert values.canonical_text((7,)) == "(7,)"

    def test_empty_set(self):
        assert values.canonical_text(set()) == "set()"

    def test_string_repr(self):
        assert values.canonical_text("CGAU") == "'CGAU'"

    def test_cycle_rejected(self):
        xs: list = [1]
        xs.append(xs)
        with pytest.raises(values.CanonicalizationError):
            values.canonical_text(xs)

    def test_generator_rejected(self):
        with pytest.raises(values.CanonicalizationError):
            values.canonical_text(x for x in range(3))

    def test_foreign_value_digest_stable(self):
        class Box:
            def __repr__(self):
                return f"<Box at 0x{id(self):x}>"

        a, b = Box(), Box()
        assert values.canonical_text(a) == values.canonical_text(b)
        assert values.canonical_text(a).startswith("<Box ")

    @given(model_values())
    @settings(max_examples=200)
    def test_canonical_round_trips_through_literal_parser(self, value):
        text = values.canonical_text(value)
        parsed = values.parse_literal(text, depth_cap=64)
        assert values.canonical_text(parsed) == text


class TestSurfaces:
    def test_parse_kwargs_surface(self):
        got = values.parse_binding_surface('dict(s="abcba", center=2)')
        assert got == {"s": "abcba", "center": 2}

    def test_arg_texts_preserve_quoting(self):
        texts = values.binding_arg_texts('dict(s="abcba", center=2)')
        assert texts == {"s": '"abcba"', "center": "2"}

    def test_surface_normalization_round_trip(self):
        messy = 'dict( s = "ab" ,  center =  2 )'
        rebuilt = values.render_binding_surface(values.binding_arg_texts(messy))
        assert rebuilt == 'dict(s="ab", center=2)'
        assert values.parse_binding_surface(rebuilt) == values.parse_binding_surface(messy)

    def test_dict_literal_surface(self):
        got = values.parse_binding_surface("{'a': 1, 'b': [2, 3]}")
        assert got == {"a": 1, "b": [2, 3]}

    def test_rejects_names(self):
        with pytest.raises(values.SurfaceParseError):
            values.parse_binding_surface("dict(a=os)")

    def test_rejects_depth_beyond_cap(self):
        nested = "[" * 9 + "1" + "]" * 9
        with pytest.raises(values.SurfaceParseError):
            values.parse_literal(nested, depth_cap=8)

    def test_negative_numbers(self):
        assert values.parse_literal("-3") == -3
        assert values.parse_literal("-2.5") == -2.5

    def test_unhashable_literals_rejected_cleanly(self):
        with pytest.raises(values.SurfaceParseError):
            values.parse_literal("{[1, 2], 3}")
        with pytest.raises(values.SurfaceParseError):
            values.parse_binding_surface("dict(a={[1]: 2})")

    @given(st.dictionaries(
        st.from_regex(r"[a-z][a-z0-9_]{0,6}", fullmatch=True).filter(
            lambda s: not keyword.iskeyword(s)
        ),
        model_values(),
        min_size=1, max_size=4,
    ))
    @settings(max_examples=150)
    def test_surface_round_trip(self, bindings):
        surface = values.surface_from_values(bindings)
        parsed = values.parse_binding_surface(surface, depth_cap=64)
        assert values.canonical_text(parsed) == values.canonical_text(bindings)


class TestComparison:
    def test_exact_match(self):
        assert values.canonical_texts_match("(5, 0, 4)", "(5, 0, 4)")

    def test_int_vs_float_differ(self):
        assert not values.canonical_texts_match("5", "5.0")

    def test_float_within_rel_tolerance(self):
        a, b = 0.1 + 0.2, 0.3
        assert repr(a) != repr(b)
        assert values.canonical_texts_match(repr(a), repr(b))

    def test_float_outside_tolerance(self):
        assert not values.canonical_texts_match("1.0", "1.001")

    def test_nested_float_tolerance(self):
        got = values.canonical_text({"x": [1.0000000001, 2]})
        want = values.canonical_text({"x": [1.0, 2]})
        assert values.canonical_texts_match(got, want)

    def test_bool_never_matches_int(self):
        assert not values.canonical_texts_match("True", "1")

    def test_nan_equal(self):
        assert values.values_equal(float("nan"), float("nan"))

    def test_unparseable_falls_back_to_string_equality(self):
        assert values.canonical_texts_match("<Box abc>", "<Box abc>")
        assert not values.canonical_texts_match("<Box abc>", "<Box abd>")

    def test_rel_tol_is_relative(self):
        big_got, big_want = 1e12 * (1 + 5e-7), 1e12
        assert math.isclose(big_got, big_want, rel_tol=1e-6)
        assert values.canonical_texts_match(repr(big_got), repr(big_want))
