import math
import pickle

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pgspline.errors import ParameterError, WeightFormatError
from pgspline.weights import (TailClass, load_table_weight, parse_weight, tabulate_weight,
                              validate_weight, weight_from_function)


@pytest.mark.parametrize("spec, t, expected", [
    ("const:2", 5.0, 2.0),
    ("exp:0.5", 2.0, math.exp(-1.0)),
    ("pow:2", 1.0, 0.25),
    ("gauss-paper-f", 0.0, math.exp(-1.5)),
    ("gauss-paper-g", 0.0, 2.0 * math.exp(-1.5)),
])
def test_preset_values(spec, t, expected):
    np.testing.assert_allclose(parse_weight(spec)(t), expected, rtol=1e-14)


def test_gauss_log_survives_underflow():
    f = parse_weight("gauss-paper-f")
    assert f(60.0) == 0.0
    np.testing.assert_allclose(f.log(60.0), -0.5 * (60 + math.sqrt(3)) ** 2)


@pytest.mark.parametrize("spec", ["const:0", "exp:-1", "pow:0", "nope:1", "exp", "const:x"])
def test_bad_presets(spec):
    with pytest.raises(ParameterError):
        parse_weight(spec)


@pytest.mark.parametrize("spec", ["const:1", "exp:0.7", "pow:1.5", "gauss-paper-f", "gauss-paper-g"])
def test_presets_validate_and_pickle(spec):
    w = parse_weight(spec)
    assert validate_weight(w, 50.0, 2001).ok
    w2 = pickle.loads(pickle.dumps(w))
    t = np.linspace(0, 5, 7)
    np.testing.assert_array_equal(w(t), w2(t))
    assert w2.spec == w.spec


def test_increasing_function_fails_validation():
    w = weight_from_function(lambda t: 1.0 + 0.1 * np.asarray(t))
    rep = validate_weight(w, 10.0, 101)
    assert not rep.ok and not rep.monotone
    assert rep.witness_t is not None


def test_table_file(tmp_path):
    p = tmp_path / "w.txt"
    p.write_text("# t value\n0, 1\n1 0.5\n\n3,0.25  # tail\n", encoding="utf-8")
    w = load_table_weight(p)
    np.testing.assert_allclose(w([0.0, 0.5, 2.0, 10.0]), [1.0, 0.75, 0.375, 0.25])
    assert w.limit_at_infinity == 0.25
    assert parse_weight(f"table:{p}")(2.0) == pytest.approx(0.375)


@pytest.mark.parametrize("body, row", [
    ("0 1\n1 1.5\n", "row 2"),
    ("0 1\nx 1\n", "row 2"),
    ("0 1\n0 0.5\n", "row 2"),
    ("0 1\n1 0\n", "row 2"),
    ("1 1\n2 0.5\n", "row 1"),
])
def test_table_errors_name_the_row(tmp_path, body, row):
    p = tmp_path / "bad.txt"
    p.write_text(body, encoding="utf-8")
    with pytest.raises(WeightFormatError, match=row):
        load_table_weight(p)


def test_tabulated_weight_has_knots_as_breakpoints():
    w = tabulate_weight([0, 1, 2], [2, 1, 1])
    assert w.breakpoints == (1.0, 2.0)


@given(st.floats(0.0, 3.0), st.floats(0.0, 3.0), st.floats(-3.0, 3.0),
       st.floats(0.0, 3.0), st.floats(0.0, 3.0), st.floats(-3.0, 3.0))
def test_tail_compare_is_antisymmetric(q1, r1, p1, q2, r2, p2):
    a, b = TailClass(q1, r1, p1), TailClass(q2, r2, p2)
    assert a.compare(b) == -b.compare(a)
    assert a.compare(a) == 0


def test_tail_integral_classes():
    assert TailClass(rate=1.0).tail_integral() == TailClass(rate=1.0)
    assert TailClass(power=-3.0).tail_integral() == TailClass(power=-2.0)
    assert TailClass(power=-1.0).tail_integral() is None
    assert TailClass().tail_integral() is None
    assert TailClass(quad=0.5, rate=1.0, power=2.0).tail_integral() == TailClass(0.5, 1.0, 1.0)
