import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from metasurf import pattern as pt
from metasurf.errors import ValidationError

quadrants = hnp.arrays(np.float64, st.tuples(st.integers(1, 8)).map(lambda s: (s[0], s[0])),
                       elements=st.sampled_from([0.0, 0.5, 1.0]))


@pytest.mark.parametrize("x,expect", [(0.2, 0.0), (0.3, 0.5), (0.8, 1.0), (0.25, 0.5), (0.75, 1.0),
                                      (0.0, 0.0), (1.0, 1.0), (0.5, 0.5)])
def test_round_ternary_values(x, expect):
    assert pt.round_ternary(np.array([x]))[0] == expect


def test_round_ternary_rejects_out_of_range():
    with pytest.raises(ValidationError):
        pt.round_ternary(np.array([1.2]))
    with pytest.raises(ValidationError):
        pt.round_ternary(np.array([np.nan]))


@given(hnp.arrays(np.float64, 20, elements=st.floats(0, 1)))
def test_round_ternary_idempotent_and_ternary(x):
    r = pt.round_ternary(x)
    assert pt.is_ternary(r)
    np.testing.assert_array_equal(pt.round_ternary(r), r)


@given(quadrants)
def test_assembled_patterns_are_rot90_invariant(q):
    p = pt.assemble_full(q)
    assert p.shape == (2 * len(q), 2 * len(q))
    assert pt.is_ternary(p)
    np.testing.assert_array_equal(np.rot90(p), p)


@given(quadrants)
def test_reassembly_is_idempotent(q):
    p = pt.assemble_full(q)
    np.testing.assert_array_equal(pt.assemble_full(pt.extract_quadrant(p)), p)


def test_assemble_full_examples():
    assert not pt.assemble_full(np.zeros((16, 16))).any()
    toy = pt.assemble_full(np.eye(2))
    assert pt.is_rot90_invariant(toy)
    with pytest.raises(ValidationError):
        pt.assemble_full(np.full((4, 4), 0.3))
    with pytest.raises(ValidationError):
        pt.assemble_full(np.zeros((4, 3)))


def test_assemble_full_thousand_seeds():
    for seed in range(1000):
        p = pt.random_pattern(seed)
        assert np.array_equal(np.rot90(p), p)


def test_random_pattern_reproducible_and_balanced():
    np.testing.assert_array_equal(pt.random_pattern(5), pt.random_pattern(5))
    q = pt.random_quadrant(np.random.default_rng(0), batch=10_000)
    for code in pt.CODES:
        assert 0.32 <= np.mean(q == code) <= 0.35


def test_validate_pattern():
    p = pt.random_pattern(3)
    pt.validate_pattern(p)
    bad = p.copy()
    bad[0, 1] = 1.0 - bad[0, 1] if bad[0, 1] != 0.5 else 0.0
    with pytest.raises(ValidationError):
        pt.validate_pattern(bad)
    with pytest.raises(ValidationError):
        pt.validate_pattern(np.zeros((16, 16)))


def test_text_round_trip():
    p = pt.random_pattern(11)
    text = pt.to_text(p)
    assert set(text) <= set("0t1\n")
    np.testing.assert_array_equal(pt.from_text(text), p)
    with pytest.raises(ValidationError):
        pt.from_text("0x1")
