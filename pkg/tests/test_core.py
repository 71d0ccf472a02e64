import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rieszlab.core import Configuration, ModelParams, RandomStream, Window, as_stream, count, counts, restrict, translate

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
atom_lists = st.lists(st.tuples(finite, st.integers(1, 5)), max_size=30)


def test_count_examples():
    c = Configuration([0.0, 1.0, 2.0])
    assert count(c, Window(0.5, 2.5)) == 2
    assert count(Configuration(), Window(-1, 1)) == 0
    assert count(Configuration.from_atoms([(0.0, 3)]), Window(-1, 1)) == 3


def test_count_half_open():
    c = Configuration([0.0, 1.0])
    assert count(c, Window(0.0, 1.0)) == 1
    assert count(c, Window(-1.0, 0.0)) == 0


def test_translate_examples():
    c = Configuration([0.0, 1.0])
    assert translate(c, 0.5).atoms == [(0.5, 1), (1.5, 1)]
    assert translate(c, 0.0) == c


def test_restrict_examples():
    c = Configuration([-1.0, 0.0, 2.0])
    assert restrict(c, Window(-0.5, 1.0)).atoms == [(0.0, 1)]
    assert restrict(c, Window(-5, 5)).atoms == c.atoms


def test_merging_and_validation():
    c = Configuration([1.0, 1.0 + 1e-14, 0.0])
    assert c.atoms == [(0.0, 1), (1.0, 2)]
    with pytest.raises(ValueError):
        Configuration([0.0, np.nan])
    with pytest.raises(ValueError):
        Configuration([0.0], [0])
    with pytest.raises(ValueError):
        Configuration([0.0, 1.0], [1])


def test_immutable():
    c = Configuration([0.0])
    with pytest.raises(AttributeError):
        c.positions = np.zeros(1)
    with pytest.raises(ValueError):
        c.positions[0] = 1.0


def test_window_and_params_validation():
    with pytest.raises(ValueError):
        Window(1.0, 1.0)
    assert Window.parse("-2, 3") == Window(-2, 3)
    assert Window.box(4) == Window(-2, 2)
    for bad in ((0.0, 1, 1), (-2.0, 1, 1), (-1, -1, 1), (-1, 1, 1.5), (-1, 1, -1)):
        with pytest.raises(ValueError):
            ModelParams(*bad)
    assert ModelParams(-1, 0, 0).n == 0
    assert ModelParams(-1.0, 2, 3).is_coulomb


@given(atom_lists)
def test_canonical_form(atoms):
    c = Configuration.from_atoms(atoms)
    assert np.all(np.diff(c.positions) > 0)
    assert np.all(c.multiplicities >= 1)
    assert c.mass == sum(k for _, k in atoms)


@given(atom_lists, finite, st.floats(0, 500), st.floats(0, 500))
def test_count_additivity(atoms, a, l1, l2):
    c = Configuration.from_atoms(atoms)
    b, e = a + l1, a + l1 + l2
    total = count(c, Window(a, e)) if e > a else 0
    parts = (count(c, Window(a, b)) if b > a else 0) + (count(c, Window(b, e)) if e > b else 0)
    assert total == parts


@given(atom_lists, st.floats(-100, 100))
def test_translate_round_trip_and_gaps(atoms, u):
    c = Configuration.from_atoms(atoms)
    t = translate(c, u)
    np.testing.assert_allclose(np.diff(t.positions), np.diff(c.positions), atol=1e-9)
    back = translate(t, -u)
    np.testing.assert_allclose(back.positions, c.positions, atol=1e-12 * (1 + abs(u) + 1e3))
    np.testing.assert_array_equal(back.multiplicities, c.multiplicities)


@given(atom_lists, finite, st.floats(0.1, 500))
def test_restrict_idempotent(atoms, a, length):
    c = Configuration.from_atoms(atoms)
    w = Window(a, a + length)
    r = restrict(c, w)
    assert restrict(r, w) == r
    assert r.mass == count(c, w)


@given(atom_lists)
@settings(max_examples=50)
def test_serialization_round_trip(atoms):
    c = Configuration.from_atoms(atoms, Window(-2e3, 2e3))
    assert Configuration.from_json(c.to_json()) == c
    assert Configuration.from_csv(c.to_csv(), c.window) == c


def test_counts_vectorized():
    rng = np.random.default_rng(0)
    c = Configuration(rng.uniform(0, 10, 50))
    lefts = rng.uniform(0, 5, 20)
    rights = lefts + rng.uniform(0.1, 5, 20)
    expect = [count(c, Window(a, b)) for a, b in zip(lefts, rights)]
    np.testing.assert_array_equal(counts(c, lefts, rights), expect)


def test_random_stream_determinism():
    a, b = RandomStream(7), RandomStream(7)
    np.testing.assert_array_equal(a.uniform(size=5), b.uniform(size=5))
    s1, s2 = RandomStream(7).substream(3), RandomStream(7, (3,))
    np.testing.assert_array_equal(s1.normal(size=4), s2.normal(size=4))
    assert not np.array_equal(RandomStream(7).substream(1).uniform(size=4),
                              RandomStream(7).substream(2).uniform(size=4))
    assert as_stream(5).seed == 5
    with pytest.raises(ValueError):
        RandomStream(-1)
