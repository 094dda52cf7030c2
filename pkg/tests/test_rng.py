import numpy as np

from streamdec.rng import stream


def test_same_key_same_stream():
    a = stream(3, "x", 1).normal(size=10)
    b = stream(3, "x", 1).normal(size=10)
    np.testing.assert_array_equal(a, b)


def test_different_tags_different_streams():
    a = stream(3, "x", 1).normal(size=10)
    b = stream(3, "x", 2).normal(size=10)
    c = stream(3, "y", 1).normal(size=10)
    d = stream(4, "x", 1).normal(size=10)
    assert not np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)


def test_streams_independent_of_draw_order():
    # drawing from one stream never perturbs another
    s1 = stream(0, "a")
    ref = stream(0, "b").normal(size=5)
    s1.normal(size=1000)
    got = stream(0, "b").normal(size=5)
    np.testing.assert_array_equal(ref, got)


def test_tag_concatenation_is_unambiguous():
    # ("ab",) vs ("a", "b") must not collide
    a = stream(0, "ab").normal(size=4)
    b = stream(0, "a", "b").normal(size=4)
    assert not np.array_equal(a, b)
