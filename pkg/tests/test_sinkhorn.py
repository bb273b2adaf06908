import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from wipslab.transport import w1_assignment, w1_sinkhorn


def test_identical_clouds_bracket():
    u = np.random.default_rng(0).normal(size=(20, 2))
    r = w1_sinkhorn(u, u, reg=0.05)
    assert r.lower <= 0.0 + 1e-12 <= r.upper + 1e-12
    assert r.upper - r.lower <= 2 * 0.05 * math.log(20)


coords = st.floats(-5, 5, allow_nan=False, allow_infinity=False)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 7).flatmap(lambda n: st.integers(1, 3).flatmap(
    lambda d: st.tuples(arrays(float, (n, d), elements=coords), arrays(float, (n, d), elements=coords)))),
       st.sampled_from([0.5, 0.1, 0.01]))
def test_bracket_contains_exact(pair, reg):
    # [DERIVED] assignment value as oracle
    u, v = pair
    exact = w1_assignment(u, v).value
    r = w1_sinkhorn(u, v, reg=reg)
    assert r.lower - 1e-9 <= exact <= r.upper + 1e-9
    assert r.lower <= r.value <= r.upper


def test_regularization_sequence_approaches_exact():
    g = np.random.default_rng(4)
    u, v = g.normal(size=(50, 2)), g.normal(0.5, 1.0, size=(50, 2))
    exact = w1_assignment(u, v).value
    prev_err = None
    for reg in (0.1, 0.05, 0.025):
        r = w1_sinkhorn(u, v, reg=reg)
        assert r.lower - 1e-9 <= exact <= r.upper + 1e-9
        err = abs(r.value - exact)
        if prev_err is not None:
            assert err <= prev_err + (r.upper - r.lower)
        prev_err = err


def test_unequal_sizes_and_meta():
    g = np.random.default_rng(1)
    r = w1_sinkhorn(g.normal(size=(10, 1)), g.normal(size=(15, 1)), reg=0.01)
    assert r.method == "sinkhorn" and r.meta["iterations"] > 0
    assert r.lower <= r.value <= r.upper


def test_iteration_cap_still_brackets():
    g = np.random.default_rng(2)
    u, v = g.normal(size=(30, 2)), g.normal(size=(30, 2))
    r = w1_sinkhorn(u, v, reg=1e-3, max_iters=5)
    exact = w1_assignment(u, v).value
    assert not r.converged
    assert r.lower - 1e-9 <= exact <= r.upper + 1e-9


def test_bad_reg():
    with pytest.raises(ValueError):
        w1_sinkhorn([0.0], [1.0], reg=0.0)
