import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wipslab.transport import LipschitzNet, build_net, covering_count, w1_1d, w1_net_lower


def test_covering_count_examples():
    # [TRIVIAL] (2 (2 + 1) / 3) * 1 * 3^4
    assert covering_count(1.0, 1.0, 1) == 162
    assert covering_count(0.5, 0.5, 1) == 162
    # R / eps = 1/2: prefactor 1, exponent [2 * 0.5 * 2] = 2
    assert covering_count(0.5, 1.0, 1) == 9
    assert covering_count(0.01, 1.0, 1) == 1


def test_covering_count_modes_and_overflow():
    assert covering_count(1.0, 0.7, 1, mode="identity") >= covering_count(1.0, 0.7, 1)
    assert covering_count(10.0, 0.01, 3) == math.inf


def test_net_size_bounded():
    net = build_net(1.0, 1.0, 1)
    assert net.size <= 162
    assert net.size == 3 ** 2


@pytest.mark.parametrize("d,mode", [(1, "exhaustive"), (2, "exhaustive"), (1, "sampled"), (2, "sampled"),
                                    (3, "sampled")])
def test_members_are_lipschitz(d, mode):
    net = build_net(1.0, 0.5, d, budget=200, mode=mode, seed=1)
    g = np.random.default_rng(d)
    a, b = g.uniform(-1, 1, size=(1000, d)), g.uniform(-1, 1, size=(1000, d))
    fa, fb = net.evaluate(a), net.evaluate(b)
    dist = np.linalg.norm(a - b, axis=1)
    assert np.all(np.abs(fa - fb) <= dist[None, :] * (1 + 1e-9) + 1e-12)
    assert np.allclose(net.evaluate(np.zeros((1, d))), 0.0, atol=1e-12)


def test_coarse_net_collapses_to_slopes():
    # [DERIVED] exhaustive enumeration: one cell, steps in {+h, 0, -h}
    net = build_net(1.0, 2.0, 1)
    assert net.size <= 3
    slopes = sorted(float(np.ptp(v)) * np.sign(v[-1] - v[0]) / 2 for v in net.values)
    expected = sorted(s for s in (1.0, 0.0, -1.0))
    assert np.allclose(slopes, expected)
    ones = [list(p) for p in itertools.product((1, 0, -1), repeat=1)]
    assert len(ones) == net.size


def test_net_lower_identity():
    net = build_net(2.0, 0.5, 1)
    u = np.random.default_rng(0).uniform(-2, 2, 30)
    assert w1_net_lower(u, u, net).value == 0.0


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 50), st.integers(0, 2 ** 32 - 1))
def test_net_lower_brackets_exact(N, seed):
    # [DERIVED] exact 1-D distance as oracle
    g = np.random.default_rng(seed)
    u, v = g.uniform(-1, 1, N), g.uniform(-1, 1, N)
    eps = 0.25
    net = build_net(1.0, eps, 1)
    low = w1_net_lower(u, v, net)
    exact = w1_1d(u, v).value
    assert low.value <= exact + 1e-12
    assert low.value >= exact - 2 * eps
    assert not low.truncated


def test_single_identity_member():
    nodes = np.linspace(-3, 3, 7)[:, None]
    net = LipschitzNet(3.0, 1.0, 1, 1.0, nodes, nodes[:, 0][None, :], "custom")
    u, v = np.array([0.5, -1.0, 2.0]), np.array([1.0, 1.5, 0.0])
    assert w1_net_lower(u, v, net).value == pytest.approx(abs(u.mean() - v.mean()), abs=1e-15)


def test_truncation_flag():
    net = build_net(1.0, 0.5, 1)
    assert w1_net_lower([5.0], [0.0], net).truncated


def test_exhaustive_limited_to_two_dimensions():
    with pytest.raises(ValueError):
        build_net(1.0, 1.0, 3)
