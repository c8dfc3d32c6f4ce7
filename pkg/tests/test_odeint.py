import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmlqg.model import TimeGrid
from mmlqg.odeint import (BlockLayout, HalfGridSeries, IntegrationError, OdeField,
                          field_at_nodes, integrate_backward, integrate_forward)

SCALAR = BlockLayout((("y", 1, None),))


def scalar_field(f):
    return OdeField(lambda t, y: np.array([f(t, y[0])]), SCALAR)


def test_zero_field_constant():
    lay = BlockLayout((("M", 2, 2), ("v", 3, None)))
    M = np.array([[1.0, 2.0], [3.0, 4.0]])
    y = {"M": M, "v": np.array([1.0, -1.0, 0.5])}
    zero = OdeField(lambda t, y: np.zeros_like(y), lay)
    g = TimeGrid(1.0, 50)
    for traj in (integrate_backward(zero, y, g), integrate_forward(zero, y, g)):
        assert np.all(traj.block("M") == M)
        assert np.all(traj.block("v") == y["v"])


def test_tanh_backward():
    traj = integrate_backward(scalar_field(lambda t, y: -(1.0 - y * y)), [0.0], TimeGrid(1.0, 10_000))
    assert abs(traj.values[0, 0] - np.tanh(1.0)) <= 1e-10
    assert traj.values[-1, 0] == 0.0


def test_exponential_backward_and_forward():
    g = TimeGrid(1.0, 10_000)
    back = integrate_backward(scalar_field(lambda t, y: y), [1.0], g)
    assert abs(back.values[0, 0] - np.exp(-1.0)) <= 1e-10
    fwd = integrate_forward(scalar_field(lambda t, y: -y), [1.0], g)
    assert abs(fwd.values[-1, 0] - np.exp(-1.0)) <= 1e-10
    assert fwd.values[0, 0] == 1.0


def test_rotation():
    Jm = np.array([[0.0, 1.0], [-1.0, 0.0]])
    lay = BlockLayout((("y", 2, None),))
    traj = integrate_forward(OdeField(lambda t, y: Jm @ y, lay), [1.0, 0.0], TimeGrid(np.pi, 10_000))
    np.testing.assert_allclose(traj.values[-1], [-1.0, 0.0], atol=1e-8)


@pytest.mark.parametrize("K", [8, 16, 32])
def test_fourth_order(K):
    f = scalar_field(lambda t, y: -y)
    e1 = abs(integrate_forward(f, [1.0], TimeGrid(1.0, K)).values[-1, 0] - np.exp(-1.0))
    e2 = abs(integrate_forward(f, [1.0], TimeGrid(1.0, 2 * K)).values[-1, 0] - np.exp(-1.0))
    assert 12.0 <= e1 / e2 <= 20.0


def test_round_trip_linear():
    rng = np.random.default_rng(3)
    A = rng.uniform(-1, 1, (3, 3))
    lay = BlockLayout((("y", 3, None),))
    f = OdeField(lambda t, y: A @ y + np.sin(t), lay)
    g = TimeGrid(1.0, 10_000)
    yT = rng.standard_normal(3)
    back = integrate_backward(f, yT, g)
    fwd = integrate_forward(f, back.values[0], g)
    np.testing.assert_allclose(fwd.values[-1], yT, atol=1e-8)


def test_deterministic():
    f = scalar_field(lambda t, y: np.cos(t) * y - y ** 3)
    g = TimeGrid(2.0, 1000)
    a = integrate_backward(f, [0.3], g).values
    b = integrate_backward(f, [0.3], g).values
    assert a.tobytes() == b.tobytes()


def test_blowup_names_block():
    lay = BlockLayout((("calm", 1, None), ("wild", 1, None)))
    f = OdeField(lambda t, y: np.array([0.0, -y[1] ** 2]), lay)
    # -dy/dt = y^2 backward from y(T)=1 blows up at t = T - 1
    with pytest.raises(IntegrationError) as exc, np.errstate(over="ignore", invalid="ignore"):
        integrate_backward(f, [0.0, 1.0], TimeGrid(3.0, 3000))
    assert exc.value.block == "wild"
    assert "wild" in str(exc.value) and exc.value.node < 3000


def test_symmetrize_keeps_blocks_symmetric():
    lay = BlockLayout((("P", 2, 2),))
    A = np.array([[0.1, 0.7], [-0.3, 0.2]])
    f = OdeField(lambda t, y: -(A.T @ y.reshape(2, 2) + y.reshape(2, 2) @ A + np.eye(2)).ravel(), lay)
    P = integrate_backward(f, np.zeros(4), TimeGrid(1.0, 100), symmetrize=("P",)).block("P")
    assert np.array_equal(P, np.swapaxes(P, 1, 2))
    with pytest.raises(ValueError):
        integrate_backward(f, np.zeros(4), TimeGrid(1.0, 4),
                           symmetrize=("nope",))


def test_state_size_checked():
    with pytest.raises(ValueError):
        integrate_forward(scalar_field(lambda t, y: y), [1.0, 2.0], TimeGrid(1.0, 4))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 3), st.one_of(st.none(), st.integers(1, 3))),
                min_size=1, max_size=4), st.integers(0, 2 ** 32 - 1))
def test_layout_pack_unpack(spec, seed):
    lay = BlockLayout(tuple((f"b{i}", r, c) for i, (r, c) in enumerate(spec)))
    rng = np.random.default_rng(seed)
    blocks = {n: rng.standard_normal(lay.shape(n)) for n in lay.names}
    y = lay.pack(blocks)
    assert y.size == lay.size
    for n, v in lay.unpack(y).items():
        assert np.array_equal(v, blocks[n])
    for i in range(lay.size):
        assert lay.block_of(i) in lay.names


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=4, max_size=4))
def test_hermite_midpoints_exact_for_cubics(c):
    g = TimeGrid(2.0, 7)
    poly = np.polynomial.Polynomial(c)
    t = g.nodes
    half = HalfGridSeries.from_nodes(g, poly(t), poly.deriv()(t))
    tm = np.arange(2 * g.K + 1) * g.h / 2
    np.testing.assert_allclose(half.values, poly(tm), atol=1e-10)
    assert half.index(g.h / 2) == 1
    with pytest.raises(ValueError):
        half.index(g.h / 3)


def test_field_at_nodes_matches_field():
    g = TimeGrid(1.0, 10)
    f = scalar_field(lambda t, y: t * y)
    traj = integrate_forward(f, [1.0], g)
    d = field_at_nodes(f, traj)
    np.testing.assert_allclose(d[:, 0], g.nodes * traj.values[:, 0])
