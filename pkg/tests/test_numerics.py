import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from gfnddi import numerics as nx
from gfnddi.errors import ContractError


def grad_of(f, *params):
    with nx.Tape() as tape:
        out = f(*params)
    return tape.gradient(out, list(params))


def test_softmax_of_equal_scores_is_uniform():
    y = nx.softmax_rows(nx.constant(np.zeros((2, 4))))
    np.testing.assert_allclose(y.data, 0.25)


def test_log_exp_round_trip():
    x = np.linspace(-5, 5, 21)
    np.testing.assert_allclose(nx.log(nx.exp(nx.constant(x))).data, x, atol=1e-12)


def test_matmul_identity():
    a = np.arange(6.0).reshape(2, 3)
    np.testing.assert_array_equal((nx.constant(a) @ nx.constant(np.eye(3))).data, a)


def test_derivative_of_square_at_three():
    x = nx.parameter(np.array(3.0))
    (g,) = grad_of(lambda x: x * x, x)
    assert g == pytest.approx(6.0)


def test_sum_of_softmax_has_zero_gradient():
    x = nx.parameter(np.random.default_rng(0).normal(size=(3, 5)))
    (g,) = grad_of(lambda x: nx.sum(nx.softmax_rows(x)), x)
    np.testing.assert_allclose(g, 0.0, atol=1e-12)


def test_non_scalar_output_rejected():
    x = nx.parameter(np.ones(3))
    with pytest.raises(ContractError):
        grad_of(lambda x: x * 2.0, x)


def test_unreached_leaf_gets_zeros():
    x, y = nx.parameter(np.ones(2)), nx.parameter(np.ones(2))
    gx, gy = grad_of(lambda x, y: nx.sum(x), x, y)
    np.testing.assert_array_equal(gy, 0.0)


def test_reused_value_accumulates():
    x = nx.parameter(np.array([1.0, 2.0]))
    (g,) = grad_of(lambda x: nx.sum(x * x + x), x)
    np.testing.assert_allclose(g, [3.0, 5.0])


def test_shape_errors():
    with pytest.raises(ContractError):
        nx.add(nx.constant(np.ones((2, 3))), nx.constant(np.ones((3, 2))))
    with pytest.raises(ContractError):
        nx.matmul(nx.constant(np.ones((2, 3))), nx.constant(np.ones((2, 3))))
    with pytest.raises(ContractError):
        nx.mul(nx.constant(np.ones(2)), nx.constant(np.ones(3)))


# -- finite differences on every primitive --------------------------------

# floor 1e-4: below that, central differences are dominated by rounding noise
mats = hnp.arrays(np.float64, (3, 4), elements=st.floats(-2, 2, allow_nan=False))
IDX = np.array([2, 0, 0, 1])

UNARY = {
    "exp": lambda a: nx.sum(nx.exp(a)),
    "log": lambda a: nx.sum(nx.log(nx.add(nx.square(a), 0.5))),
    "tanh": lambda a: nx.sum(nx.tanh(a)),
    "square": lambda a: nx.sum(nx.square(a)),
    "neg": lambda a: nx.sum(nx.mul(nx.neg(a), nx.constant(np.arange(12.0).reshape(3, 4)))),
    "softmax": lambda a: nx.sum(nx.mul(nx.softmax_rows(a), nx.constant(np.arange(12.0).reshape(3, 4)))),
    "log_softmax": lambda a: nx.sum(nx.pick(nx.log_softmax_rows(a), [0, 3, 1])),
    "transpose": lambda a: nx.sum(nx.square(nx.transpose(a) @ nx.constant(np.ones((3, 2))))),
    "gather": lambda a: nx.sum(nx.square(nx.gather_rows(a, [2, 0, 2]))),
    "scatter": lambda a: nx.sum(nx.square(nx.scatter_rows(nx.transpose(a), IDX, 3, [0.5, 1, 2, 1]))),
    "concat": lambda a: nx.sum(nx.square(nx.concat_cols(a, nx.tanh(a)))),
    "reshape": lambda a: nx.sum(nx.square(nx.reshape(a, (4, 3)) @ nx.constant(np.ones((3, 1))))),
    "sum_axis": lambda a: nx.sum(nx.square(nx.sum(a, axis=0))),
    "mean": lambda a: nx.square(nx.mean(nx.tanh(a))),
    "bias": lambda a: nx.sum(nx.square(nx.add(a, nx.constant(np.arange(4.0))))),
    "scalar_mul": lambda a: nx.sum(nx.exp(nx.mul(a, 0.3))),
}


@pytest.mark.parametrize("name", sorted(UNARY))
@settings(max_examples=15, deadline=None)
@given(x=mats)
def test_primitive_gradients_match_central_differences(name, x):
    p = {"a": nx.parameter(x.copy())}
    rep = nx.finite_difference_check(lambda: UNARY[name](p["a"]), p, h=1e-5, tol=1e-4, floor=1e-4)
    assert rep.ok, rep.flagged


@settings(max_examples=15, deadline=None)
@given(x=mats, y=mats)
def test_binary_gradients(x, y):
    p = {"a": nx.parameter(x.copy()), "b": nx.parameter(y.copy())}
    f = lambda: nx.sum(nx.tanh(nx.transpose(p["a"]) @ p["b"]) * nx.constant(np.ones((4, 4)))) \
        + nx.sum(nx.sub(p["a"], p["b"]) * p["a"])
    rep = nx.finite_difference_check(f, p, h=1e-5, tol=1e-4, floor=1e-4)
    assert rep.ok, rep.flagged


@settings(max_examples=50, deadline=None)
@given(x=hnp.arrays(np.float64, (4, 6), elements=st.floats(-50, 50, allow_nan=False)))
def test_softmax_rows_normalised(x):
    y = nx.softmax_rows(nx.constant(x)).data
    assert (y >= 0).all()
    np.testing.assert_allclose(y.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(np.exp(nx.log_softmax_rows(nx.constant(x)).data), y, atol=1e-12)


def test_quadratic_form_check_is_tight():
    rng = np.random.default_rng(1)
    a = rng.normal(size=(5, 5))
    A = nx.constant(a @ a.T)
    p = {"x": nx.parameter(rng.normal(size=(5, 1)))}
    rep = nx.finite_difference_check(lambda: nx.sum(nx.transpose(p["x"]) @ A @ p["x"]), p)
    assert rep.max_rel_error < 1e-8


def test_corrupted_gradient_is_flagged():
    p = {"x": nx.parameter(np.array([1.0, -2.0, 0.5]))}
    f = lambda: nx.sum(nx.square(p["x"]))
    bad = {"x": 2 * p["x"].data.copy()}
    bad["x"][1] *= 1.01
    rep = nx.finite_difference_check(f, p, analytic=bad)
    assert not rep.ok
    assert [k for _, k, _, _ in rep.flagged] == [1]


def test_log_floor_has_zero_gradient():
    x = nx.parameter(np.array([0.0, 2.0]))
    (g,) = grad_of(lambda x: nx.sum(nx.log(x, floor=1e-12)), x)
    np.testing.assert_allclose(g, [0.0, 0.5])


# -- optimisers, rng, checkpoints ------------------------------------------

@pytest.mark.parametrize("kind", ["sgd", "adam"])
def test_optimizers_descend(kind):
    p = {"x": nx.parameter(np.array([3.0, -4.0]))}
    opt = nx.make_optimizer(kind, p, 0.1)
    for _ in range(300):
        with nx.Tape() as tape:
            loss = nx.sum(nx.square(p["x"]))
        opt.step(tape.gradient(loss, p))
    assert np.abs(p["x"].data).max() < 1e-2


def test_unknown_optimizer():
    with pytest.raises(ContractError):
        nx.make_optimizer("rmsprop", {}, 0.1)


def test_rng_streams_are_reproducible_and_distinct():
    a = nx.make_rng(5, 1).random(4)
    np.testing.assert_array_equal(a, nx.make_rng(5, 1).random(4))
    assert not np.array_equal(a, nx.make_rng(5, 2).random(4))


def test_checkpoint_round_trip(tmp_path):
    arrays = {"w": np.arange(6.0).reshape(2, 3), "s": np.array(1.5), "v": np.zeros(0)}
    nx.save_arrays(tmp_path / "ck", arrays, {"k": 1})
    back, meta = nx.load_arrays(tmp_path / "ck")
    assert meta == {"k": 1}
    for k, v in arrays.items():
        assert back[k].shape == v.shape
        np.testing.assert_array_equal(back[k], v)
    first = (tmp_path / "ck.bin").read_bytes()
    nx.save_arrays(tmp_path / "ck", back, {"k": 1})
    assert (tmp_path / "ck.bin").read_bytes() == first
