import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from savn.autodiff import (
    ExprGraph,
    GraphError,
    NonFiniteError,
    ParamVector,
    Tensor,
    first_order_grad_through_update,
    forward,
    grad,
    grad_through_update,
    no_grad,
    ops,
    tensor,
)

from helpers import central_diff, rel_err
from op_cases import CASES


def _projected(fn, n_inputs, proj):
    """Scalar objective sum(op(*inputs) * proj) as a function of input i."""

    def build(*ts):
        out = fn(*ts)
        return ops.sum(ops.mul(out, Tensor(proj)))

    return build


def check_op_gradient(name, seed):
    rng = np.random.default_rng(seed)
    inputs, fn = CASES[name](rng)
    with no_grad():
        out_shape = fn(*[Tensor(x) for x in inputs]).data.shape
    proj = rng.normal(size=out_shape)
    build = _projected(fn, len(inputs), proj)
    leaves = [tensor(x, requires_grad=True) for x in inputs]
    grads = grad(build(*leaves), leaves)
    worst = 0.0
    for i, x in enumerate(inputs):

        def f(xi, i=i):
            args = [Tensor(v) for v in inputs]
            args[i] = Tensor(xi)
            return build(*args).item()

        worst = max(worst, rel_err(grads[i].data, central_diff(f, x)))
    return worst


@pytest.mark.parametrize("name", sorted(CASES))
def test_op_gradient_matches_finite_differences(name):
    for seed in range(5):
        assert check_op_gradient(name, seed) < 1e-5


def check_hvp(name, seed):
    """Differentiate <grad f, v> and compare with finite differences of grad f."""
    rng = np.random.default_rng(seed)
    inputs, fn = CASES[name](rng)
    with no_grad():
        out_shape = fn(*[Tensor(x) for x in inputs]).data.shape
    proj = rng.normal(size=out_shape)
    build = _projected(fn, len(inputs), proj)
    # Square the objective so linear ops still have a non-trivial Hessian.
    objective = lambda *ts: (lambda y: ops.mul(y, y))(build(*ts))  # noqa: E731
    leaves = [tensor(x, requires_grad=True) for x in inputs]
    gs = grad(objective(*leaves), leaves, create_graph=True)
    vs = [rng.normal(size=x.shape) for x in inputs]
    gv = ops.sum(ops.concat([ops.reshape(ops.mul(g, Tensor(v)), (-1,)) for g, v in zip(gs, vs)]))
    hvp = grad(gv, leaves, allow_unused=True)
    hvp_flat = np.concatenate([h.data.reshape(-1) for h in hvp])

    sizes = [x.size for x in inputs]
    x0 = np.concatenate([x.reshape(-1) for x in inputs])
    v_flat = np.concatenate([v.reshape(-1) for v in vs])

    def grad_at(flat):
        parts, off = [], 0
        for x, n in zip(inputs, sizes):
            parts.append(tensor(flat[off : off + n].reshape(x.shape), requires_grad=True))
            off += n
        return np.concatenate([g.data.reshape(-1) for g in grad(objective(*parts), parts)])

    h = 1e-5
    fd = (grad_at(x0 + h * v_flat) - grad_at(x0 - h * v_flat)) / (2 * h)
    return rel_err(hvp_flat, fd)


@pytest.mark.parametrize("name", sorted(CASES))
def test_hessian_vector_products(name):
    for seed in range(3):
        assert check_hvp(name, seed) < 1e-4


# ------------------------------------------------------------------ forward


def test_forward_square():
    g = ExprGraph(lambda x: ops.mul(x, x), {"x": ()})
    root, _ = forward(g, {"x": np.array(3.0)})
    assert root.item() == 9.0


def test_forward_softmax_of_zeros_is_uniform():
    g = ExprGraph(lambda z: ops.softmax(z), {"z": (4,)})
    root, _ = forward(g, {"z": np.zeros(4)})
    np.testing.assert_array_equal(root.data, np.full(4, 0.25))


def test_forward_rejects_shape_mismatch():
    g = ExprGraph(lambda z: ops.softmax(z), {"z": (4,)})
    with pytest.raises(ValueError):
        forward(g, {"z": np.zeros(3)})


def test_forward_reports_first_non_finite_node():
    g = ExprGraph(lambda x: ops.exp(ops.log(x)), {"x": (2,)})
    with pytest.raises(NonFiniteError, match="log"):
        with np.errstate(all="ignore"):
            forward(g, {"x": np.array([-1.0, 1.0])})


def test_forward_is_deterministic():
    rng = np.random.default_rng(0)
    W = rng.normal(size=(4 * 3, 5))
    g = ExprGraph(
        lambda W, x: ops.sum(ops.lstm_cell(W, Tensor(np.zeros(12)), x, Tensor(np.zeros(3)), Tensor(np.ones(3)))),
        {"W": (12, 5), "x": (2,)},
    )
    a, _ = forward(g, {"W": W, "x": np.array([0.3, -0.2])})
    b, _ = forward(g, {"W": W, "x": np.array([0.3, -0.2])})
    assert a.data.tobytes() == b.data.tobytes()


# --------------------------------------------------------------------- grad


def test_grad_of_square():
    x = tensor(3.0, requires_grad=True)
    (g,) = grad(ops.mul(x, x), [x])
    assert g.item() == 6.0


def test_grad_of_softmax_sum_is_zero():
    z = tensor(np.random.default_rng(1).normal(size=5), requires_grad=True)
    (g,) = grad(ops.sum(ops.softmax(z)), [z])
    np.testing.assert_allclose(g.data, 0.0, atol=1e-15)


def test_grad_requires_scalar_root():
    z = tensor(np.ones(3), requires_grad=True)
    with pytest.raises(GraphError):
        grad(ops.exp(z), [z])


def test_grad_unused_leaf():
    x = tensor(1.0, requires_grad=True)
    y = tensor(2.0, requires_grad=True)
    with pytest.raises(GraphError):
        grad(ops.mul(x, x), [y])
    (g,) = grad(ops.mul(x, x), [y], allow_unused=True)
    assert g.item() == 0.0


def test_grad_is_deterministic():
    rng = np.random.default_rng(3)
    W = tensor(rng.normal(size=(8, 4)), requires_grad=True)
    x = rng.normal(size=4)

    def run():
        y = ops.log_softmax(ops.tanh(ops.matmul(W, Tensor(x))))
        return grad(ops.sum(ops.mul(y, y)), [W])[0].data

    assert run().tobytes() == run().tobytes()


def test_param_vector_unpack_zero_for_unused_slice():
    pv = ParamVector({"a": (2, 3), "b": (4,)}, np.arange(10.0))
    flat = pv.leaf()
    parts = pv.unpack(flat)
    np.testing.assert_array_equal(parts["a"].data, np.arange(6.0).reshape(2, 3))
    (g,) = grad(ops.sum(parts["b"]), [flat])
    np.testing.assert_array_equal(g.data, [0] * 6 + [1] * 4)


def test_param_vector_is_immutable():
    pv = ParamVector({"a": (3,)}, [1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        pv.values[0] = 5.0
    pv2 = pv.with_slice("a", np.zeros(3))
    assert pv.get("a")[0] == 1.0 and pv2.get("a")[0] == 0.0


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-30, 30), min_size=1, max_size=8))
def test_softmax_is_a_distribution(values):
    p = ops.softmax(Tensor(np.array(values))).data
    assert abs(p.sum() - 1.0) <= 1e-12
    assert np.all(p > 0) and np.all(p < 1) or len(values) == 1


# --------------------------------------------------------- through updates


def _two_layer_net(rng, n_in=3, n_hidden=4):
    shapes = {"w1": (n_hidden, n_in), "b1": (n_hidden,), "w2": (1, n_hidden)}
    pv = ParamVector(shapes, rng.normal(size=n_hidden * n_in + n_hidden + n_hidden) * 0.7)
    xs_in = rng.normal(size=(5, n_in))
    xs_out = rng.normal(size=(5, n_in))
    ys = rng.normal(size=5)

    def loss_on(theta, xs):
        p = pv.unpack(theta)
        total = None
        for x, y in zip(xs, ys):
            hdn = ops.tanh(ops.add(ops.matmul(p["w1"], Tensor(x)), p["b1"]))
            err = ops.shift(ops.sum(ops.matmul(p["w2"], hdn)), -y)
            term = ops.mul(err, err)
            total = term if total is None else ops.add(total, term)
        return total

    return pv, (lambda t: loss_on(t, xs_in)), (lambda t: loss_on(t, xs_out))


def test_quadratic_inner_loss_exact_and_first_order():
    theta = np.array([0.5, -1.0, 2.0])
    inner = lambda t: ops.scale(ops.sum(ops.mul(t, t)), 0.5)  # noqa: E731
    outer = lambda t: ops.sum(t)  # noqa: E731
    (g,) = grad_through_update(theta, 0.1, inner, outer)
    np.testing.assert_allclose(g, 0.9, rtol=0, atol=1e-15)
    (g1,) = first_order_grad_through_update(theta, 0.1, inner, outer)
    np.testing.assert_allclose(g1, 1.0, rtol=0, atol=1e-15)


def test_zero_step_is_plain_gradient_bitwise():
    rng = np.random.default_rng(5)
    pv, inner, outer = _two_layer_net(rng)
    (g0,) = grad_through_update(pv, 0.0, inner, outer, steps=3)
    (g1,) = first_order_grad_through_update(pv, 0.0, inner, outer, steps=3)
    theta = pv.leaf()
    (plain,) = grad(outer(theta), [theta])
    assert g0.tobytes() == plain.data.tobytes()
    assert g1.tobytes() == plain.data.tobytes()


def _composed(pv, inner, outer, alpha, steps):
    def f(flat):
        t = Tensor(flat.copy(), requires_grad=True)
        for _ in range(steps):
            (g,) = grad(inner(t), [t])
            t = Tensor(t.data - alpha * g.data, requires_grad=True)
        return outer(t).item()

    return f


@pytest.mark.parametrize("steps", [1, 2, 3, 4])
def test_grad_through_update_matches_finite_differences(steps):
    rng = np.random.default_rng(10 + steps)
    pv, inner, outer = _two_layer_net(rng)
    alpha = 0.05
    (g,) = grad_through_update(pv, alpha, inner, outer, steps=steps)
    fd = central_diff(_composed(pv, inner, outer, alpha, steps), pv.values)
    assert rel_err(g, fd) < 1e-4


def test_first_order_gap_scales_linearly_with_step_size():
    ratios = []
    for seed in range(5):
        rng = np.random.default_rng(100 + seed)
        pv, inner, outer = _two_layer_net(rng)
        gaps = []
        for alpha in (1e-3, 5e-4):
            (ge,) = grad_through_update(pv, alpha, inner, outer)
            (gf,) = first_order_grad_through_update(pv, alpha, inner, outer)
            gaps.append(np.linalg.norm(ge - gf))
        ratios.append(gaps[0] / gaps[1])
    assert 1.8 <= np.mean(ratios) <= 2.2


def test_extra_leaves_get_gradients():
    # inner loss scaled by a learnable coefficient phi: adapted = theta - alpha*phi*theta
    theta = np.array([1.0, 2.0])
    phi = np.array(3.0)
    inner = lambda t, p: ops.mul(p, ops.scale(ops.sum(ops.mul(t, t)), 0.5))  # noqa: E731
    outer = lambda t, p: ops.sum(t)  # noqa: E731
    gt, gp = grad_through_update(theta, 0.1, inner, outer, extras=[phi])
    np.testing.assert_allclose(gt, 1 - 0.1 * 3.0)
    np.testing.assert_allclose(gp, -0.1 * theta.sum())
