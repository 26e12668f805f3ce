import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from morphmlp import tensor as T
from morphmlp.gradcheck import finite_diff_check
from morphmlp.oracle import naive_matmul
from morphmlp.tensor import GraphError, ShapeError, Tensor, backward, no_grad


def leaf(rng, *shape):
    return Tensor(rng.standard_normal(shape), requires_grad=True)


def projected(out_fn, rng):
    """Scalar objective ``sum(out * R)`` with a fixed random ``R``."""
    cache = {}

    def f():
        out = out_fn()
        if "r" not in cache:
            cache["r"] = Tensor(rng.standard_normal(out.shape))
        return T.sum_(T.mul(out, cache["r"]))

    return f


# ---- matmul -------------------------------------------------------------

def test_matmul_identity_returns_other_operand():
    b = np.arange(9.0).reshape(3, 3)
    np.testing.assert_array_equal(T.matmul(Tensor(np.eye(3)), Tensor(b)).data, b)


def test_matmul_hand_example():
    out = T.matmul(Tensor([[1.0, 2.0], [3.0, 4.0]]), Tensor([[5.0, 6.0], [7.0, 8.0]]))
    np.testing.assert_array_equal(out.data, [[19.0, 22.0], [43.0, 50.0]])


def test_matmul_7x5_by_5x4_matches_triple_loop():
    rng = np.random.default_rng(0)
    a, b = rng.standard_normal((7, 5)), rng.standard_normal((5, 4))
    assert np.max(np.abs(T.matmul(Tensor(a), Tensor(b)).data - naive_matmul(a, b))) < 1e-12


def test_matmul_matches_triple_loop_on_50_shapes():
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(50):
        m, k, n = rng.integers(1, 33, size=3)
        a, b = rng.standard_normal((m, k)), rng.standard_normal((k, n))
        worst = max(worst, np.max(np.abs(T.matmul(Tensor(a), Tensor(b)).data - naive_matmul(a, b))))
    assert worst < 1e-12


def test_matmul_shape_mismatch_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(4, 2\)"):
        T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 2))))


def test_matmul_dtype_mismatch():
    with pytest.raises(TypeError):
        T.matmul(Tensor(np.ones((2, 2), np.float32)), Tensor(np.ones((2, 2))))


# ---- layer norm / gelu --------------------------------------------------

def test_layer_norm_constant_row_is_zero():
    out = T.layer_norm(Tensor([[3.0, 3.0, 3.0]]), Tensor(np.ones(3)), Tensor(np.zeros(3)))
    np.testing.assert_array_equal(out.data, 0.0)


def test_layer_norm_hand_example():
    out = T.layer_norm(Tensor([1.0, 2.0, 3.0]), Tensor(np.ones(3)), Tensor(np.zeros(3)), eps=0.0)
    np.testing.assert_allclose(out.data, [-np.sqrt(1.5), 0.0, np.sqrt(1.5)], atol=1e-15)


def test_layer_norm_matches_scalar_loop():
    rng = np.random.default_rng(2)
    x, g, b = rng.standard_normal((5, 3, 7)), rng.standard_normal(7), rng.standard_normal(7)
    out = T.layer_norm(Tensor(x), Tensor(g), Tensor(b), eps=1e-5).data
    ref = np.empty_like(x)
    for i in range(5):
        for j in range(3):
            row = [float(v) for v in x[i, j]]
            mu = sum(row) / 7
            var = sum((v - mu) ** 2 for v in row) / 7
            for c in range(7):
                ref[i, j, c] = g[c] * (row[c] - mu) / (var + 1e-5) ** 0.5 + b[c]
    assert np.max(np.abs(out - ref)) < 1e-12


def test_layer_norm_channel_mismatch():
    with pytest.raises(ShapeError):
        T.layer_norm(Tensor(np.ones((2, 4))), Tensor(np.ones(3)), Tensor(np.zeros(3)))


def test_gelu_exact_erf_values():
    from math import erf, sqrt

    xs = np.array([-3.0, -1.0, 0.0, 0.5, 2.0])
    ref = [v * 0.5 * (1 + erf(v / sqrt(2))) for v in xs]
    np.testing.assert_allclose(T.gelu(Tensor(xs)).data, ref, rtol=0, atol=1e-15)


# ---- layout ops ---------------------------------------------------------

@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(1, 4), min_size=1, max_size=4), st.randoms(use_true_random=False))
def test_reshape_permute_round_trip_is_bitwise(shape, rnd):
    x = np.random.default_rng(rnd.randint(0, 2**31)).standard_normal(shape)
    axes = list(range(len(shape)))
    rnd.shuffle(axes)
    inverse = list(np.argsort(axes))
    y = T.permute(T.permute(Tensor(x), axes), inverse)
    assert np.array_equal(y.data, x)
    assert np.array_equal(T.reshape(T.reshape(Tensor(x), (-1,)), shape).data, x)


def test_pad_then_slice_round_trip():
    x = np.random.default_rng(3).standard_normal((3, 4))
    p = T.pad_zeros(Tensor(x), [(1, 2), (0, 3)])
    assert p.shape == (6, 7)
    assert np.array_equal(T.getitem(p, (slice(1, 4), slice(0, 4))).data, x)


def test_restricted_broadcast_rejects_mutual_expansion():
    with pytest.raises(ShapeError):
        T.add(Tensor(np.ones((3, 1))), Tensor(np.ones((1, 4))))
    assert T.add(Tensor(np.ones((2, 3))), Tensor(np.ones(3))).shape == (2, 3)


def test_tensor_is_row_major_and_contiguous():
    t = T.permute(Tensor(np.arange(6.0).reshape(2, 3)), (1, 0))
    assert t.data.flags.c_contiguous
    assert t.size == 6 and t.shape == (3, 2)


def test_item_rejects_non_scalar():
    with pytest.raises(ShapeError):
        Tensor(np.ones(2)).item()


# ---- gradients ----------------------------------------------------------

def _cases():
    """op name -> builder(rng) returning (params, forward fn)."""

    def unary(fn, *shape):
        def build(rng):
            x = leaf(rng, *shape)
            return {"x": x}, lambda: fn(x)
        return build

    def binary(fn, sa, sb):
        def build(rng):
            a, b = leaf(rng, *sa), leaf(rng, *sb)
            return {"a": a, "b": b}, lambda: fn(a, b)
        return build

    def layer_norm(rng):
        x, g, b = leaf(rng, 4, 6), leaf(rng, 6), leaf(rng, 6)
        return {"x": x, "gamma": g, "beta": b}, lambda: T.layer_norm(x, g, b)

    def linear(rng):
        x, w, b = leaf(rng, 2, 3, 4), leaf(rng, 4, 5), leaf(rng, 5)
        return {"x": x, "w": w, "b": b}, lambda: T.linear(x, w, b)

    def concat(rng):
        a, b = leaf(rng, 2, 3), leaf(rng, 2, 4)
        return {"a": a, "b": b}, lambda: T.concat([a, b], axis=1)

    return {
        "add": binary(T.add, (3, 4), (3, 4)),
        "add_bias": binary(T.add, (3, 4), (4,)),
        "mul": binary(T.mul, (3, 4), (3, 4)),
        "mul_broadcast": binary(T.mul, (2, 3, 4), (3, 1)),
        "scale": unary(lambda x: T.scale(x, -1.7), 3, 4),
        "neg": unary(T.neg, 5),
        "gelu": unary(T.gelu, 3, 5),
        "matmul": binary(T.matmul, (3, 4), (4, 2)),
        "linear": linear,
        "reshape": unary(lambda x: T.reshape(x, (6, 2)), 3, 4),
        "permute": unary(lambda x: T.permute(x, (2, 0, 1)), 2, 3, 4),
        "getitem": unary(lambda x: T.getitem(x, (slice(1, 3), slice(None, None, 2))), 4, 5),
        "concat": concat,
        "pad_zeros": unary(lambda x: T.pad_zeros(x, [(1, 0), (2, 1)]), 3, 2),
        "sum": unary(lambda x: T.sum_(x, axis=1), 3, 4),
        "mean": unary(lambda x: T.mean(x, axis=(0, 2), keepdims=True), 2, 3, 4),
        "layer_norm": layer_norm,
        "softmax": unary(lambda x: T.softmax(x, axis=-1), 3, 5),
        "log_softmax": unary(lambda x: T.log_softmax(x, axis=-1), 3, 5),
    }


@pytest.mark.parametrize("op", sorted(_cases()))
def test_op_gradient_on_20_instances(op):
    build = _cases()[op]
    for seed in range(20):
        rng = np.random.default_rng(seed)
        params, fn = build(rng)
        report = finite_diff_check(projected(fn, rng), params, h=1e-5, tol=1e-5)
        assert report.passed, (op, seed, report.lines())


def test_gradient_accumulates_over_shared_use():
    x = Tensor([2.0, -1.0], requires_grad=True)
    backward(T.sum_(T.add(T.mul(x, x), x)))
    np.testing.assert_array_equal(x.grad, [5.0, -1.0])


# ---- tape ---------------------------------------------------------------

def test_tape_is_topological_and_backward_runs_in_reverse():
    rng = np.random.default_rng(4)
    a, b = leaf(rng, 3, 3), leaf(rng, 3, 3)
    loss = T.sum_(T.gelu(T.add(T.matmul(a, b), a)))
    nodes = T.tape_of(loss)
    position = {id(n): i for i, n in enumerate(nodes)}
    for n in nodes:
        for t in n.inputs:
            if t._node is not None:
                assert position[id(t._node)] < position[id(n)]

    visited = []
    for n in nodes:
        fn = n.backward_fn

        def spy(g, fn=fn, seq=n.seq):
            visited.append(seq)
            return fn(g)

        n.backward_fn = spy
    backward(loss)
    assert visited == sorted(visited, reverse=True)
    assert len(visited) == len(nodes)


def test_backward_errors():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(GraphError, match="scalar"):
        backward(T.scale(x, 2.0))
    with pytest.raises(GraphError, match="detached"):
        backward(T.sum_(Tensor(np.ones(3))))
    loss = T.sum_(T.mul(x, x))
    backward(loss)
    with pytest.raises(GraphError):
        backward(loss)


def test_no_grad_records_nothing():
    x = Tensor(np.ones(3), requires_grad=True)
    with no_grad():
        y = T.sum_(T.mul(x, x))
    assert not y.requires_grad and y._node is None


def test_count_macs_counts_matmul():
    with T.count_macs() as total:
        T.matmul(Tensor(np.ones((3, 4))), Tensor(np.ones((4, 5))))
    assert total[0] == 60


def test_identical_seeds_give_bitwise_identical_results():
    def run():
        rng = np.random.default_rng(7)
        a, b = leaf(rng, 8, 6), leaf(rng, 6, 5)
        loss = T.sum_(T.log_softmax(T.gelu(T.matmul(a, b))))
        backward(loss)
        return loss.data.tobytes() + a.grad.tobytes() + b.grad.tobytes()

    assert run() == run()
