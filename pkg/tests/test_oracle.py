import ast
import pathlib

import numpy as np
import pytest

from morphmlp import oracle
from morphmlp.bench import conv2d_3x3, grouped_conv1d_axis
from morphmlp.morphfc import chunk_fc
from morphmlp.oracle import (
    block_diagonal,
    grouped_conv1d_reference,
    morphfc_as_conv_weight,
    naive_direction_fc,
    naive_morphfc,
    naive_morphfc_t,
)
from morphmlp.tensor import Tensor


def test_oracle_module_imports_no_tensor_machinery():
    tree = ast.parse(pathlib.Path(oracle.__file__).read_text())
    imported = set()
    for node in ast.walk(tree):
        if isinstance(node, ast.ImportFrom):
            imported.add(node.module or "")
        elif isinstance(node, ast.Import):
            imported.update(a.name for a in node.names)
    assert not any("tensor" in m or "morphfc" in m for m in imported), imported


def test_conv_definition_kernel3_pad1():
    x = np.array([[1.0, 2.0, 3.0]])
    w = np.array([[[0.5, -1.0, 2.0]]])
    out = grouped_conv1d_reference(x, w, 3, padding=1)
    xp = [0.0, 1.0, 2.0, 3.0, 0.0]
    expected = [sum(w[0, 0, j] * xp[t + j] for j in range(3)) for t in range(3)]
    np.testing.assert_allclose(out[0], expected, rtol=0, atol=1e-15)


def test_grouped_conv_groups_do_not_mix():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((4, 6))
    w = rng.standard_normal((4, 2, 3))
    out = grouped_conv1d_reference(x, w, 3, groups=2, padding=1)
    x2 = x.copy()
    x2[2:] += 1.0
    out2 = grouped_conv1d_reference(x2, w, 3, groups=2, padding=1)
    np.testing.assert_array_equal(out[:2], out2[:2])


def _horizontal_groups(x, length, group):
    """Token sequence of each channel group in row-major order: ``[G][D, HW]``."""
    h, w, c = x.shape
    seq = x.reshape(h * w, c)
    return [seq[:, k * group:(k + 1) * group].T for k in range(c // group)]


@pytest.mark.parametrize("h,w,c,length,group", [(4, 6, 4, 4, 2), (6, 6, 6, 3, 3), (2, 8, 2, 8, 1)])
def test_non_shared_strided_conv_equals_horizontal_pathway(h, w, c, length, group):
    rng = np.random.default_rng(1)
    x = rng.standard_normal((h, w, c))
    wh = rng.standard_normal((length * group, length * group))
    fast = chunk_fc(Tensor(x), Tensor(wh), "horizontal", length, group).data.reshape(h * w, c)
    conv_w = morphfc_as_conv_weight(wh, length, group)
    for k, seq in enumerate(_horizontal_groups(x, length, group)):
        conv = grouped_conv1d_reference(seq, conv_w, length, stride=length, padding=0,
                                        shared_weights=False)
        assert np.max(np.abs(conv.T - fast[:, k * group:(k + 1) * group])) < 1e-12


def test_horizontal_pathway_is_block_diagonal_matrix():
    rng = np.random.default_rng(2)
    h, w, c, length, group = 4, 4, 4, 4, 2
    x = rng.standard_normal((h, w, c))
    wh = rng.standard_normal((length * group, length * group))
    fast = chunk_fc(Tensor(x), Tensor(wh), "horizontal", length, group).data.reshape(h * w, c)
    big = block_diagonal(wh, h * w // length)
    for k in range(c // group):
        vec = x.reshape(h * w, c)[:, k * group:(k + 1) * group].reshape(-1)
        out = (vec @ big).reshape(h * w, group)
        assert np.max(np.abs(out - fast[:, k * group:(k + 1) * group])) < 1e-12


def test_shared_weight_conv_differs_from_morphfc():
    rng = np.random.default_rng(3)
    length, group = 4, 1
    x = rng.standard_normal((1, 8, 1))
    wh = rng.standard_normal((length, length))
    fast = chunk_fc(Tensor(x), Tensor(wh), "horizontal", length, group).data.reshape(1, 8)
    shared = rng.standard_normal((1, 1, length))
    conv = grouped_conv1d_reference(x.reshape(1, 8), shared, length, padding=2)[:, :8]
    assert np.max(np.abs(conv - fast)) > 1e-3
    # a shared 1xK filter has K weights; one MorphFC chunk matrix has (K*D)^2
    assert shared.size < wh.size


def test_padded_oracle_agrees_with_unpadded_tokens():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((5, 5, 2))
    wh = rng.standard_normal((4, 4))
    out = naive_direction_fc(x, wh, 4, 1, vertical=False)
    # the first six chunks never see padding: recompute them by hand
    seq = x.reshape(25, 2)
    for i in range(6):
        chunk = seq[4 * i:4 * i + 4, 0]
        np.testing.assert_allclose(out.reshape(25, 2)[4 * i:4 * i + 4, 0], chunk @ wh, atol=1e-13)


def test_oracle_identity_cases():
    x = np.random.default_rng(5).standard_normal((3, 3, 2, 4))
    np.testing.assert_array_equal(naive_morphfc_t(x, np.eye(4), 2), x)
    y = np.random.default_rng(6).standard_normal((3, 2, 2))
    np.testing.assert_array_equal(naive_morphfc(y, np.eye(2), np.eye(2), np.eye(2), np.zeros(2), 1, 2),
                                  3 * y)


def test_vectorized_bench_convs_match_definition():
    rng = np.random.default_rng(7)
    b, h, w, c, g, k = 2, 3, 5, 4, 2, 3
    d = c // g
    x = rng.standard_normal((b, h, w, c))
    weight = rng.standard_normal((g, d, d, k))
    ref_w = np.zeros((c, d, k))
    for gi in range(g):
        for o in range(d):
            ref_w[gi * d + o] = weight[gi, :, o, :]
    fast = grouped_conv1d_axis(x, weight, axis=2)
    for bi in range(b):
        for r in range(h):
            ref = grouped_conv1d_reference(x[bi, r].T, ref_w, k, groups=g, padding=1)
            np.testing.assert_allclose(fast[bi, r], ref.T, rtol=0, atol=1e-12)

    w3 = rng.standard_normal((3, 3, c, c))
    out = conv2d_3x3(x, w3)
    xp = np.pad(x, [(0, 0), (1, 1), (1, 1), (0, 0)])
    ref = sum(xp[:, i:i + h, j:j + w] @ w3[i, j] for i in range(3) for j in range(3))
    np.testing.assert_allclose(out, ref, rtol=0, atol=1e-12)
