import numpy as np
import pytest

from batchrecode.errors import UnsupportedSimulationField
from batchrecode.gf import GF2m, field
from batchrecode.rank import INF


def test_gf4_table():
    # GF(4) = {0, 1, a, a+1} with a^2 = a + 1
    want = np.array([[0, 0, 0, 0], [0, 1, 2, 3], [0, 2, 3, 1], [0, 3, 1, 2]])
    assert np.array_equal(field(4).mul_table, want)


@pytest.mark.parametrize("q", [2, 4, 16, 256])
def test_field_axioms(q):
    gf = field(q)
    M = gf.mul_table.astype(np.int64)
    a = np.arange(q)
    assert np.array_equal(M, M.T)
    assert np.all(M[1] == a)
    assert np.all(M[a[1:], gf.inv_table[1:]] == 1)
    # every nonzero row is a permutation of the nonzero elements
    assert all(sorted(M[x, 1:]) == list(range(1, q)) for x in range(1, q))
    rng = np.random.default_rng(0)
    x, y, z = rng.integers(0, q, (3, 500))
    assert np.array_equal(M[x, y ^ z], M[x, y] ^ M[x, z])
    assert np.array_equal(M[M[x, y], z], M[x, M[y, z]])


def test_unsupported():
    with pytest.raises(UnsupportedSimulationField):
        GF2m(8)
    with pytest.raises(UnsupportedSimulationField):
        field(3)
    with pytest.raises(UnsupportedSimulationField):
        field(INF)
    with pytest.raises(ZeroDivisionError):
        field(4).inv(0)


def test_rank_basic():
    gf = field(256)
    assert gf.rank(np.eye(5, dtype=np.uint8)) == 5
    assert gf.rank(np.zeros((3, 4), dtype=np.uint8)) == 0
    assert gf.rank(np.zeros((4, 0), dtype=np.uint8)) == 0
    assert gf.rank(np.array([[1, 1], [1, 1]], dtype=np.uint8)) == 1


@pytest.mark.parametrize("q", [2, 16, 256])
def test_rank_invariant_under_mixing(q):
    gf = field(q)
    rng = np.random.default_rng(1)
    A = gf.random(rng, (200, 4, 6))
    base = gf.rank(A)
    # append a combination of existing columns: rank unchanged
    extra = gf.matmul(A, gf.random(rng, (200, 6, 1)))
    assert np.array_equal(gf.rank(np.concatenate([A, extra], axis=2)), base)
    assert np.array_equal(gf.rank(np.swapaxes(A, 1, 2)), base)


def test_matmul_matches_naive():
    gf = field(16)
    rng = np.random.default_rng(2)
    A, B = gf.random(rng, (3, 4)), gf.random(rng, (4, 5))
    naive = np.zeros((3, 5), dtype=np.uint8)
    for i in range(3):
        for j in range(5):
            acc = 0
            for k in range(4):
                acc ^= int(gf.mul(A[i, k], B[k, j]))
            naive[i, j] = acc
    assert np.array_equal(gf.matmul(A, B), naive)
