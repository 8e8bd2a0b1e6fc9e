import numpy as np
import pytest

from bbdec import gf2
from bbdec.gf2 import BitMatrix


def test_rank_identity():
    assert gf2.rank(BitMatrix.identity(4)) == 4


def test_rank_zeros():
    assert gf2.rank(BitMatrix.zeros(3, 5)) == 0


def test_rank_invariant_under_row_ops():
    rng = np.random.default_rng(7)
    for _ in range(20):
        a = rng.integers(0, 2, size=(9, 14), dtype=np.uint8)
        r0 = gf2.rank(BitMatrix.from_dense(a))
        b = a[rng.permutation(9)].copy()
        i, j = rng.choice(9, size=2, replace=False)
        b[i] ^= b[j]
        assert gf2.rank(BitMatrix.from_dense(b)) == r0


def test_solve_identity():
    b = np.array([1, 0, 1, 1], dtype=np.uint8)
    x = gf2.solve(BitMatrix.identity(4), b)
    assert np.array_equal(x, b)


def test_solve_zero_matrix_inconsistent():
    assert gf2.solve(BitMatrix.zeros(3, 4), np.array([0, 1, 0], dtype=np.uint8)) is None


def test_solve_random_full_rank():
    rng = np.random.default_rng(11)
    found = 0
    while found < 5:
        a = rng.integers(0, 2, size=(8, 8), dtype=np.uint8)
        m = BitMatrix.from_dense(a)
        if gf2.rank(m) < 8:
            continue
        found += 1
        x0 = rng.integers(0, 2, size=8, dtype=np.uint8)
        b = m.matvec(x0)
        x = gf2.solve(m, b)
        assert x is not None
        assert np.array_equal(m.matvec(x), b)


def test_solve_dimension_mismatch():
    with pytest.raises(ValueError):
        gf2.solve(BitMatrix.identity(4), np.zeros(3, dtype=np.uint8))


def test_nullspace_identity_empty():
    assert gf2.nullspace(BitMatrix.identity(3)) == []


def test_nullspace_zero_matrix():
    basis = gf2.nullspace(BitMatrix.zeros(2, 4))
    assert len(basis) == 4


def test_nullspace_known_basis():
    m = BitMatrix.from_dense([[1, 1, 0], [0, 1, 1]])
    basis = gf2.nullspace(m)
    assert len(basis) == 1
    assert np.array_equal(basis[0], [1, 1, 1])
    # exhaustive: the only vectors with m @ x = 0 are 000 and 111
    sols = [x for x in range(8) if not np.any(m.matvec(np.array([(x >> i) & 1 for i in range(3)])))]
    assert sols == [0, 7]


def test_rank_plus_nullity():
    rng = np.random.default_rng(3)
    for _ in range(20):
        rows = int(rng.integers(1, 10))
        cols = int(rng.integers(1, 12))
        a = rng.integers(0, 2, size=(rows, cols), dtype=np.uint8)
        m = BitMatrix.from_dense(a)
        assert gf2.rank(m) + len(gf2.nullspace(m)) == cols


def test_nullspace_vectors_satisfy():
    rng = np.random.default_rng(5)
    a = rng.integers(0, 2, size=(6, 10), dtype=np.uint8)
    m = BitMatrix.from_dense(a)
    for v in gf2.nullspace(m):
        assert not np.any(m.matvec(v))


def test_matmul_matches_numpy():
    rng = np.random.default_rng(13)
    a = rng.integers(0, 2, size=(5, 7), dtype=np.uint8)
    b = rng.integers(0, 2, size=(7, 4), dtype=np.uint8)
    prod = BitMatrix.from_dense(a).matmul(BitMatrix.from_dense(b))
    assert np.array_equal(prod.to_dense(), (a @ b) % 2)


def test_wide_matrix_packing():
    # exercise multi-word rows
    rng = np.random.default_rng(17)
    a = rng.integers(0, 2, size=(4, 200), dtype=np.uint8)
    m = BitMatrix.from_dense(a)
    assert np.array_equal(m.to_dense(), a)
    x = rng.integers(0, 2, size=200, dtype=np.uint8)
    assert np.array_equal(m.matvec(x), (a @ x) % 2)
