"""Dense linear algebra over GF(2) with bit-packed rows.

Rows are packed into 64-bit words so that row elimination is a handful of
word XORs even for matrices with thousands of columns. Everything here is
deterministic: pivots are always the first nonzero column left-to-right.
"""

from __future__ import annotations

import numpy as np

_WORD = 64


class BitMatrix:
    """A rows x cols matrix over GF(2), rows packed into uint64 words.

    Bit j of row i lives in word j // 64 at bit position j % 64
    (little-endian within the word). Instances are treated as immutable by
    all public operations; methods that need scratch space copy first.
    """

    __slots__ = ("rows", "cols", "words")

    def __init__(self, rows: int, cols: int, words: np.ndarray | None = None):
        self.rows = rows
        self.cols = cols
        nw = (cols + _WORD - 1) // _WORD if cols else 1
        if words is None:
            words = np.zeros((rows, nw), dtype=np.uint64)
        else:
            if words.shape != (rows, nw):
                raise ValueError(f"storage shape {words.shape} inconsistent with {rows}x{cols}")
        self.words = words

    # -- construction ------------------------------------------------------

    @classmethod
    def from_dense(cls, a) -> "BitMatrix":
        a = np.atleast_2d(np.asarray(a, dtype=np.uint8) & 1)
        rows, cols = a.shape
        m = cls(rows, cols)
        if rows and cols:
            nw = m.words.shape[1]
            padded = np.zeros((rows, nw * _WORD), dtype=np.uint8)
            padded[:, :cols] = a
            packed = np.packbits(padded, axis=1, bitorder="little")
            m.words[:] = np.ascontiguousarray(packed).view(np.uint64)
        return m

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "BitMatrix":
        return cls(rows, cols)

    @classmethod
    def identity(cls, n: int) -> "BitMatrix":
        m = cls(n, n)
        for i in range(n):
            m.set(i, i, 1)
        return m

    def copy(self) -> "BitMatrix":
        return BitMatrix(self.rows, self.cols, self.words.copy())

    # -- element access ----------------------------------------------------

    def get(self, i: int, j: int) -> int:
        return int((self.words[i, j // _WORD] >> np.uint64(j % _WORD)) & np.uint64(1))

    def set(self, i: int, j: int, v: int) -> None:
        w, b = j // _WORD, np.uint64(j % _WORD)
        if v & 1:
            self.words[i, w] |= np.uint64(1) << b
        else:
            self.words[i, w] &= ~(np.uint64(1) << b)

    def row(self, i: int) -> np.ndarray:
        """Row i as a dense 0/1 uint8 vector of length cols."""
        return unpack_bits(self.words[i], self.cols)

    def to_dense(self) -> np.ndarray:
        if self.rows == 0 or self.cols == 0:
            return np.zeros((self.rows, self.cols), dtype=np.uint8)
        as_bytes = np.ascontiguousarray(self.words).view(np.uint8)
        return np.unpackbits(as_bytes, axis=1, bitorder="little")[:, : self.cols]

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, BitMatrix)
            and self.rows == other.rows
            and self.cols == other.cols
            and np.array_equal(self.words, other.words)
        )

    def __hash__(self):  # pragma: no cover - identity hashing unused
        return id(self)

    # -- algebra -----------------------------------------------------------

    def transpose(self) -> "BitMatrix":
        return BitMatrix.from_dense(self.to_dense().T)

    def matmul(self, other: "BitMatrix") -> "BitMatrix":
        """self @ other over GF(2)."""
        if self.cols != other.rows:
            raise ValueError(f"inner dimensions differ: {self.cols} vs {other.rows}")
        out = BitMatrix(self.rows, other.cols)
        for i in range(self.rows):
            acc = np.zeros_like(out.words[0])
            ri = self.words[i]
            for k in range(self.cols):
                if (ri[k // _WORD] >> np.uint64(k % _WORD)) & np.uint64(1):
                    acc ^= other.words[k]
            out.words[i] = acc
        return out

    def matvec(self, x: np.ndarray) -> np.ndarray:
        """self @ x over GF(2) for a dense 0/1 vector x."""
        x = np.asarray(x, dtype=np.uint8) & 1
        if x.shape != (self.cols,):
            raise ValueError(f"vector length {x.shape} != cols {self.cols}")
        xw = pack_bits(x)
        prod = self.words & xw
        return parity_per_row(prod)

    def stack(self, other: "BitMatrix") -> "BitMatrix":
        if self.cols != other.cols:
            raise ValueError("column counts differ")
        return BitMatrix(
            self.rows + other.rows, self.cols, np.vstack([self.words, other.words])
        )


def pack_bits(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.uint8) & 1
    n = len(v)
    nw = (n + _WORD - 1) // _WORD if n else 1
    padded = np.zeros(nw * _WORD, dtype=np.uint8)
    padded[:n] = v
    return np.packbits(padded, bitorder="little").view(np.uint64)


def unpack_bits(words: np.ndarray, n: int) -> np.ndarray:
    as_bytes = np.ascontiguousarray(words).view(np.uint8)
    return np.unpackbits(as_bytes, bitorder="little")[:n]


def parity_per_row(words: np.ndarray) -> np.ndarray:
    """Parity of the set bits in each row of a (rows, nw) uint64 array."""
    acc = np.bitwise_xor.reduce(words, axis=-1)
    acc ^= acc >> np.uint64(32)
    acc ^= acc >> np.uint64(16)
    acc ^= acc >> np.uint64(8)
    acc ^= acc >> np.uint64(4)
    acc ^= acc >> np.uint64(2)
    acc ^= acc >> np.uint64(1)
    return (acc & np.uint64(1)).astype(np.uint8)


def row_echelon(m: BitMatrix) -> tuple[np.ndarray, list[int]]:
    """Reduced row echelon form of m.

    Returns (packed echelon rows including zero rows, pivot column list).
    Pivoting is deterministic: first nonzero column left-to-right.
    """
    work = m.words.copy()
    rows, cols = m.rows, m.cols
    pivots: list[int] = []
    r = 0
    for c in range(cols):
        if r >= rows:
            break
        w, b = c // _WORD, np.uint64(c % _WORD)
        colbits = (work[r:, w] >> b) & np.uint64(1)
        hits = np.nonzero(colbits)[0]
        if len(hits) == 0:
            continue
        p = r + int(hits[0])
        if p != r:
            work[[r, p]] = work[[p, r]]
        # clear column c everywhere else (full reduction)
        col_all = (work[:, w] >> b) & np.uint64(1)
        col_all[r] = 0
        sel = np.nonzero(col_all)[0]
        if len(sel):
            work[sel] ^= work[r]
        pivots.append(c)
        r += 1
    return work, pivots


def rank(m: BitMatrix) -> int:
    """GF(2) row rank."""
    _, pivots = row_echelon(m)
    return len(pivots)


def solve(m: BitMatrix, b: np.ndarray) -> np.ndarray | None:
    """Some x with m @ x = b over GF(2), or None if inconsistent.

    Free variables are set to zero. b must have length m.rows.
    """
    b = np.asarray(b, dtype=np.uint8) & 1
    if b.shape != (m.rows,):
        raise ValueError(f"rhs length {b.shape} != rows {m.rows}")
    # augment with b as an extra column
    aug = BitMatrix(m.rows, m.cols + 1)
    nw = m.words.shape[1]
    aug.words[:, :nw] = m.words
    for i in np.nonzero(b)[0]:
        aug.set(int(i), m.cols, 1)
    ech, pivots = row_echelon(aug)
    if pivots and pivots[-1] == m.cols:
        return None  # a zero row of m maps to 1
    x = np.zeros(m.cols, dtype=np.uint8)
    bcol_w, bcol_b = m.cols // _WORD, np.uint64(m.cols % _WORD)
    for r, c in enumerate(pivots):
        x[c] = int((ech[r, bcol_w] >> bcol_b) & np.uint64(1))
    return x


def nullspace(m: BitMatrix) -> list[np.ndarray]:
    """Basis of {x : m @ x = 0}, as dense 0/1 vectors. Size = cols - rank."""
    ech, pivots = row_echelon(m)
    pivot_set = set(pivots)
    free = [c for c in range(m.cols) if c not in pivot_set]
    basis = []
    for f in free:
        v = np.zeros(m.cols, dtype=np.uint8)
        v[f] = 1
        fw, fb = f // _WORD, np.uint64(f % _WORD)
        for r, c in enumerate(pivots):
            if (ech[r, fw] >> fb) & np.uint64(1):
                v[c] = 1
        basis.append(v)
    return basis
