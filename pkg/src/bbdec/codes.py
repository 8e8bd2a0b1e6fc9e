"""CSS code construction: bivariate bicycle codes and small presets.

A bivariate bicycle code is built from two polynomials A, B in the cyclic
shift operators x = S_l (x) I_m and y = I_l (x) S_m. The check matrices are
hx = [A | B] and hz = [B^T | A^T]; since A and B are sums of commuting
circulants, hx @ hz^T = 0 automatically.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import gf2
from .gf2 import BitMatrix


@dataclass(frozen=True)
class Monomial:
    """x^a y^b with exponents reduced modulo the lattice dimensions."""

    x_exp: int
    y_exp: int = 0


@dataclass(frozen=True)
class BbParams:
    """Construction data of a bivariate bicycle code (kept for scheduling)."""

    l: int
    m: int
    a_terms: tuple[Monomial, ...]
    b_terms: tuple[Monomial, ...]


@dataclass
class CssCode:
    """A CSS stabilizer code with symplectically paired logical operators.

    logical_x[i] anticommutes with logical_z[i] and commutes with every
    check row and every other logical representative. Supports are sorted
    tuples of qubit indices.
    """

    n: int
    hx: BitMatrix
    hz: BitMatrix
    logical_x: list[tuple[int, ...]] = field(default_factory=list)
    logical_z: list[tuple[int, ...]] = field(default_factory=list)
    name: str = "css"
    bb_params: BbParams | None = None

    @property
    def k(self) -> int:
        return len(self.logical_x)

    def validate(self) -> None:
        """Check the commutation and pairing invariants; raises on failure."""
        prod = self.hx.matmul(self.hz.transpose())
        if np.any(prod.words):
            raise ValueError("hx @ hz^T != 0: checks do not commute")
        k = self.n - gf2.rank(self.hx) - gf2.rank(self.hz)
        if k != self.k:
            raise ValueError(f"stored {self.k} logical pairs but n - rank gives {k}")
        lx = supports_to_matrix(self.logical_x, self.n)
        lz = supports_to_matrix(self.logical_z, self.n)
        if np.any(lx.matmul(self.hz.transpose()).words):
            raise ValueError("an X logical anticommutes with a Z check")
        if np.any(lz.matmul(self.hx.transpose()).words):
            raise ValueError("a Z logical anticommutes with an X check")
        pairing = lx.matmul(lz.transpose())
        if pairing != BitMatrix.identity(self.k):
            raise ValueError("logical pairing matrix is not the identity")


def supports_to_matrix(supports: list[tuple[int, ...]], n: int) -> BitMatrix:
    m = BitMatrix(len(supports), n)
    for i, sup in enumerate(supports):
        for q in sup:
            m.set(i, q, 1)
    return m


def _shift_block(l: int, m: int, mono: Monomial) -> np.ndarray:
    """Dense l*m x l*m block for x^a y^b acting on row-major (i, j) indices."""
    a, b = mono.x_exp % l, mono.y_exp % m
    out = np.zeros((l * m, l * m), dtype=np.uint8)
    for i in range(l):
        for j in range(m):
            out[i * m + j, ((i + a) % l) * m + ((j + b) % m)] = 1
    return out


def build_bb_code(l: int, m: int, a_terms: list[Monomial], b_terms: list[Monomial],
                  name: str = "bb") -> CssCode:
    """Construct the bivariate bicycle code for polynomials A and B.

    n = 2*l*m data qubits; k follows from the GF(2) rank of the stacked
    checks (degenerate polynomials just yield larger k).
    """
    if l < 2 or m < 2:
        raise ValueError("lattice dimensions must be at least 2")
    if not a_terms or not b_terms:
        raise ValueError("polynomials must have at least one monomial")
    half = l * m
    a_mat = np.zeros((half, half), dtype=np.uint8)
    for t in a_terms:
        a_mat ^= _shift_block(l, m, t)
    b_mat = np.zeros((half, half), dtype=np.uint8)
    for t in b_terms:
        b_mat ^= _shift_block(l, m, t)
    hx = BitMatrix.from_dense(np.hstack([a_mat, b_mat]))
    hz = BitMatrix.from_dense(np.hstack([b_mat.T, a_mat.T]))
    code = CssCode(
        n=2 * half,
        hx=hx,
        hz=hz,
        name=name,
        bb_params=BbParams(l, m, tuple(a_terms), tuple(b_terms)),
    )
    code.logical_x, code.logical_z = logical_operators(code)
    return code


def logical_operators(code: CssCode) -> tuple[list[tuple[int, ...]], list[tuple[int, ...]]]:
    """Symplectically paired logical representatives from the check matrices.

    X-type candidates span ker(hz) modulo rowspace(hx); Z-type span ker(hx)
    modulo rowspace(hz). The Z basis is then transformed so the pairing
    matrix Lx @ Lz^T is the k x k identity. Representative choice is
    deterministic (echelon pivot order), so rebuilt codes are bit-identical.
    """
    n = code.n
    lx_rows = _quotient_basis(gf2.nullspace(code.hz), code.hx, n)
    lz_rows = _quotient_basis(gf2.nullspace(code.hx), code.hz, n)
    k = len(lx_rows)
    if len(lz_rows) != k:
        raise ValueError("X and Z logical counts differ; checks are inconsistent")
    if k == 0:
        return [], []
    lx = BitMatrix.from_dense(np.array(lx_rows, dtype=np.uint8))
    lz = BitMatrix.from_dense(np.array(lz_rows, dtype=np.uint8))
    pairing = lx.matmul(lz.transpose())
    pinv = _invert(pairing)
    lz_fixed = pinv.transpose().matmul(lz)
    logical_x = [tuple(int(q) for q in np.nonzero(lx.row(i))[0]) for i in range(k)]
    logical_z = [tuple(int(q) for q in np.nonzero(lz_fixed.row(i))[0]) for i in range(k)]
    return logical_x, logical_z


def _quotient_basis(kernel: list[np.ndarray], checks: BitMatrix, n: int) -> list[np.ndarray]:
    """Kernel vectors extending the check rowspace, greedily by rank growth."""
    picked: list[np.ndarray] = []
    base = checks
    base_rank = gf2.rank(base)
    for v in kernel:
        cand = base.stack(BitMatrix.from_dense(v.reshape(1, -1)))
        r = gf2.rank(cand)
        if r > base_rank:
            picked.append(v)
            base = cand
            base_rank = r
    return picked


def _invert(m: BitMatrix) -> BitMatrix:
    """Inverse of a square invertible GF(2) matrix via [m | I] elimination."""
    k = m.rows
    aug = BitMatrix(k, 2 * k)
    for i in range(k):
        for j in range(k):
            if m.get(i, j):
                aug.set(i, j, 1)
        aug.set(i, k + i, 1)
    ech, pivots = gf2.row_echelon(aug)
    if pivots[:k] != list(range(k)):
        raise ValueError("pairing matrix is singular; logicals are not symplectic")
    inv = BitMatrix(k, k)
    full = BitMatrix(k, 2 * k, ech)
    for i in range(k):
        for j in range(k):
            if full.get(i, k + j):
                inv.set(i, j, 1)
    return inv


# Named presets. The paper quotes only the code parameters; these exponent
# sets reproduce n and k under the rank check (see tests), which is the only
# validation available here (distance is quoted, not certified).
_PRESET_A = [Monomial(3, 0), Monomial(0, 1), Monomial(0, 2)]
_PRESET_B = [Monomial(0, 3), Monomial(1, 0), Monomial(2, 0)]


def bb72() -> CssCode:
    """The [[72,12,6]] bivariate bicycle code (l = m = 6)."""
    return build_bb_code(6, 6, _PRESET_A, _PRESET_B, name="bb72")


def bb144() -> CssCode:
    """The [[144,12,12]] bivariate bicycle code (l = 12, m = 6)."""
    return build_bb_code(12, 6, _PRESET_A, _PRESET_B, name="bb144")


def repetition_code(distance: int) -> CssCode:
    """Phase-flip repetition code with X-type checks X_i X_{i+1}.

    Matches the memory experiment convention (|+> preparation, X logical
    readout): the X checks are deterministic from round 0 and detect the
    Z-type faults that flip the logical X measurement.
    """
    if distance < 2:
        raise ValueError("distance must be at least 2")
    hx_rows = np.zeros((distance - 1, distance), dtype=np.uint8)
    for i in range(distance - 1):
        hx_rows[i, i] = 1
        hx_rows[i, i + 1] = 1
    code = CssCode(
        n=distance,
        hx=BitMatrix.from_dense(hx_rows),
        hz=BitMatrix(0, distance),
        name=f"rep{distance}",
    )
    code.logical_x, code.logical_z = logical_operators(code)
    return code


PRESETS = {
    "bb72": bb72,
    "bb144": bb144,
    "rep3": lambda: repetition_code(3),
    "rep5": lambda: repetition_code(5),
}


def from_preset(name: str) -> CssCode:
    try:
        return PRESETS[name]()
    except KeyError:
        raise ValueError(f"unknown code preset {name!r}; known: {sorted(PRESETS)}") from None
