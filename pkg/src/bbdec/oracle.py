"""Exact maximum-likelihood decoding of small detector error models.

Brute force on purpose: enumerate all 2^N_E fault patterns once, binning
the probability mass of each (syndrome, logical flip) pair. The table then
answers posterior and argmax queries for every syndrome. Feasible only for
small models, which is the point of an oracle.
"""

from __future__ import annotations

import numpy as np

from .faultsim import DetectorErrorModel

MAX_MECHANISMS = 24
_CHUNK_BITS = 18


class CosetTable:
    """Joint probability of (detector outcome, logical flip) pairs.

    Masses are unnormalized: they sum to 1 over all pairs. Logical flips
    are encoded so that the integer order equals lexicographic order on
    (e_1, ..., e_NL), making the argmax tiebreak a plain min().
    """

    def __init__(self, dem: DetectorErrorModel, mass: dict[tuple[int, int], float]):
        self.dem = dem
        self.mass = mass
        self._by_d: dict[int, dict[int, float]] = {}
        for (d_key, l_key), m in mass.items():
            self._by_d.setdefault(d_key, {})[l_key] = m

    def _d_key(self, d: np.ndarray) -> int:
        d = np.asarray(d, dtype=np.uint8)
        if d.shape != (self.dem.n_detectors,):
            raise ValueError(f"syndrome length {d.shape} != {self.dem.n_detectors} detectors")
        key = 0
        for i in np.nonzero(d)[0]:
            key |= 1 << int(i)
        return key

    def _l_bits(self, l_key: int) -> np.ndarray:
        n = self.dem.n_logicals
        return np.array([(l_key >> (n - 1 - i)) & 1 for i in range(n)], dtype=np.uint8)

    def posterior(self, d: np.ndarray) -> dict[tuple[int, ...], float]:
        """Normalized p(e_L | d); empty when no fault pattern explains d."""
        bucket = self._by_d.get(self._d_key(d))
        if not bucket:
            return {}
        total = sum(bucket.values())
        return {tuple(self._l_bits(k)): v / total for k, v in bucket.items()}

    def mld(self, d: np.ndarray) -> np.ndarray:
        """argmax_e_L p(e_L | d); ties go to the lexicographically smallest."""
        bucket = self._by_d.get(self._d_key(d))
        if not bucket:
            raise ValueError("syndrome has no consistent fault pattern")
        best = max(bucket.values())
        winners = [k for k, v in bucket.items() if v >= best * (1.0 - 1e-12)]
        return self._l_bits(min(winners))


def build_coset_table(dem: DetectorErrorModel, max_mechanisms: int = MAX_MECHANISMS) -> CosetTable:
    """Enumerate all fault patterns of a small model into a CosetTable."""
    n_e = dem.n_mechanisms
    if n_e > max_mechanisms:
        raise ValueError(
            f"refusing exhaustive enumeration over {n_e} mechanisms (cap {max_mechanisms})"
        )
    n_d, n_l = dem.n_detectors, dem.n_logicals
    # signature of mechanism k as an integer: detector bits low, logical bits high
    sig_words = []
    for mech in dem.mechanisms:
        s = 0
        for d in mech.detectors:
            s |= 1 << d
        for l in mech.logicals:
            s |= 1 << (n_d + (n_l - 1 - l))
        sig_words.append(s)
    probs = dem.priors()

    use_numpy = n_d + n_l <= 63
    base = min(n_e, _CHUNK_BITS)
    mass: dict[tuple[int, int], float] = {}
    l_mask = (1 << n_l) - 1

    if use_numpy:
        sigs = np.zeros(1, dtype=np.uint64)
        ps = np.ones(1, dtype=np.float64)
        for k in range(base):
            w = np.uint64(sig_words[k])
            sigs = np.concatenate([sigs, sigs ^ w])
            ps = np.concatenate([ps * (1.0 - probs[k]), ps * probs[k]])
        for outer in range(1 << (n_e - base)):
            o_sig, o_p = 0, 1.0
            for k in range(base, n_e):
                if (outer >> (k - base)) & 1:
                    o_sig ^= sig_words[k]
                    o_p *= probs[k]
                else:
                    o_p *= 1.0 - probs[k]
            if o_p == 0.0:
                continue
            combined = sigs ^ np.uint64(o_sig)
            weights = ps * o_p
            uniq, inv = np.unique(combined, return_inverse=True)
            sums = np.bincount(inv, weights=weights)
            for u, s in zip(uniq.tolist(), sums.tolist()):
                key = (u & ((1 << n_d) - 1), (u >> n_d) & l_mask)
                mass[key] = mass.get(key, 0.0) + s
    else:
        for e in range(1 << n_e):
            sig, p = 0, 1.0
            for k in range(n_e):
                if (e >> k) & 1:
                    sig ^= sig_words[k]
                    p *= probs[k]
                else:
                    p *= 1.0 - probs[k]
            key = (sig & ((1 << n_d) - 1), (sig >> n_d) & l_mask)
            mass[key] = mass.get(key, 0.0) + p
    return CosetTable(dem, mass)


def exact_posterior(dem: DetectorErrorModel, d: np.ndarray,
                    max_mechanisms: int = MAX_MECHANISMS) -> dict[tuple[int, ...], float]:
    """p(e_L | d) by exhaustive enumeration. See build_coset_table to amortize."""
    return build_coset_table(dem, max_mechanisms).posterior(d)


def exact_mld(dem: DetectorErrorModel, d: np.ndarray,
              max_mechanisms: int = MAX_MECHANISMS) -> np.ndarray:
    """Most likely logical flips for syndrome d."""
    return build_coset_table(dem, max_mechanisms).mld(d)
