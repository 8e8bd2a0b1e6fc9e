"""Belief propagation with ordered-statistics post-processing.

BP runs on the Tanner graph of a detector error model (mechanisms are
variable nodes, detectors are check nodes) in the log-likelihood domain
with syndrome-adjusted check messages. When BP fails to satisfy the
syndrome, OSD solves it exactly on the most-likely-error columns and
optionally sweeps the 2^w assignments of the next w columns.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import gf2
from .faultsim import DetectorErrorModel

_CLAMP = 30.0
OSD_ORDER_CAP = 15


@dataclass
class BpConfig:
    max_iterations: int = 30
    variant: str = "product-sum"  # or "min-sum"
    ms_scale: float = 0.75
    schedule: str = "parallel"  # or "serial"

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.variant not in ("product-sum", "min-sum"):
            raise ValueError(f"unknown BP variant {self.variant!r}")
        if not (0.0 < self.ms_scale <= 1.0):
            raise ValueError("min-sum scale factor must lie in (0, 1]")
        if self.schedule not in ("parallel", "serial"):
            raise ValueError(f"unknown schedule {self.schedule!r}")


@dataclass
class OsdConfig:
    order: int = 0

    def __post_init__(self):
        if not (0 <= self.order <= OSD_ORDER_CAP):
            raise ValueError(f"OSD order must lie in [0, {OSD_ORDER_CAP}]")


@dataclass
class BpResult:
    marginals: np.ndarray  # posterior error probability per mechanism
    hard: np.ndarray  # thresholded marginals
    converged: bool
    iterations: int


class _Graph:
    """Edge-list view of a model's Tanner graph, sorted by check."""

    def __init__(self, dem: DetectorErrorModel):
        self.n_chk = dem.n_detectors
        self.n_var = dem.n_mechanisms
        ev, ec = [], []
        for v, mech in enumerate(dem.mechanisms):
            for c in mech.detectors:
                ev.append(v)
                ec.append(c)
        order = np.lexsort((np.array(ev, dtype=np.int64), np.array(ec, dtype=np.int64)))
        self.edge_var = np.array(ev, dtype=np.int64)[order]
        self.edge_chk = np.array(ec, dtype=np.int64)[order]
        self.n_edges = len(self.edge_var)
        counts = np.bincount(self.edge_chk, minlength=self.n_chk)
        self.chk_start = np.concatenate([[0], np.cumsum(counts)])[:-1]
        self.chk_deg = counts
        self.has_edges = counts > 0  # restricted models carry dead detectors

    def check_sums(self, values: np.ndarray) -> np.ndarray:
        return np.bincount(self.edge_chk, weights=values, minlength=self.n_chk)

    def var_sums(self, values: np.ndarray) -> np.ndarray:
        return np.bincount(self.edge_var, weights=values, minlength=self.n_var)


def _syndrome_of(graph: _Graph, hard: np.ndarray) -> np.ndarray:
    counts = np.bincount(graph.edge_chk, weights=hard[graph.edge_var], minlength=graph.n_chk)
    return (counts.astype(np.int64) % 2).astype(np.uint8)


def bp_decode(dem: DetectorErrorModel, d: np.ndarray, cfg: BpConfig | None = None,
              graph: _Graph | None = None) -> BpResult:
    """Syndrome BP; returns posterior marginals, hard decision, convergence."""
    cfg = cfg or BpConfig()
    d = np.asarray(d, dtype=np.uint8)
    if d.shape != (dem.n_detectors,):
        raise ValueError(f"syndrome length {d.shape} != {dem.n_detectors} detectors")
    if graph is None:
        graph = _Graph(dem)
    priors = np.clip(dem.priors(), 1e-12, 1 - 1e-12)
    lam = np.log((1 - priors) / priors)
    syn_sign = np.where(d.astype(np.float64) > 0, -1.0, 1.0)

    msg_vc = lam[graph.edge_var].copy()
    msg_cv = np.zeros(graph.n_edges)
    tot = lam.copy()
    for it in range(1, cfg.max_iterations + 1):
        if cfg.schedule == "parallel":
            msg_cv = _check_update(graph, msg_vc, syn_sign, cfg)
            tot = lam + graph.var_sums(msg_cv)
            msg_vc = np.clip(tot[graph.edge_var] - msg_cv, -_CLAMP, _CLAMP)
        else:
            tot = _serial_sweep(graph, lam, msg_cv, tot, syn_sign, cfg)
        hard = (tot < 0).astype(np.uint8)
        if np.array_equal(_syndrome_of(graph, hard), d):
            marg = 1.0 / (1.0 + np.exp(np.clip(tot, -_CLAMP, _CLAMP)))
            return BpResult(marg, hard, True, it)
    hard = (tot < 0).astype(np.uint8)
    marg = 1.0 / (1.0 + np.exp(np.clip(tot, -_CLAMP, _CLAMP)))
    return BpResult(marg, hard, False, cfg.max_iterations)


def _check_update(graph: _Graph, msg_vc: np.ndarray, syn_sign: np.ndarray, cfg: BpConfig) -> np.ndarray:
    if cfg.variant == "min-sum":
        absm = np.abs(msg_vc)
        sign = np.where(msg_vc < 0, -1.0, 1.0)
        min1 = np.full(graph.n_chk, np.inf)
        np.minimum.at(min1, graph.edge_chk, absm)
        is_min = absm == min1[graph.edge_chk]
        cnt_min = np.bincount(graph.edge_chk[is_min], minlength=graph.n_chk)
        min2 = np.full(graph.n_chk, np.inf)
        np.minimum.at(min2, graph.edge_chk[~is_min], absm[~is_min])
        # an edge holding the unique minimum sees the second minimum instead
        use_min2 = is_min & (cnt_min[graph.edge_chk] == 1)
        excl_min = np.where(use_min2, min2[graph.edge_chk], min1[graph.edge_chk])
        excl_min = np.where(np.isinf(excl_min), 0.0, excl_min)  # degree-1 checks
        neg_count = graph.check_sums((sign < 0).astype(np.float64))
        neg_e = neg_count[graph.edge_chk] - (sign < 0)
        excl_sign = np.where(neg_e % 2 == 1, -1.0, 1.0)
        out = syn_sign[graph.edge_chk] * excl_sign * cfg.ms_scale * excl_min
        return np.clip(out, -_CLAMP, _CLAMP)

    t = np.tanh(msg_vc / 2.0)
    abs_t = np.abs(t)
    sign = np.where(t < 0, -1.0, 1.0)
    nz = abs_t > 0
    logs = np.where(nz, np.log(np.where(nz, abs_t, 1.0)), 0.0)
    log_sum = graph.check_sums(np.where(nz, logs, 0.0))
    zero_count = graph.check_sums((~nz).astype(np.float64))
    neg_count = graph.check_sums((t < 0).astype(np.float64))
    zc_e = zero_count[graph.edge_chk]
    # exclusion product of tanh terms: zero unless all other edges are nonzero
    excl_log = log_sum[graph.edge_chk] - np.where(nz, logs, 0.0)
    excl_mag = np.exp(excl_log)
    excl_mag = np.where((zc_e == 0) | ((zc_e == 1) & ~nz), excl_mag, 0.0)
    neg_e = neg_count[graph.edge_chk] - (t < 0)
    excl_sign = np.where(neg_e % 2 == 1, -1.0, 1.0)
    prod = np.clip(excl_sign * excl_mag, -1 + 1e-15, 1 - 1e-15)
    out = syn_sign[graph.edge_chk] * 2.0 * np.arctanh(prod)
    return np.clip(out, -_CLAMP, _CLAMP)


def _serial_sweep(graph: _Graph, lam, msg_cv, tot, syn_sign, cfg: BpConfig):
    """One serial pass: checks update in index order with immediate effect."""
    for c in range(graph.n_chk):
        if not graph.has_edges[c]:
            continue
        s = graph.chk_start[c]
        e = s + graph.chk_deg[c]
        idx = np.arange(s, e)
        vs = graph.edge_var[idx]
        m_vc = np.clip(tot[vs] - msg_cv[idx], -_CLAMP, _CLAMP)
        if cfg.variant == "min-sum":
            absm = np.abs(m_vc)
            sign = np.where(m_vc < 0, -1.0, 1.0)
            total_sign = np.prod(sign)
            new = np.empty_like(m_vc)
            for j in range(len(idx)):
                others = np.delete(absm, j)
                new[j] = cfg.ms_scale * total_sign * sign[j] * (others.min() if len(others) else 0.0)
        else:
            t = np.tanh(m_vc / 2.0)
            new = np.empty_like(m_vc)
            for j in range(len(idx)):
                others = np.delete(t, j)
                prod = float(np.prod(others)) if len(others) else 1.0
                prod = min(max(prod, -1 + 1e-15), 1 - 1e-15)
                new[j] = 2.0 * math.atanh(prod)
        new = np.clip(syn_sign[c] * new, -_CLAMP, _CLAMP)
        tot[vs] += new - msg_cv[idx]
        msg_cv[idx] = new
    return tot


# -- ordered statistics --------------------------------------------------------


def reliability_order(marginals: np.ndarray, priors: np.ndarray) -> np.ndarray:
    """Column order for OSD: most-likely-in-error first, stable index tiebreak.

    Falls back to priors wherever BP produced non-finite marginals.
    """
    q = np.asarray(marginals, dtype=np.float64).copy()
    bad = ~np.isfinite(q)
    if bad.any():
        q[bad] = priors[bad]
    q = np.clip(q, 1e-12, 1 - 1e-12)
    llr = np.log((1 - q) / q)
    return np.argsort(llr, kind="stable")


class OsdContext:
    """Per-model precomputation shared across OSD calls."""

    def __init__(self, dem: DetectorErrorModel):
        self.dem = dem
        self.cols = []
        for mech in dem.mechanisms:
            w = 0
            for c in mech.detectors:
                w |= 1 << c
            self.cols.append(w)
        # rank of D: greedy elimination over all columns once
        basis: dict[int, int] = {}
        for w in self.cols:
            r = w
            while r:
                lead = r.bit_length() - 1
                if lead in basis:
                    r ^= basis[lead]
                else:
                    basis[lead] = r
                    break
        self.rank = len(basis)


def osd_decode(dem: DetectorErrorModel, d: np.ndarray, marginals: np.ndarray,
               cfg: OsdConfig | None = None, ctx: OsdContext | None = None) -> np.ndarray:
    """Ordered-statistics solve of D e = d; always syndrome-consistent.

    Order 0 solves on the rank-many most-reliable pivot columns with all
    other mechanisms zero; order w additionally sweeps every assignment of
    the w most-reliable non-pivot columns and keeps the candidate with the
    smallest soft weight. Raises when d is outside the column space.
    """
    cfg = cfg or OsdConfig()
    ctx = ctx or OsdContext(dem)
    d = np.asarray(d, dtype=np.uint8)
    if d.shape != (dem.n_detectors,):
        raise ValueError(f"syndrome length {d.shape} != {dem.n_detectors} detectors")
    n_e = dem.n_mechanisms
    priors = np.clip(dem.priors(), 1e-12, 1 - 1e-12)
    q = np.clip(np.asarray(marginals, dtype=np.float64), 1e-12, 1 - 1e-12)
    llr = np.log((1 - q) / q)

    # short-circuit: thresholded marginals may already explain the syndrome
    hard = (q > 0.5).astype(np.uint8)
    if np.array_equal(_apply(dem, hard), d):
        return hard

    order = reliability_order(marginals, priors)
    cols = ctx.cols

    # greedy pivot selection over reliability-ordered columns; selection is
    # complete once the column-space rank is reached and the sweep is filled
    basis: dict[int, int] = {}
    pivots: list[int] = []
    non_pivots: list[int] = []
    for v in order:
        if len(pivots) == ctx.rank and len(non_pivots) >= cfg.order:
            break
        r = cols[v]
        while r:
            lead = r.bit_length() - 1
            if lead in basis:
                r ^= basis[lead]
            else:
                break
        if r:
            basis[r.bit_length() - 1] = r
            pivots.append(int(v))
        else:
            non_pivots.append(int(v))

    # one elimination of [P | I] yields a solution map and consistency rows
    n_d = dem.n_detectors
    n_p = len(pivots)
    aug = gf2.BitMatrix(n_d, n_p + n_d)
    for j, v in enumerate(pivots):
        for c in dem.mechanisms[v].detectors:
            aug.set(c, j, 1)
    for i in range(n_d):
        aug.set(i, n_p + i, 1)
    ech, piv_cols = gf2.row_echelon(aug)
    full = gf2.BitMatrix(n_d, n_p + n_d, ech)
    sol_rows = []  # (pivot column in P, row index)
    chk_rows = []  # rows whose pivot lies in the identity part
    for r, c in enumerate(piv_cols):
        if c < n_p:
            sol_rows.append((c, r))
        else:
            chk_rows.append(r)
    right = full.to_dense()[:, n_p:] if n_d else np.zeros((0, n_d), dtype=np.uint8)
    sol_map = gf2.BitMatrix.from_dense(right[[r for _, r in sol_rows]]) \
        if sol_rows else gf2.BitMatrix(0, n_d)
    chk_map = gf2.BitMatrix.from_dense(right[chk_rows]) if chk_rows else gf2.BitMatrix(0, n_d)
    sol_cols = [c for c, _ in sol_rows]

    sweep = non_pivots[: cfg.order]
    best = None
    best_weight = math.inf
    for assign in range(1 << len(sweep)):
        rhs = d.copy()
        for j, v in enumerate(sweep):
            if (assign >> j) & 1:
                for c in dem.mechanisms[v].detectors:
                    rhs[c] ^= 1
        if chk_map.rows and chk_map.matvec(rhs).any():
            continue
        x = np.zeros(n_p, dtype=np.uint8)
        if sol_map.rows:
            x[sol_cols] = sol_map.matvec(rhs)
        e_hat = np.zeros(n_e, dtype=np.uint8)
        for j, v in enumerate(pivots):
            e_hat[v] = x[j]
        for j, v in enumerate(sweep):
            if (assign >> j) & 1:
                e_hat[v] = 1
        weight = float(llr[e_hat.astype(bool)].sum())
        if weight < best_weight - 1e-12:
            best_weight = weight
            best = e_hat
    if best is None:
        raise ValueError("syndrome is inconsistent: no fault pattern explains it")
    return best


def _apply(dem: DetectorErrorModel, e_hat: np.ndarray) -> np.ndarray:
    out = np.zeros(dem.n_detectors, dtype=np.uint8)
    for v in np.nonzero(e_hat)[0]:
        for c in dem.mechanisms[v].detectors:
            out[c] ^= 1
    return out


def predict_logical_flips(dem: DetectorErrorModel, e_hat: np.ndarray) -> np.ndarray:
    """L @ e over GF(2) for a mechanism indicator vector."""
    e_hat = np.asarray(e_hat, dtype=np.uint8)
    if e_hat.shape != (dem.n_mechanisms,):
        raise ValueError(f"length {e_hat.shape} != {dem.n_mechanisms} mechanisms")
    out = np.zeros(dem.n_logicals, dtype=np.uint8)
    for v in np.nonzero(e_hat)[0]:
        for j in dem.mechanisms[v].logicals:
            out[j] ^= 1
    return out


class BpOsdDecoder:
    """One-stop decoder: BP, then OSD when BP does not converge.

    Precomputes the Tanner graph and OSD context once per model; instances
    are stateless between decode calls.
    """

    def __init__(self, dem: DetectorErrorModel, bp: BpConfig | None = None,
                 osd: OsdConfig | None = None):
        self.dem = dem
        self.bp = bp or BpConfig()
        self.osd = osd or OsdConfig()
        self._ctx = OsdContext(dem)
        self._graph = _Graph(dem)

    def decode(self, d: np.ndarray) -> tuple[np.ndarray, bool]:
        """Returns (predicted logical flips, bp_converged)."""
        e_hat, converged = self.decode_error(d)
        return predict_logical_flips(self.dem, e_hat), converged

    def decode_error(self, d: np.ndarray) -> tuple[np.ndarray, bool]:
        """Returns (mechanism indicator vector, bp_converged)."""
        res = bp_decode(self.dem, d, self.bp, self._graph)
        if res.converged:
            return res.hard, True
        return osd_decode(self.dem, d, res.marginals, self.osd, self._ctx), False
