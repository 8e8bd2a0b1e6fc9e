"""Detector error models and shot sampling.

Every fault site is propagated once through the circuit to get its
(detector set, logical set) signature; sites with identical signatures are
merged with p = p1(1-p2) + p2(1-p1). Sampling then works at the mechanism
level, which is exactly equivalent for independent Pauli noise and much
faster than re-walking the circuit (see verify_dem_equivalence for the
audit). Shot generation is counter-based (Philox) and sharded so results
do not depend on how many workers consume the ranges.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .circuits import FramePropagator, NoisyCircuit, simulate_frame

_SHARD = 8192


@dataclass(frozen=True)
class Mechanism:
    prob: float
    detectors: tuple[int, ...]
    logicals: tuple[int, ...]


@dataclass
class DetectorErrorModel:
    n_detectors: int
    n_logicals: int
    mechanisms: list[Mechanism]
    layer_of: np.ndarray  # per detector
    slot_of: np.ndarray | None = None
    kind_of: list[str] | None = None  # "X"/"Z" per detector
    layer_width: int | None = None
    n_layers: int | None = None
    parent_indices: np.ndarray | None = None  # set on restricted models

    @property
    def n_mechanisms(self) -> int:
        return len(self.mechanisms)

    def dense_matrices(self) -> tuple[np.ndarray, np.ndarray]:
        """Detector and logical incidence matrices (N_D x N_E, N_L x N_E)."""
        d = np.zeros((self.n_detectors, self.n_mechanisms), dtype=np.uint8)
        l = np.zeros((self.n_logicals, self.n_mechanisms), dtype=np.uint8)
        for k, mech in enumerate(self.mechanisms):
            d[list(mech.detectors), k] = 1
            l[list(mech.logicals), k] = 1
        return d, l

    def priors(self) -> np.ndarray:
        return np.array([m.prob for m in self.mechanisms], dtype=np.float64)

    def layer_slots(self) -> list[list[int]]:
        """Per layer, the detector index in each slot (-1 = padding)."""
        if self.slot_of is None or self.layer_width is None:
            raise ValueError("model carries no slot layout (restricted or loaded from text)")
        layout = [[-1] * self.layer_width for _ in range(self.n_layers)]
        for i in range(self.n_detectors):
            layout[int(self.layer_of[i])][int(self.slot_of[i])] = i
        return layout


@dataclass
class SiteRecord:
    """Signature of one fault site; kept alongside the merged model."""

    detectors: tuple[int, ...]
    logicals: tuple[int, ...]
    prob: float
    noisy_round: int


@dataclass
class Shots:
    """Sampled shots as dense bit arrays (one row per shot)."""

    detectors: np.ndarray  # (n, N_D) uint8
    logicals: np.ndarray  # (n, N_L) uint8

    def __len__(self) -> int:
        return self.detectors.shape[0]


def merge_probability(p1: float, p2: float) -> float:
    """Probability that exactly one of two independent mechanisms fires."""
    return p1 * (1.0 - p2) + p2 * (1.0 - p1)


def build_site_table(nc: NoisyCircuit) -> list[SiteRecord]:
    prop = FramePropagator(nc.circuit)
    table = []
    for site in nc.fault_sites:
        det, log = prop.propagate(site.instr_index, site.pauli, site.meas_flip)
        table.append(SiteRecord(det, log, site.prob, site.noisy_round))
    return table


def propagate_single_fault(nc: NoisyCircuit, site_index: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Detector and logical flips caused by fault site site_index alone."""
    if not 0 <= site_index < len(nc.fault_sites):
        raise IndexError(f"fault site {site_index} out of range (have {len(nc.fault_sites)})")
    site = nc.fault_sites[site_index]
    prop = FramePropagator(nc.circuit)
    return prop.propagate(site.instr_index, site.pauli, site.meas_flip)


def build_dem(nc: NoisyCircuit, site_table: list[SiteRecord] | None = None) -> DetectorErrorModel:
    """Merge fault sites into a detector error model.

    Mechanisms with identical (detector set, logical set) signatures are
    combined; signatures that flip nothing are dropped, as are zero-
    probability sites (so a p=0 circuit gives an empty model).
    """
    circ = nc.circuit
    if site_table is None:
        site_table = build_site_table(nc)
    merged: dict[tuple[tuple[int, ...], tuple[int, ...]], float] = {}
    for rec in site_table:
        if not rec.detectors and not rec.logicals:
            continue
        key = (rec.detectors, rec.logicals)
        merged[key] = merge_probability(merged.get(key, 0.0), rec.prob)
    mechanisms = [
        Mechanism(p, det, log) for (det, log), p in merged.items() if 0.0 < p < 1.0
    ]
    layer_of = np.array([d.layer for d in circ.detectors], dtype=np.int64)
    slot_of = np.array([d.slot for d in circ.detectors], dtype=np.int64)
    kinds = [d.kind for d in circ.detectors]
    return DetectorErrorModel(
        n_detectors=len(circ.detectors),
        n_logicals=len(circ.logical_measurements),
        mechanisms=mechanisms,
        layer_of=layer_of,
        slot_of=slot_of,
        kind_of=kinds,
        layer_width=circ.layer_width,
        n_layers=circ.n_layers,
    )


def restrict_dem(dem: DetectorErrorModel, keep) -> DetectorErrorModel:
    """Drop detectors failing the predicate and re-merge mechanisms.

    keep(index, kind, layer) -> bool; kind is None when the model carries
    no kind metadata. Kept detectors are renumbered compactly and the
    mapping back to the parent indices recorded. Logical sets untouched.
    """
    kinds = dem.kind_of or [None] * dem.n_detectors
    kept = [i for i in range(dem.n_detectors) if keep(i, kinds[i], int(dem.layer_of[i]))]
    remap = {old: new for new, old in enumerate(kept)}
    merged: dict[tuple[tuple[int, ...], tuple[int, ...]], float] = {}
    for mech in dem.mechanisms:
        det = tuple(remap[d] for d in mech.detectors if d in remap)
        key = (det, mech.logicals)
        if not det and not mech.logicals:
            continue
        merged[key] = merge_probability(merged.get(key, 0.0), mech.prob)
    mechanisms = [Mechanism(p, det, log) for (det, log), p in merged.items() if 0.0 < p < 1.0]
    return DetectorErrorModel(
        n_detectors=len(kept),
        n_logicals=dem.n_logicals,
        mechanisms=mechanisms,
        layer_of=dem.layer_of[kept],
        slot_of=dem.slot_of[kept] if dem.slot_of is not None else None,
        kind_of=[kinds[i] for i in kept] if dem.kind_of else None,
        layer_width=dem.layer_width,
        n_layers=dem.n_layers,
        parent_indices=np.array(kept, dtype=np.int64),
    )


def x_only(dem: DetectorErrorModel) -> DetectorErrorModel:
    """Restriction to X-check detectors (the BP-OSD decoding convention)."""
    if dem.kind_of is None:
        raise ValueError("model carries no check-type metadata")
    return restrict_dem(dem, lambda i, kind, layer: kind == "X")


def restrict_shot_detectors(dem_restricted: DetectorErrorModel, detectors: np.ndarray) -> np.ndarray:
    """Project full-width detector bits onto a restricted model's detectors."""
    if dem_restricted.parent_indices is None:
        return detectors
    return detectors[..., dem_restricted.parent_indices]


# -- sampling ----------------------------------------------------------------


def _shard_rng(seed: int, shard: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=np.uint64(seed) + (np.uint64(shard) << np.uint64(20))))


def _fire_table(rng: np.random.Generator, probs: np.ndarray, n: int) -> list[np.ndarray]:
    """Per mechanism, the shot indices (within the shard) where it fires.

    Drawing Binomial(n, p) then a uniform subset of that size is exactly
    iid Bernoulli(p) across the n shots.
    """
    fired = []
    for p in probs:
        k = rng.binomial(n, p)
        fired.append(rng.choice(n, size=k, replace=False) if k else np.empty(0, dtype=np.int64))
    return fired


def sample_shots(dem: DetectorErrorModel, n: int, seed: int) -> Shots:
    """Mechanism-level Bernoulli sampling of n shots."""
    if n < 1:
        raise ValueError("need at least one shot")
    det = np.zeros((n, dem.n_detectors), dtype=np.uint8)
    log = np.zeros((n, dem.n_logicals), dtype=np.uint8)
    probs = dem.priors()
    for shard_start in range(0, n, _SHARD):
        shard_n = min(_SHARD, n - shard_start)
        rng = _shard_rng(seed, shard_start // _SHARD)
        fired = _fire_table(rng, probs, shard_n)
        for mech, idx in zip(dem.mechanisms, fired):
            if len(idx) == 0:
                continue
            rows = idx + shard_start
            for d in mech.detectors:
                det[rows, d] ^= 1
            for j in mech.logicals:
                log[rows, j] ^= 1
    return Shots(det, log)


@dataclass
class TrainingBatch:
    """Layered detector inputs and per-iteration flip targets.

    layers: (n, n_layers, layer_width) with padded slots always 0.
    targets: (n, n_layers, N_L); row t holds the intermediate logical flips
    after noisy round min(t, N_R), so the final row is the shot's e_L.
    """

    layers: np.ndarray
    targets: np.ndarray

    def __len__(self) -> int:
        return self.layers.shape[0]


def sample_training_batch(dem: DetectorErrorModel, site_table: list[SiteRecord],
                          n: int, seed: int, n_rounds_noisy: int) -> TrainingBatch:
    """Site-level sampling carrying intermediate logical flip targets."""
    n_layers, width = dem.n_layers, dem.layer_width
    layout = dem.layer_slots()
    n_l = dem.n_logicals
    layers = np.zeros((n, n_layers, width), dtype=np.uint8)
    # per-round logical contributions, then a cumulative XOR over rounds
    round_log = np.zeros((n, n_rounds_noisy + 1, n_l), dtype=np.uint8)
    det = np.zeros((n, dem.n_detectors), dtype=np.uint8)
    probs = np.array([s.prob for s in site_table])
    for shard_start in range(0, n, _SHARD):
        shard_n = min(_SHARD, n - shard_start)
        rng = _shard_rng(seed, shard_start // _SHARD)
        fired = _fire_table(rng, probs, shard_n)
        for rec, idx in zip(site_table, fired):
            if len(idx) == 0:
                continue
            rows = idx + shard_start
            for d in rec.detectors:
                det[rows, d] ^= 1
            for j in rec.logicals:
                round_log[rows, rec.noisy_round, j] ^= 1
    for t in range(n_layers):
        for s, d in enumerate(layout[t]):
            if d >= 0:
                layers[:, t, s] = det[:, d]
    cum = np.bitwise_xor.accumulate(round_log, axis=1)  # cum[:, j] = e^(j)
    targets = np.zeros((n, n_layers, n_l), dtype=np.uint8)
    for t in range(n_layers):
        targets[:, t] = cum[:, min(t, n_rounds_noisy)]
    return TrainingBatch(layers, targets)


def layers_from_shots(dem: DetectorErrorModel, detectors: np.ndarray) -> np.ndarray:
    """(n, N_D) detector bits -> (n, n_layers, layer_width) with padding zeros."""
    layout = dem.layer_slots()
    n = detectors.shape[0]
    out = np.zeros((n, dem.n_layers, dem.layer_width), dtype=np.uint8)
    for t, slots in enumerate(layout):
        for s, d in enumerate(slots):
            if d >= 0:
                out[:, t, s] = detectors[:, d]
    return out


def intermediate_flips(fault_vector: np.ndarray, j: int, site_table: list[SiteRecord],
                       n_logicals: int) -> np.ndarray:
    """L @ Pi_j @ e: logical flips from fired sites in noisy rounds <= j."""
    e = np.asarray(fault_vector, dtype=np.uint8)
    if e.shape != (len(site_table),):
        raise ValueError("fault vector length does not match the site table")
    out = np.zeros(n_logicals, dtype=np.uint8)
    for fired, rec in zip(e, site_table):
        if fired and rec.noisy_round <= j:
            for l in rec.logicals:
                out[l] ^= 1
    return out


def verify_dem_equivalence(nc: NoisyCircuit, site_table: list[SiteRecord],
                           n: int, seed: int) -> bool:
    """Audit: circuit-level frame simulation vs signature XOR, same draws."""
    circ = nc.circuit
    rng = _shard_rng(seed, 0)
    probs = np.array([s.prob for s in site_table])
    for _ in range(n):
        fires = rng.random(len(probs)) < probs
        chosen = [nc.fault_sites[i] for i in np.nonzero(fires)[0]]
        det_sim, log_sim = simulate_frame(circ, chosen)
        det_sig = np.zeros(len(circ.detectors), dtype=np.uint8)
        log_sig = np.zeros(len(circ.logical_measurements), dtype=np.uint8)
        for i in np.nonzero(fires)[0]:
            rec = site_table[i]
            for d in rec.detectors:
                det_sig[d] ^= 1
            for l in rec.logicals:
                log_sig[l] ^= 1
        if not (np.array_equal(det_sim, det_sig) and np.array_equal(log_sim, log_sig)):
            return False
    return True


# -- text formats --------------------------------------------------------------


def dem_dumps(dem: DetectorErrorModel) -> str:
    lines = [f"detectors {dem.n_detectors}", f"logicals {dem.n_logicals}"]
    for i in range(dem.n_detectors):
        lines.append(f"layer D{i} {int(dem.layer_of[i])}")
    for mech in dem.mechanisms:
        parts = [f"error({mech.prob!r})"]
        parts += [f"D{d}" for d in mech.detectors]
        parts += [f"L{j}" for j in mech.logicals]
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


def dem_loads(text: str) -> DetectorErrorModel:
    n_det = n_log = 0
    layer_map: dict[int, int] = {}
    mechanisms: list[Mechanism] = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("detectors "):
            n_det = int(line.split()[1])
        elif line.startswith("logicals "):
            n_log = int(line.split()[1])
        elif line.startswith("layer "):
            _, d, lay = line.split()
            layer_map[int(d[1:])] = int(lay)
        elif line.startswith("error("):
            head, *rest = line.split()
            p = float(head[len("error(") : -1])
            dets = tuple(int(t[1:]) for t in rest if t.startswith("D"))
            logs = tuple(int(t[1:]) for t in rest if t.startswith("L"))
            mechanisms.append(Mechanism(p, dets, logs))
        else:
            raise ValueError(f"unrecognized DEM line: {line!r}")
    layer_of = np.array([layer_map.get(i, 0) for i in range(n_det)], dtype=np.int64)
    return DetectorErrorModel(n_det, n_log, mechanisms, layer_of)


def shots_dumps(shots: Shots) -> str:
    lines = []
    for i in range(len(shots)):
        d = "".join(str(int(b)) for b in shots.detectors[i])
        l = "".join(str(int(b)) for b in shots.logicals[i])
        lines.append(f"{d} | {l}")
    return "\n".join(lines) + "\n"


def shots_loads(text: str) -> Shots:
    det_rows, log_rows = [], []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        d, l = line.split("|")
        det_rows.append([int(c) for c in d.strip()])
        log_rows.append([int(c) for c in l.strip()])
    return Shots(np.array(det_rows, dtype=np.uint8), np.array(log_rows, dtype=np.uint8))
