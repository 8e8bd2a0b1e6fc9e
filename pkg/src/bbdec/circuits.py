"""Memory-experiment circuits: syndrome extraction rounds plus logical readout.

The experiment is: noiseless |+>^n preparation, one noiseless syndrome
round, N_R noisy rounds, one more noiseless round, then noiseless X-basis
readout of all data qubits. X checks use |+> ancillas with CNOTs from
ancilla to data; Z checks use |0> ancillas with CNOTs from data to ancilla.

Detector layering convention (uniform width for the recurrent decoder):
  layer 0            round-0 X-check outcomes (deterministic from |+>^n)
  layers 1..N_R+1    XOR of consecutive rounds, X and Z checks
  layer N_R+2        round-(N_R+1) X checks vs. values reconstructed from
                     the final data readout
Layers missing a check type are padded to width n_x + n_z; X slots come
first within a layer.
"""

from __future__ import annotations

import bisect
import heapq
from dataclasses import dataclass

import numpy as np

from .codes import CssCode

KINDS = ("init_z", "init_x", "cnot", "measure_z", "measure_x", "idle")


@dataclass(frozen=True)
class Instruction:
    kind: str
    targets: tuple[int, ...]
    time_step: int
    result_index: int = -1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown instruction kind {self.kind!r}")
        if self.kind == "cnot" and (len(self.targets) != 2 or self.targets[0] == self.targets[1]):
            raise ValueError(f"cnot needs 2 distinct targets, got {self.targets}")
        if self.kind.startswith("measure") and self.result_index < 0:
            raise ValueError("measurement without a result index")


@dataclass(frozen=True)
class DetectorDef:
    """A parity of measurement outcomes that is deterministic without noise."""

    meas: tuple[int, ...]
    layer: int
    slot: int
    kind: str  # "X" or "Z"


@dataclass
class CnotSchedule:
    """Explicit CNOT layering: layers[t] lists (check_type, check_index, data_qubit).

    Every (check, data) incidence of the code must appear exactly once and
    no qubit may be used twice within a layer.
    """

    layers: list[list[tuple[str, int, int]]]

    def validate(self, code: CssCode) -> None:
        want = set()
        for c in range(code.hx.rows):
            for q in np.nonzero(code.hx.row(c))[0]:
                want.add(("X", c, int(q)))
        for c in range(code.hz.rows):
            for q in np.nonzero(code.hz.row(c))[0]:
                want.add(("Z", c, int(q)))
        seen = set()
        for t, layer in enumerate(self.layers):
            busy = set()
            for kind, c, q in layer:
                anc = ("anc", kind, c)
                if q in busy or anc in busy:
                    raise ValueError(f"schedule conflict at time step {t}: qubit reuse on {(kind, c, q)}")
                busy.add(q)
                busy.add(anc)
                if (kind, c, q) in seen:
                    raise ValueError(f"duplicate CNOT for {(kind, c, q)} at time step {t}")
                seen.add((kind, c, q))
        if seen != want:
            missing = want - seen
            extra = seen - want
            raise ValueError(f"schedule does not match code incidences (missing {len(missing)}, extra {len(extra)})")


def default_schedule(code: CssCode) -> CnotSchedule:
    """Ascending per-check orders packed greedily into conflict-free layers."""
    orders = [("X", c, [int(q) for q in np.nonzero(code.hx.row(c))[0]]) for c in range(code.hx.rows)]
    orders += [("Z", c, [int(q) for q in np.nonzero(code.hz.row(c))[0]]) for c in range(code.hz.rows)]
    return pack_schedule(orders)


def pack_schedule(orders: list[tuple[str, int, list[int]]]) -> CnotSchedule:
    """Greedy packing that preserves each check's own CNOT order."""
    ptr = [0] * len(orders)
    layers: list[list[tuple[str, int, int]]] = []
    while any(ptr[i] < len(orders[i][2]) for i in range(len(orders))):
        busy: set[int] = set()
        layer: list[tuple[str, int, int]] = []
        for i, (kind, c, qs) in enumerate(orders):
            if ptr[i] >= len(qs):
                continue
            q = qs[ptr[i]]
            if q in busy:
                continue
            busy.add(q)
            layer.append((kind, c, q))
            ptr[i] += 1
        layers.append(layer)
    return CnotSchedule(layers)


def interleaved_bb_schedule(code: CssCode, x_term_order=None, z_term_order=None) -> CnotSchedule:
    """Six conflict-free CNOT layers exploiting the block-permutation structure.

    Each A/B term of a bivariate bicycle code is a permutation matrix, so a
    layer can host all X checks acting on one data block and all Z checks
    acting on the other with every qubit busy (no idle locations during the
    CNOT sequence, unlike the generic greedy packing). Term orders map layer
    t to ("A"|"B", term index); X checks must visit A terms where Z checks
    visit B terms and vice versa.
    """
    bb = code.bb_params
    if bb is None:
        raise ValueError("code carries no bivariate bicycle construction data")
    half = bb.l * bb.m
    # X checks touch the left block through A terms and the right through B;
    # Z checks touch the right block through A^T and the left through B^T,
    # so layers sharing the A/B label keep the two check types on disjoint blocks.
    if x_term_order is None:
        x_term_order = [("A", 0), ("A", 1), ("A", 2), ("B", 0), ("B", 1), ("B", 2)]
    if z_term_order is None:
        z_term_order = [("A", 1), ("A", 2), ("A", 0), ("B", 1), ("B", 2), ("B", 0)]
    if len(x_term_order) != len(z_term_order):
        raise ValueError("term orders must have equal length")
    for xt, zt in zip(x_term_order, z_term_order):
        if xt[0] != zt[0]:
            raise ValueError(f"layer pairs X on {xt[0]} with Z on {zt[0]}: blocks collide")

    def perm(mono):
        # sigma[c] = data column hit by check row c for this term
        a, b = mono.x_exp % bb.l, mono.y_exp % bb.m
        return np.array(
            [((i + a) % bb.l) * bb.m + ((j + b) % bb.m) for i in range(bb.l) for j in range(bb.m)],
            dtype=np.int64,
        )

    a_perm = [perm(t) for t in bb.a_terms]
    b_perm = [perm(t) for t in bb.b_terms]
    inv = lambda s: np.argsort(s)

    layers = []
    for xt, zt in zip(x_term_order, z_term_order):
        layer = []
        for c in range(half):
            if xt[0] == "A":  # X check hits the left block via A
                layer.append(("X", c, int(a_perm[xt[1]][c])))
            else:  # right block via B
                layer.append(("X", c, half + int(b_perm[xt[1]][c])))
        for c in range(half):
            if zt[0] == "B":  # Z check hits the left block via B^T
                layer.append(("Z", c, int(inv(b_perm[zt[1]])[c])))
            else:  # right block via A^T
                layer.append(("Z", c, half + int(inv(a_perm[zt[1]])[c])))
        layers.append(layer)
    return CnotSchedule(layers)


def schedule_for(code: CssCode, name: str = "auto") -> CnotSchedule:
    """Schedule presets: "greedy", "interleaved", or "auto" (interleaved for
    bivariate bicycle codes, greedy otherwise)."""
    if name == "greedy":
        return default_schedule(code)
    if name == "interleaved":
        return interleaved_bb_schedule(code)
    if name == "auto":
        return interleaved_bb_schedule(code) if code.bb_params else default_schedule(code)
    raise ValueError(f"unknown schedule preset {name!r}")


@dataclass
class MemoryCircuit:
    instructions: list[Instruction]
    n_data: int
    n_x: int
    n_z: int
    n_rounds_noisy: int
    detectors: list[DetectorDef]
    logical_measurements: list[tuple[int, ...]]
    n_measurements: int
    noisy_step_range: tuple[int, int]  # inclusive; (1, 0) when N_R = 0

    @property
    def n_ancilla(self) -> int:
        return self.n_x + self.n_z

    @property
    def rounds(self) -> int:
        return self.n_rounds_noisy + 2

    @property
    def layer_width(self) -> int:
        return self.n_x + self.n_z

    @property
    def n_layers(self) -> int:
        return self.n_rounds_noisy + 3

    @property
    def n_detectors(self) -> int:
        return len(self.detectors)

    def detector_layout(self) -> list[list[int]]:
        """Per layer, the global detector index in each slot (-1 = padding)."""
        layout = [[-1] * self.layer_width for _ in range(self.n_layers)]
        for i, det in enumerate(self.detectors):
            layout[det.layer][det.slot] = i
        return layout


def build_memory_circuit(code: CssCode, n_rounds_noisy: int,
                         schedule: CnotSchedule | None = None) -> MemoryCircuit:
    if n_rounds_noisy < 0:
        raise ValueError("number of noisy rounds must be nonnegative")
    if schedule is None:
        schedule = default_schedule(code)
    schedule.validate(code)

    n = code.n
    n_x, n_z = code.hx.rows, code.hz.rows
    x_anc = lambda c: n + c
    z_anc = lambda c: n + n_x + c
    n_qubits = n + n_x + n_z

    instructions: list[Instruction] = []
    n_meas = 0

    def emit(kind, targets, step):
        nonlocal n_meas
        res = -1
        if kind.startswith("measure"):
            res = n_meas
            n_meas += 1
        instructions.append(Instruction(kind, tuple(targets), step, res))

    def emit_idles(busy, step):
        for q in range(n_qubits):
            if q not in busy:
                emit("idle", (q,), step)

    # noiseless preparation of |+>^n (no idles outside rounds)
    for q in range(n):
        emit("init_x", (q,), 0)

    step = 1
    round_meas_base: list[int] = []
    rounds = n_rounds_noisy + 2
    noisy_lo = noisy_hi = None
    for r in range(rounds):
        if r == 1 and n_rounds_noisy > 0:
            noisy_lo = step
        # ancilla initialization
        busy = set()
        for c in range(n_x):
            emit("init_x", (x_anc(c),), step)
            busy.add(x_anc(c))
        for c in range(n_z):
            emit("init_z", (z_anc(c),), step)
            busy.add(z_anc(c))
        emit_idles(busy, step)
        step += 1
        # CNOT layers; X checks drive ancilla -> data, Z checks data -> ancilla
        for layer in schedule.layers:
            busy = set()
            for kind, c, q in layer:
                if kind == "X":
                    emit("cnot", (x_anc(c), q), step)
                    busy.update((x_anc(c), q))
                else:
                    emit("cnot", (q, z_anc(c)), step)
                    busy.update((z_anc(c), q))
            emit_idles(busy, step)
            step += 1
        # ancilla readout
        round_meas_base.append(n_meas)
        busy = set()
        for c in range(n_x):
            emit("measure_x", (x_anc(c),), step)
            busy.add(x_anc(c))
        for c in range(n_z):
            emit("measure_z", (z_anc(c),), step)
            busy.add(z_anc(c))
        emit_idles(busy, step)
        step += 1
        if r == n_rounds_noisy and n_rounds_noisy > 0:
            noisy_hi = step - 1

    # noiseless transversal X readout of the data qubits
    data_meas_base = n_meas
    for q in range(n):
        emit("measure_x", (q,), step)

    def m_x(c, r):
        return round_meas_base[r] + c

    def m_z(c, r):
        return round_meas_base[r] + n_x + c

    detectors: list[DetectorDef] = []
    for c in range(n_x):
        detectors.append(DetectorDef((m_x(c, 0),), 0, c, "X"))
    for t in range(1, rounds):
        for c in range(n_x):
            detectors.append(DetectorDef((m_x(c, t - 1), m_x(c, t)), t, c, "X"))
        for c in range(n_z):
            detectors.append(DetectorDef((m_z(c, t - 1), m_z(c, t)), t, n_x + c, "Z"))
    final_layer = rounds
    for c in range(n_x):
        support = tuple(data_meas_base + int(q) for q in np.nonzero(code.hx.row(c))[0])
        detectors.append(DetectorDef((m_x(c, rounds - 1),) + support, final_layer, c, "X"))

    logicals = [
        tuple(data_meas_base + q for q in sup) for sup in code.logical_x
    ]

    return MemoryCircuit(
        instructions=instructions,
        n_data=n,
        n_x=n_x,
        n_z=n_z,
        n_rounds_noisy=n_rounds_noisy,
        detectors=detectors,
        logical_measurements=logicals,
        n_measurements=n_meas,
        noisy_step_range=(noisy_lo, noisy_hi) if noisy_lo is not None else (1, 0),
    )


# -- noise annotation --------------------------------------------------------

# Pauli components as (x_bit, z_bit)
_PAULI_BITS = {"X": (1, 0), "Y": (1, 1), "Z": (0, 1)}
_TWO_QUBIT_PAULIS = [
    (a, b)
    for a in ("I", "X", "Y", "Z")
    for b in ("I", "X", "Y", "Z")
    if not (a == "I" and b == "I")
]


@dataclass(frozen=True)
class FaultSite:
    """One Pauli (or classical flip) mechanism attached to an instruction."""

    instr_index: int
    pauli: tuple[tuple[int, int, int], ...]  # (qubit, x_bit, z_bit); empty for flips
    meas_flip: int  # result index flipped, or -1
    prob: float
    noisy_round: int  # 1..N_R

    def label(self) -> str:
        if self.meas_flip >= 0:
            return f"flip M{self.meas_flip}"
        names = {(1, 0): "X", (1, 1): "Y", (0, 1): "Z"}
        return " ".join(f"{names[(x, z)]}{q}" for q, x, z in self.pauli)


@dataclass
class NoisyCircuit:
    circuit: MemoryCircuit
    p: float
    fault_sites: list[FaultSite]


def annotate_noise(circuit: MemoryCircuit, p: float) -> NoisyCircuit:
    """Attach the five-rule depolarizing model to the noisy rounds.

    Rules: init_z -> X@p, init_x -> Z@p, idle (and any 1q gate) -> X/Y/Z
    each @p/3, cnot -> the 15 nontrivial 2-qubit Paulis each @p/15,
    measurement -> classical flip @p. Boundary rounds and the readout stay
    noiseless.
    """
    if not (0 <= p < 1):
        raise ValueError(f"physical error rate {p} outside [0, 1)")
    lo, hi = circuit.noisy_step_range
    # noisy-round id for a time step: rounds are equal-length blocks after the prep step
    steps_per_round = (hi - lo + 1) // max(circuit.n_rounds_noisy, 1) if hi >= lo else 0

    sites: list[FaultSite] = []
    for idx, ins in enumerate(circuit.instructions):
        t = ins.time_step
        if not (lo <= t <= hi):
            continue
        rnd = 1 + (t - lo) // steps_per_round
        if ins.kind == "init_z":
            q = ins.targets[0]
            sites.append(FaultSite(idx, ((q, 1, 0),), -1, p, rnd))
        elif ins.kind == "init_x":
            q = ins.targets[0]
            sites.append(FaultSite(idx, ((q, 0, 1),), -1, p, rnd))
        elif ins.kind == "idle":
            q = ins.targets[0]
            for name in ("X", "Y", "Z"):
                x, z = _PAULI_BITS[name]
                sites.append(FaultSite(idx, ((q, x, z),), -1, p / 3, rnd))
        elif ins.kind == "cnot":
            a, b = ins.targets
            for pa, pb in _TWO_QUBIT_PAULIS:
                pauli = []
                if pa != "I":
                    x, z = _PAULI_BITS[pa]
                    pauli.append((a, x, z))
                if pb != "I":
                    x, z = _PAULI_BITS[pb]
                    pauli.append((b, x, z))
                sites.append(FaultSite(idx, tuple(pauli), -1, p / 15, rnd))
        elif ins.kind in ("measure_z", "measure_x"):
            sites.append(FaultSite(idx, (), ins.result_index, p, rnd))
    return NoisyCircuit(circuit=circuit, p=p, fault_sites=sites)


# -- fault propagation -------------------------------------------------------


class FramePropagator:
    """Event-driven single-fault Pauli frame propagation.

    Precomputes per-qubit instruction timelines so a fault only visits the
    instructions its light cone touches.
    """

    def __init__(self, circuit: MemoryCircuit):
        self.circuit = circuit
        n_qubits = circuit.n_data + circuit.n_ancilla
        self.timeline: list[list[int]] = [[] for _ in range(n_qubits)]
        for i, ins in enumerate(circuit.instructions):
            for q in ins.targets:
                self.timeline[q].append(i)
        # measurement index -> (detector indices, logical indices)
        self.meas_to_det: dict[int, list[int]] = {}
        self.meas_to_log: dict[int, list[int]] = {}
        for d, det in enumerate(circuit.detectors):
            for m in det.meas:
                self.meas_to_det.setdefault(m, []).append(d)
        for j, sup in enumerate(circuit.logical_measurements):
            for m in sup:
                self.meas_to_log.setdefault(m, []).append(j)

    def propagate(self, instr_index: int, pauli, meas_flip: int = -1):
        """Flipped (detector tuple, logical tuple) for one inserted fault.

        pauli is a sequence of (qubit, x_bit, z_bit) applied right after
        instruction instr_index; meas_flip >= 0 instead toggles that
        recorded measurement.
        """
        flipped_meas: set[int] = set()
        if meas_flip >= 0:
            flipped_meas.add(meas_flip)
            return self._collect(flipped_meas)

        frame: dict[int, list[int]] = {}
        pending: list[int] = []
        queued: set[int] = set()

        def infect(q, after_idx):
            tl = self.timeline[q]
            pos = bisect.bisect_right(tl, after_idx)
            if pos < len(tl):
                nxt = tl[pos]
                if nxt not in queued:
                    queued.add(nxt)
                    heapq.heappush(pending, nxt)

        for q, x, z in pauli:
            f = frame.setdefault(q, [0, 0])
            f[0] ^= x
            f[1] ^= z
        for q in list(frame):
            if frame[q][0] or frame[q][1]:
                infect(q, instr_index)

        instrs = self.circuit.instructions
        while pending:
            idx = heapq.heappop(pending)
            ins = instrs[idx]
            kind = ins.kind
            if kind == "cnot":
                c, t = ins.targets
                fc = frame.setdefault(c, [0, 0])
                ft = frame.setdefault(t, [0, 0])
                ft[0] ^= fc[0]
                fc[1] ^= ft[1]
                if fc[0] or fc[1]:
                    infect(c, idx)
                if ft[0] or ft[1]:
                    infect(t, idx)
            elif kind in ("init_z", "init_x"):
                frame[ins.targets[0]] = [0, 0]
            elif kind == "measure_z":
                q = ins.targets[0]
                f = frame.get(q)
                if f and f[0]:
                    flipped_meas ^= {ins.result_index}
                if f and (f[0] or f[1]):
                    infect(q, idx)
            elif kind == "measure_x":
                q = ins.targets[0]
                f = frame.get(q)
                if f and f[1]:
                    flipped_meas ^= {ins.result_index}
                if f and (f[0] or f[1]):
                    infect(q, idx)
            else:  # idle
                q = ins.targets[0]
                f = frame.get(q)
                if f and (f[0] or f[1]):
                    infect(q, idx)
        return self._collect(flipped_meas)

    def _collect(self, flipped_meas):
        det_parity: dict[int, int] = {}
        log_parity: dict[int, int] = {}
        for m in flipped_meas:
            for d in self.meas_to_det.get(m, ()):
                det_parity[d] = det_parity.get(d, 0) ^ 1
            for j in self.meas_to_log.get(m, ()):
                log_parity[j] = log_parity.get(j, 0) ^ 1
        dets = tuple(sorted(d for d, v in det_parity.items() if v))
        logs = tuple(sorted(j for j, v in log_parity.items() if v))
        return dets, logs


def simulate_frame(circuit: MemoryCircuit, faults) -> tuple[np.ndarray, np.ndarray]:
    """Whole-circuit frame simulation with a list of simultaneous faults.

    faults: iterable of FaultSite (all assumed to fire). Returns dense
    detector and logical flip vectors. Reference implementation for the
    DEM equivalence audit; linear in circuit size per call.
    """
    n_qubits = circuit.n_data + circuit.n_ancilla
    x = np.zeros(n_qubits, dtype=np.uint8)
    z = np.zeros(n_qubits, dtype=np.uint8)
    meas = np.zeros(circuit.n_measurements, dtype=np.uint8)
    by_instr: dict[int, list[FaultSite]] = {}
    for s in faults:
        by_instr.setdefault(s.instr_index, []).append(s)
    for idx, ins in enumerate(circuit.instructions):
        kind = ins.kind
        if kind == "cnot":
            c, t = ins.targets
            x[t] ^= x[c]
            z[c] ^= z[t]
        elif kind in ("init_z", "init_x"):
            q = ins.targets[0]
            x[q] = 0
            z[q] = 0
        elif kind == "measure_z":
            q = ins.targets[0]
            meas[ins.result_index] ^= x[q]
        elif kind == "measure_x":
            q = ins.targets[0]
            meas[ins.result_index] ^= z[q]
        for s in by_instr.get(idx, ()):
            if s.meas_flip >= 0:
                meas[s.meas_flip] ^= 1
            for q, fx, fz in s.pauli:
                x[q] ^= fx
                z[q] ^= fz
    det = np.zeros(len(circuit.detectors), dtype=np.uint8)
    for d, dd in enumerate(circuit.detectors):
        acc = 0
        for m in dd.meas:
            acc ^= int(meas[m])
        det[d] = acc
    log = np.zeros(len(circuit.logical_measurements), dtype=np.uint8)
    for j, sup in enumerate(circuit.logical_measurements):
        acc = 0
        for m in sup:
            acc ^= int(meas[m])
        log[j] = acc
    return det, log


# -- text export -------------------------------------------------------------


def dumps(circuit: MemoryCircuit) -> str:
    lines = []
    for ins in circuit.instructions:
        tgt = " ".join(str(q) for q in ins.targets)
        lines.append(f"{ins.kind} {tgt} @t{ins.time_step}")
    for det in circuit.detectors:
        ms = " ".join(f"M{m}" for m in det.meas)
        lines.append(f"detector L{det.layer} {ms}")
    for i, sup in enumerate(circuit.logical_measurements):
        ms = " ".join(f"M{m}" for m in sup)
        lines.append(f"logical {i} {ms}")
    return "\n".join(lines) + "\n"


def loads(text: str) -> MemoryCircuit:
    instructions: list[Instruction] = []
    raw_dets: list[tuple[int, tuple[int, ...]]] = []
    logicals: dict[int, tuple[int, ...]] = {}
    n_meas = 0
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] == "detector":
            layer = int(parts[1][1:])
            meas = tuple(int(p[1:]) for p in parts[2:])
            raw_dets.append((layer, meas))
        elif parts[0] == "logical":
            logicals[int(parts[1])] = tuple(int(p[1:]) for p in parts[2:])
        else:
            kind = parts[0]
            step = int(parts[-1][2:])
            targets = tuple(int(p) for p in parts[1:-1])
            res = -1
            if kind.startswith("measure"):
                res = n_meas
                n_meas += 1
            instructions.append(Instruction(kind, targets, step, res))

    # rederive structure from the instruction stream
    meas_kind: dict[int, str] = {}
    for ins in instructions:
        if ins.result_index >= 0:
            meas_kind[ins.result_index] = ins.kind
    last_step = max(ins.time_step for ins in instructions)
    final_meas = [ins for ins in instructions if ins.kind == "measure_x" and ins.time_step == last_step]
    n_data = len(final_meas)
    round_init_steps = sorted(
        {ins.time_step for ins in instructions if ins.kind.startswith("init") and ins.time_step > 0}
    )
    rounds = len(round_init_steps)
    n_rounds_noisy = rounds - 2
    per_round = [ins for ins in instructions if ins.kind.startswith("measure") and ins.time_step < last_step]
    n_x = sum(1 for ins in per_round if ins.kind == "measure_x") // rounds
    n_z = sum(1 for ins in per_round if ins.kind == "measure_z") // rounds
    width = n_x + n_z

    detectors = []
    for layer, meas in raw_dets:
        m0 = meas[0]
        kind = "X" if meas_kind[m0] == "measure_x" else "Z"
        detectors.append(DetectorDef(meas, layer, m0 % width, kind))

    if n_rounds_noisy > 0:
        lo = round_init_steps[1]
        hi = round_init_steps[n_rounds_noisy + 1] - 1
    else:
        lo, hi = 1, 0
    return MemoryCircuit(
        instructions=instructions,
        n_data=n_data,
        n_x=n_x,
        n_z=n_z,
        n_rounds_noisy=n_rounds_noisy,
        detectors=detectors,
        logical_measurements=[logicals[i] for i in sorted(logicals)],
        n_measurements=n_meas,
        noisy_step_range=(lo, hi),
    )
