"""Experiment harness: logical-error-rate sweeps, timing, fits, ablations.

Everything is driven by a single JSON-serializable config. A shot counts
as a logical error iff the predicted flips differ from the true flips in
any coordinate (whole-block rate, not per-round). Error bars are the
binomial sqrt(p(1-p)/n) throughout.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import bposd, circuits, codes, faultsim, model, nn, oracle


@dataclass
class ExperimentConfig:
    code: str | dict = "bb72"
    schedule: str = "auto"
    n_rounds: int = 6
    p_list: list = field(default_factory=lambda: [0.003])
    shots: int = 1000
    seed: int = 0
    decoder: str = "bposd"  # bposd | ml | oracle
    bp_iters: int = 30
    bp_variant: str = "product-sum"
    bp_schedule: str = "parallel"
    ms_scale: float = 0.75
    osd_order: int = 0
    x_only: bool | None = None  # default: True for bposd, False otherwise
    checkpoint: str | None = None
    audit_shots: int = 8
    out_dir: str | None = None

    def __post_init__(self):
        if self.shots < 1:
            raise ValueError("need at least one shot")
        for p in self.p_list:
            if not (0.0 <= p < 1.0):
                raise ValueError(f"physical error rate {p} outside [0, 1)")
        if self.x_only is None:
            self.x_only = self.decoder == "bposd"
        if self.x_only and self.decoder != "bposd":
            raise ValueError("the X-only restriction applies to BP-OSD runs only")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class LerRow:
    p: float
    shots: int
    errors: int
    ler: float
    stderr: float
    per_qubit_per_round: float
    seconds: float


@dataclass
class ExperimentReport:
    rows: list[LerRow]
    decoder: str
    metadata: dict

    def write_csv(self, path: str) -> None:
        # wall-clock stays out of the file so reruns are byte-identical
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["p", "shots", "errors", "ler", "stderr", "per_qubit_per_round"])
            for r in self.rows:
                w.writerow([r.p, r.shots, r.errors, r.ler, r.stderr, r.per_qubit_per_round])


def binomial_stderr(p_hat: float, n: int) -> float:
    return math.sqrt(p_hat * (1.0 - p_hat) / n)


def whole_block_error(pred: np.ndarray, truth: np.ndarray) -> bool:
    return bool(np.any(pred != truth))


def per_qubit_per_round_rate(ler: float, k: int, n_rounds: int) -> float:
    """Derived secondary metric: 1 - (1 - LER)^(1/(k N_R))."""
    if ler >= 1.0:
        return 1.0
    return 1.0 - (1.0 - ler) ** (1.0 / max(k * n_rounds, 1))


def build_code(spec) -> codes.CssCode:
    if isinstance(spec, str):
        return codes.from_preset(spec)
    a = [codes.Monomial(*t) for t in spec["a_terms"]]
    b = [codes.Monomial(*t) for t in spec["b_terms"]]
    return codes.build_bb_code(spec["l"], spec["m"], a, b, name=spec.get("name", "custom"))


@dataclass
class Pipeline:
    """Everything derived from (code, schedule, rounds): circuit and signatures."""

    code: codes.CssCode
    circuit: circuits.MemoryCircuit
    base_nc: circuits.NoisyCircuit
    base_table: list[faultsim.SiteRecord]

    @classmethod
    def build(cls, cfg: ExperimentConfig) -> "Pipeline":
        code = build_code(cfg.code)
        sched = circuits.schedule_for(code, cfg.schedule)
        circ = circuits.build_memory_circuit(code, cfg.n_rounds, sched)
        nc = circuits.annotate_noise(circ, cfg.p_list[0])
        table = faultsim.build_site_table(nc)
        return cls(code, circ, nc, table)

    def at_rate(self, p: float) -> tuple[circuits.NoisyCircuit, list[faultsim.SiteRecord]]:
        """Site signatures are rate-independent; only the probabilities move."""
        nc = circuits.annotate_noise(self.circuit, p)
        table = [
            faultsim.SiteRecord(r.detectors, r.logicals, s.prob, r.noisy_round)
            for r, s in zip(self.base_table, nc.fault_sites)
        ]
        return nc, table


class _BposdRunner:
    def __init__(self, cfg: ExperimentConfig, dem: faultsim.DetectorErrorModel):
        self.full_dem = dem
        self.dem = faultsim.x_only(dem) if cfg.x_only else dem
        self.decoder = bposd.BpOsdDecoder(
            self.dem,
            bposd.BpConfig(cfg.bp_iters, cfg.bp_variant, cfg.ms_scale, cfg.bp_schedule),
            bposd.OsdConfig(cfg.osd_order),
        )

    def prepare(self, shots: faultsim.Shots) -> np.ndarray:
        return faultsim.restrict_shot_detectors(self.dem, shots.detectors)

    def decode(self, d: np.ndarray) -> tuple[np.ndarray, str]:
        pred, converged = self.decoder.decode(d)
        return pred, "bp" if converged else "osd"


class _OracleRunner:
    def __init__(self, cfg: ExperimentConfig, dem: faultsim.DetectorErrorModel):
        self.dem = dem
        self.table = oracle.build_coset_table(dem)

    def prepare(self, shots: faultsim.Shots) -> np.ndarray:
        return shots.detectors

    def decode(self, d: np.ndarray) -> tuple[np.ndarray, str]:
        return self.table.mld(d), "oracle"


class _MlRunner:
    def __init__(self, cfg: ExperimentConfig, dem: faultsim.DetectorErrorModel):
        if not cfg.checkpoint:
            raise ValueError("ml decoding needs a checkpoint path")
        self.dem = dem
        self.model = model.load_model(cfg.checkpoint, dem)

    def prepare(self, shots: faultsim.Shots) -> np.ndarray:
        return faultsim.layers_from_shots(self.dem, shots.detectors)

    def decode(self, layers: np.ndarray) -> tuple[np.ndarray, str]:
        pred, _ = self.model.predict(layers)
        return pred, "ml"


_RUNNERS = {"bposd": _BposdRunner, "oracle": _OracleRunner, "ml": _MlRunner}


def make_runner(cfg: ExperimentConfig, dem: faultsim.DetectorErrorModel):
    try:
        return _RUNNERS[cfg.decoder](cfg, dem)
    except KeyError:
        raise ValueError(f"unknown decoder {cfg.decoder!r}; options: {sorted(_RUNNERS)}") from None


def run_ler_experiment(cfg: ExperimentConfig, pipeline: Pipeline | None = None) -> ExperimentReport:
    pipeline = pipeline or Pipeline.build(cfg)
    rows = []
    for p in cfg.p_list:
        nc, table = pipeline.at_rate(p)
        dem = faultsim.build_dem(nc, table)
        if cfg.audit_shots:
            if not faultsim.verify_dem_equivalence(nc, table, cfg.audit_shots, cfg.seed):
                raise RuntimeError("detector error model failed the circuit equivalence audit")
        runner = make_runner(cfg, dem)
        shots = faultsim.sample_shots(dem, cfg.shots, cfg.seed)
        inputs = runner.prepare(shots)
        t0 = time.perf_counter()
        errors = 0
        for i in range(cfg.shots):
            pred, _ = runner.decode(inputs[i])
            if whole_block_error(pred, shots.logicals[i]):
                errors += 1
        seconds = time.perf_counter() - t0
        ler = errors / cfg.shots
        rows.append(LerRow(
            p=p,
            shots=cfg.shots,
            errors=errors,
            ler=ler,
            stderr=binomial_stderr(ler, cfg.shots),
            per_qubit_per_round=per_qubit_per_round_rate(ler, pipeline.code.k, cfg.n_rounds),
            seconds=seconds,
        ))
    from . import __version__

    meta = {
        "config": cfg.to_dict(),
        "version": __version__,
        "code": pipeline.code.name,
        "n": pipeline.code.n,
        "k": pipeline.code.k,
        "n_rounds": cfg.n_rounds,
        "seed": cfg.seed,
    }
    return ExperimentReport(rows, cfg.decoder, meta)


@dataclass
class TimingSummary:
    label: str
    count: int
    ns_min: float
    ns_mean: float
    ns_p50: float
    ns_p90: float
    ns_p99: float
    ns_max: float

    @classmethod
    def from_samples(cls, label: str, ns: np.ndarray) -> "TimingSummary":
        return cls(
            label=label,
            count=len(ns),
            ns_min=float(ns.min()),
            ns_mean=float(ns.mean()),
            ns_p50=float(np.percentile(ns, 50)),
            ns_p90=float(np.percentile(ns, 90)),
            ns_p99=float(np.percentile(ns, 99)),
            ns_max=float(ns.max()),
        )


@dataclass
class TimingReport:
    samples: list[tuple[str, int]]  # (label, ns) per shot, in shot order
    summaries: list[TimingSummary]
    metadata: dict

    def coefficient_of_variation(self) -> float:
        ns = np.array([t for _, t in self.samples], dtype=np.float64)
        return float(ns.std() / ns.mean())

    def write_csv(self, path: str) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["shot", "label", "ns"])
            for i, (label, t) in enumerate(self.samples):
                w.writerow([i, label, t])


def run_timing_experiment(cfg: ExperimentConfig, pipeline: Pipeline | None = None,
                          runner=None, p: float | None = None) -> TimingReport:
    """Wall-clock per single-shot decode call (model/DEM setup excluded)."""
    pipeline = pipeline or Pipeline.build(cfg)
    p = p if p is not None else cfg.p_list[0]
    nc, table = pipeline.at_rate(p)
    dem = faultsim.build_dem(nc, table)
    if runner is None:
        runner = make_runner(cfg, dem)
    shots = faultsim.sample_shots(dem, cfg.shots, cfg.seed)
    inputs = runner.prepare(shots)
    samples = []
    for i in range(cfg.shots):
        t0 = time.perf_counter_ns()
        _, label = runner.decode(inputs[i])
        samples.append((label, time.perf_counter_ns() - t0))
    by_label: dict[str, list[int]] = {}
    for label, t in samples:
        by_label.setdefault(label, []).append(t)
    summaries = [
        TimingSummary.from_samples(label, np.array(ts, dtype=np.float64))
        for label, ts in sorted(by_label.items())
    ]
    meta = {"config": cfg.to_dict(), "p": p}
    return TimingReport(samples, summaries, meta)


def fit_ler_per_round(points: list[tuple[int, float]]) -> tuple[float, float]:
    """Least-squares line through (N_R, LER); the slope is the per-round rate."""
    if len(points) < 2:
        raise ValueError("need at least two points for a per-round fit")
    x = np.array([p[0] for p in points], dtype=np.float64)
    y = np.array([p[1] for p in points], dtype=np.float64)
    slope, intercept = np.polyfit(x, y, 1)
    return float(slope), float(intercept)


@dataclass
class AblationReport:
    masked: list[model.TraceRow]
    unmasked: list[model.TraceRow]
    window: int = 50

    def smoothed(self, which: str) -> np.ndarray:
        trace = self.masked if which == "masked" else self.unmasked
        return model.moving_average([r.loss for r in trace], self.window)

    def write_csv(self, path_prefix: str) -> None:
        for name, trace in (("masked", self.masked), ("unmasked", self.unmasked)):
            with open(f"{path_prefix}_{name}.csv", "w", newline="") as f:
                w = csv.writer(f)
                w.writerow(["stage", "epoch", "step", "loss"])
                for r in trace:
                    w.writerow([r.stage, r.epoch, r.step, r.loss])
            sm = self.smoothed(name)
            with open(f"{path_prefix}_{name}_smoothed.csv", "w", newline="") as f:
                w = csv.writer(f)
                w.writerow(["step", "moving_average"])
                for i, v in enumerate(sm):
                    w.writerow([i, v])


def run_mask_ablation(code: codes.CssCode, n_rounds: int, p: float,
                      model_cfg: model.ModelConfig, stages: list[model.StageConfig],
                      seed: int, schedule: str = "auto") -> AblationReport:
    """Identical training twice, toggling only the code-aware mask."""
    sched = circuits.schedule_for(code, schedule)
    circ = circuits.build_memory_circuit(code, n_rounds, sched)
    nc = circuits.annotate_noise(circ, p)
    table = faultsim.build_site_table(nc)
    dem = faultsim.build_dem(nc, table)

    def sampler_factory(stage):
        return lambda n, s: faultsim.sample_training_batch(dem, table, n, s, stage.n_rounds)

    traces = {}
    for use_mask in (True, False):
        cfg = model.ModelConfig(**{**model_cfg.__dict__, "use_mask": use_mask})
        dec = model.RecurrentDecoder.fresh(cfg, dem, seed=seed)
        traces[use_mask] = model.train_curriculum(dec, stages, sampler_factory, seed=seed)
    return AblationReport(masked=traces[True], unmasked=traces[False])


def write_metadata(path: str, meta: dict) -> None:
    with open(path, "w") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")
