"""Command-line entry points for the decoding workbench.

Subcommands build artifacts (codes, circuits, detector error models),
sample and decode shots, train the recurrent decoder, and run the
benchmark experiments. Everything takes a JSON config (--config) with
flag overrides, and writes CSV reports plus JSON metadata next to them.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import bench, circuits, codes, faultsim, model, nn


def _load_config(args) -> dict:
    cfg = {}
    if args.config:
        with open(args.config) as f:
            cfg = json.load(f)
    # flag overrides
    for key in ("seed", "decoder", "osd_order", "bp_iters", "checkpoint"):
        v = getattr(args, key, None)
        if v is not None:
            cfg[key] = v
    if getattr(args, "x_only", False):
        cfg["x_only"] = True
    if getattr(args, "out", None):
        cfg["out_dir"] = args.out
    return cfg


def _outdir(cfg: dict) -> str:
    out = cfg.get("out_dir") or "."
    os.makedirs(out, exist_ok=True)
    return out


def _experiment_config(cfg: dict) -> bench.ExperimentConfig:
    known = bench.ExperimentConfig.__dataclass_fields__.keys()
    return bench.ExperimentConfig(**{k: v for k, v in cfg.items() if k in known})


def _pipeline(cfg: dict) -> bench.Pipeline:
    return bench.Pipeline.build(_experiment_config(cfg))


def cmd_build_code(cfg: dict) -> int:
    code = bench.build_code(cfg.get("code", "bb72"))
    code.validate()
    out = _outdir(cfg)
    meta = {
        "name": code.name,
        "n": code.n,
        "k": code.k,
        "x_checks": code.hx.rows,
        "z_checks": code.hz.rows,
        "logical_x": [list(s) for s in code.logical_x],
        "logical_z": [list(s) for s in code.logical_z],
    }
    bench.write_metadata(os.path.join(out, f"{code.name}_code.json"), meta)
    print(f"{code.name}: n={code.n} k={code.k} (checks {code.hx.rows}+{code.hz.rows})")
    return 0


def cmd_build_circuit(cfg: dict) -> int:
    ecfg = _experiment_config(cfg)
    code = bench.build_code(ecfg.code)
    sched = circuits.schedule_for(code, ecfg.schedule)
    circ = circuits.build_memory_circuit(code, ecfg.n_rounds, sched)
    out = _outdir(cfg)
    path = os.path.join(out, f"{code.name}_r{ecfg.n_rounds}.circuit")
    with open(path, "w") as f:
        f.write(circuits.dumps(circ))
    print(f"wrote {path}: {len(circ.instructions)} instructions, "
          f"{len(circ.detectors)} detectors, {len(circ.logical_measurements)} logicals")
    return 0


def cmd_build_dem(cfg: dict) -> int:
    ecfg = _experiment_config(cfg)
    pipeline = bench.Pipeline.build(ecfg)
    p = ecfg.p_list[0]
    nc, table = pipeline.at_rate(p)
    dem = faultsim.build_dem(nc, table)
    out = _outdir(cfg)
    path = os.path.join(out, f"{pipeline.code.name}_r{ecfg.n_rounds}_p{p}.dem")
    with open(path, "w") as f:
        f.write(faultsim.dem_dumps(dem))
    print(f"wrote {path}: {dem.n_mechanisms} mechanisms over {dem.n_detectors} detectors")
    return 0


def cmd_sample(cfg: dict) -> int:
    ecfg = _experiment_config(cfg)
    pipeline = bench.Pipeline.build(ecfg)
    nc, table = pipeline.at_rate(ecfg.p_list[0])
    dem = faultsim.build_dem(nc, table)
    shots = faultsim.sample_shots(dem, ecfg.shots, ecfg.seed)
    out = _outdir(cfg)
    path = os.path.join(out, f"{pipeline.code.name}_r{ecfg.n_rounds}_p{ecfg.p_list[0]}.shots")
    with open(path, "w") as f:
        f.write(faultsim.shots_dumps(shots))
    print(f"wrote {path}: {len(shots)} shots")
    return 0


def cmd_decode(cfg: dict) -> int:
    ecfg = _experiment_config(cfg)
    report = bench.run_ler_experiment(ecfg)
    out = _outdir(cfg)
    report.write_csv(os.path.join(out, "decode.csv"))
    bench.write_metadata(os.path.join(out, "decode_meta.json"), report.metadata)
    for row in report.rows:
        print(f"p={row.p}: LER={row.ler:.6f} +/- {row.stderr:.6f} ({row.errors}/{row.shots})")
    return 0


def cmd_bench_ler(cfg: dict) -> int:
    return cmd_decode(cfg)


def cmd_bench_timing(cfg: dict) -> int:
    ecfg = _experiment_config(cfg)
    report = bench.run_timing_experiment(ecfg)
    out = _outdir(cfg)
    report.write_csv(os.path.join(out, "timing.csv"))
    bench.write_metadata(
        os.path.join(out, "timing_summary.json"),
        {"summaries": [s.__dict__ for s in report.summaries], **report.metadata},
    )
    for s in report.summaries:
        print(f"{s.label}: n={s.count} mean={s.ns_mean/1e6:.3f}ms "
              f"p50={s.ns_p50/1e6:.3f}ms p99={s.ns_p99/1e6:.3f}ms max={s.ns_max/1e6:.3f}ms")
    return 0


def _stages_from_config(raw: list[dict]) -> list[model.StageConfig]:
    stages = []
    for r in raw:
        sched = None
        if "lr_schedule" in r:
            s = r["lr_schedule"]
            sched = nn.LrSchedule(s["base"], s.get("warmup_steps", 0), s.get("decay_exponent", 0.0))
        stages.append(model.StageConfig(
            batch_size=r["batch_size"],
            lr=r["lr"],
            n_rounds=r["n_rounds"],
            n_latent_rounds=r["n_latent_rounds"],
            p=r["p"],
            epochs=r["epochs"],
            c=r.get("c"),
            reset_optimizer=r.get("reset_optimizer", True),
            samples_per_epoch=r.get("samples_per_epoch", 16384),
            lr_schedule=sched,
        ))
    return stages


def cmd_train(cfg: dict) -> int:
    ecfg = _experiment_config(cfg)
    train = cfg.get("train")
    if not train:
        print("config needs a 'train' section with 'model' and 'stages'", file=sys.stderr)
        return 2
    stages = _stages_from_config(train["stages"])
    if not stages:
        print("no training stages configured", file=sys.stderr)
        return 2
    code = bench.build_code(ecfg.code)
    sched = circuits.schedule_for(code, ecfg.schedule)
    n_rounds = stages[0].n_rounds

    # stage-aware data pipelines, cached per (rounds, rate)
    pipelines: dict[tuple, tuple] = {}

    def pipeline_for(stage: model.StageConfig):
        key = (stage.n_rounds, stage.p)
        if key not in pipelines:
            circ = circuits.build_memory_circuit(code, stage.n_rounds, sched)
            nc = circuits.annotate_noise(circ, stage.p)
            table = faultsim.build_site_table(nc)
            dem = faultsim.build_dem(nc, table)
            pipelines[key] = (dem, table)
        return pipelines[key]

    dem0, _ = pipeline_for(stages[0])
    mc = train["model"]
    mcfg = model.ModelConfig(
        d_m=mc.get("d_m", 256),
        d_f=mc.get("d_f", 512),
        n_heads=mc.get("n_heads", 8),
        n_enc_layers=mc.get("n_enc_layers", 3),
        n_dec_layers=mc.get("n_dec_layers", 3),
        c=mc.get("c", 1),
        n_detector_slots=dem0.layer_width,
        n_logicals=dem0.n_logicals,
        n_layers=dem0.n_layers,
        use_mask=mc.get("use_mask", True),
    )
    decoder = model.RecurrentDecoder.fresh(mcfg, dem0, seed=ecfg.seed)

    def sampler_factory(stage: model.StageConfig):
        dem, table = pipeline_for(stage)
        if dem.n_layers != decoder.cfg.n_layers:
            raise ValueError("curriculum changes the round count; the recurrent model "
                             f"is fixed at {decoder.cfg.n_layers} layers")
        return lambda n, s: faultsim.sample_training_batch(dem, table, n, s, stage.n_rounds)

    trace = model.train_curriculum(decoder, stages, sampler_factory, seed=ecfg.seed)
    decoder.n_latent = model.latent_iterations(
        stages[-1].n_latent_rounds, decoder.cfg.n_layers, stages[-1].n_rounds
    )
    out = _outdir(cfg)
    ckpt = cfg.get("checkpoint") or os.path.join(out, f"{code.name}_model.ckpt")
    model.save_model(ckpt, decoder)
    with open(os.path.join(out, "train_trace.csv"), "w") as f:
        f.write("stage,epoch,step,loss\n")
        for r in trace:
            f.write(f"{r.stage},{r.epoch},{r.step},{r.loss}\n")
    print(f"trained {len(trace)} steps over {len(stages)} stages; checkpoint at {ckpt}")
    if trace:
        print(f"final loss {trace[-1].loss:.5f}")
    return 0


def cmd_ablate_mask(cfg: dict) -> int:
    ecfg = _experiment_config(cfg)
    train = cfg.get("train")
    if not train:
        print("config needs a 'train' section with 'model' and 'stages'", file=sys.stderr)
        return 2
    stages = _stages_from_config(train["stages"])
    code = bench.build_code(ecfg.code)
    mc = train["model"]
    probe = bench.Pipeline.build(ecfg)
    nc, table = probe.at_rate(stages[0].p)
    dem = faultsim.build_dem(nc, table)
    mcfg = model.ModelConfig(
        d_m=mc.get("d_m", 32), d_f=mc.get("d_f", 64), n_heads=mc.get("n_heads", 4),
        n_enc_layers=mc.get("n_enc_layers", 1), n_dec_layers=mc.get("n_dec_layers", 1),
        c=mc.get("c", 1), n_detector_slots=dem.layer_width,
        n_logicals=dem.n_logicals, n_layers=dem.n_layers,
    )
    report = bench.run_mask_ablation(code, stages[0].n_rounds, stages[0].p,
                                     mcfg, stages, ecfg.seed, ecfg.schedule)
    out = _outdir(cfg)
    report.write_csv(os.path.join(out, "ablation"))
    m = report.smoothed("masked")
    u = report.smoothed("unmasked")
    print(f"masked final smoothed loss {m[-1]:.5f}; unmasked {u[-1]:.5f}")
    return 0


def cmd_gradcheck(cfg: dict) -> int:
    code = codes.repetition_code(3)
    circ = circuits.build_memory_circuit(code, 2)
    nc = circuits.annotate_noise(circ, 0.05)
    table = faultsim.build_site_table(nc)
    dem = faultsim.build_dem(nc, table)
    mcfg = model.ModelConfig(d_m=32, d_f=64, n_heads=4, n_enc_layers=1, n_dec_layers=1,
                             c=1, n_detector_slots=dem.layer_width,
                             n_logicals=dem.n_logicals, n_layers=dem.n_layers)
    dec = model.RecurrentDecoder.fresh(mcfg, dem, seed=cfg.get("seed", 0), dtype=np.float64)
    batch = faultsim.sample_training_batch(dem, table, 2, seed=1, n_rounds_noisy=2)

    def build():
        return dec.compute_loss(batch, n_latent=2, train=False, rng=None)

    loss = build()
    nn.backward(loss)
    worst = 0.0
    worst_name = ""
    for name, t in dec.params.named().items():
        if t.grad is None:
            continue
        flat = t.data.reshape(-1)
        for i in np.linspace(0, flat.size - 1, num=min(2, flat.size), dtype=int):
            orig = flat[i]
            h = 1e-4
            flat[i] = orig + h
            fp = build().item()
            flat[i] = orig - h
            fm = build().item()
            flat[i] = orig
            fd = (fp - fm) / (2 * h)
            ad = t.grad.reshape(-1)[i]
            rel = abs(fd - ad) / max(abs(fd), abs(ad), 1e-3)
            if rel > worst:
                worst, worst_name = rel, name
    print(f"max relative gradient error {worst:.3e} ({worst_name})")
    return 0 if worst < 1e-5 else 1


COMMANDS = {
    "build-code": cmd_build_code,
    "build-circuit": cmd_build_circuit,
    "build-dem": cmd_build_dem,
    "sample": cmd_sample,
    "decode": cmd_decode,
    "train": cmd_train,
    "bench-ler": cmd_bench_ler,
    "bench-timing": cmd_bench_timing,
    "ablate-mask": cmd_ablate_mask,
    "gradcheck": cmd_gradcheck,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="bbdec", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON experiment config")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", help="output directory")
        p.add_argument("--decoder", choices=["bposd", "ml", "oracle"], default=None)
        p.add_argument("--osd-order", dest="osd_order", type=int, default=None)
        p.add_argument("--bp-iters", dest="bp_iters", type=int, default=None)
        p.add_argument("--checkpoint", default=None)
        p.add_argument("--x-only", dest="x_only", action="store_true")
    args = parser.parse_args(argv)
    cfg = _load_config(args)
    return COMMANDS[args.command](cfg)


if __name__ == "__main__":
    sys.exit(main())
