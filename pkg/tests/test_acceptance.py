"""Acceptance suite: one test per criterion, each printing a PASS line.

Criteria 5 and 7 sample tens of thousands of bb72 shots and dominate the
runtime (tens of minutes total on a desktop CPU). Everything is seeded;
reruns are bit-identical.
"""

import time

import numpy as np
import pytest

from bbdec import bench, bposd, circuits, codes, faultsim, model, nn, oracle
from bbdec.bench import ExperimentConfig


def report(num: int, detail: str):
    print(f"\nACCEPTANCE {num}: PASS - {detail}")


@pytest.fixture(scope="module")
def bb72_code():
    return codes.bb72()


@pytest.fixture(scope="module")
def bb72_r6(bb72_code):
    sched = circuits.interleaved_bb_schedule(bb72_code)
    circ = circuits.build_memory_circuit(bb72_code, 6, sched)
    nc = circuits.annotate_noise(circ, 0.003)
    table = faultsim.build_site_table(nc)
    return circ, nc, table


@pytest.fixture(scope="module")
def bb72_r2(bb72_code):
    sched = circuits.interleaved_bb_schedule(bb72_code)
    circ = circuits.build_memory_circuit(bb72_code, 2, sched)
    nc = circuits.annotate_noise(circ, 0.006)
    table = faultsim.build_site_table(nc)
    dem = faultsim.build_dem(nc, table)
    return circ, nc, table, dem


@pytest.fixture(scope="module")
def rep3_setup():
    code = codes.repetition_code(3)
    circ = circuits.build_memory_circuit(code, 2)
    nc = circuits.annotate_noise(circ, 0.05)
    table = faultsim.build_site_table(nc)
    dem = faultsim.build_dem(nc, table)
    return code, circ, nc, table, dem


def test_criterion_01_code_construction():
    t0 = time.time()
    bb72 = codes.bb72()
    assert bb72.n == 72 and bb72.k == 12
    assert not np.any(bb72.hx.matmul(bb72.hz.transpose()).words)
    bb144 = codes.bb144()
    assert bb144.n == 144 and bb144.k == 12
    assert not np.any(bb144.hx.matmul(bb144.hz.transpose()).words)
    elapsed = time.time() - t0
    assert elapsed < 1.0
    report(1, f"bb72=(72,12), bb144=(144,12), hx.hz^T=0, {elapsed:.2f}s")


def test_criterion_02_noiseless_determinism(bb72_r6):
    circ, _, table = bb72_r6
    nc0 = circuits.annotate_noise(circ, 0.0)
    assert all(s.prob == 0.0 for s in nc0.fault_sites)
    # same fault-site signatures, zero firing probability everywhere
    zero_table = [
        faultsim.SiteRecord(r.detectors, r.logicals, 0.0, r.noisy_round) for r in table
    ]
    dem0 = faultsim.build_dem(nc0, zero_table)
    shots = faultsim.sample_shots(dem0, 1000, seed=2)
    assert not shots.detectors.any()
    assert not shots.logicals.any()
    # direct frame simulation with no faults agrees
    det, log = circuits.simulate_frame(circ, [])
    assert not det.any() and not log.any()
    report(2, "bb72 N_R=6 p=0: 1000 shots, all detectors and logical flips zero")


def test_criterion_03_dem_fidelity(bb72_code):
    t0 = time.time()
    sched = circuits.interleaved_bb_schedule(bb72_code)
    circ = circuits.build_memory_circuit(bb72_code, 2, sched)
    nc = circuits.annotate_noise(circ, 0.001)
    dem = faultsim.build_dem(nc)
    # independent exhaustive single-fault sweep with a fresh propagator
    prop = circuits.FramePropagator(circ)
    merged: dict[tuple, float] = {}
    for site in nc.fault_sites:
        sig = prop.propagate(site.instr_index, site.pauli, site.meas_flip)
        if sig == ((), ()):
            continue
        merged[sig] = faultsim.merge_probability(merged.get(sig, 0.0), site.prob)
    got = {(m.detectors, m.logicals): m.prob for m in dem.mechanisms}
    assert set(got) == set(merged)
    for key, p in merged.items():
        assert got[key] == pytest.approx(p, abs=1e-15)
    elapsed = time.time() - t0
    assert elapsed < 60.0
    report(3, f"bb72 N_R=2 p=0.001: all {len(got)} mechanism signatures match "
              f"the exhaustive sweep over {len(nc.fault_sites)} fault sites, {elapsed:.1f}s")


def test_criterion_04_sampler_calibration():
    dem = faultsim.DetectorErrorModel(
        n_detectors=3,
        n_logicals=1,
        mechanisms=[
            faultsim.Mechanism(0.07, (0,), ()),
            faultsim.Mechanism(0.15, (1,), (0,)),
            faultsim.Mechanism(0.30, (2,), ()),
        ],
        layer_of=np.zeros(3, dtype=np.int64),
    )
    n = 100_000
    shots = faultsim.sample_shots(dem, n, seed=17)
    for i, p in enumerate((0.07, 0.15, 0.30)):
        rate = shots.detectors[:, i].mean()
        sigma = np.sqrt(p * (1 - p) / n)
        assert abs(rate - p) < 3 * sigma
    report(4, "3-mechanism toy, 1e5 shots: each empirical rate within 3 sigma")


def test_criterion_05_decoder_validity(bb72_r2):
    _, _, _, dem = bb72_r2
    xdem = faultsim.x_only(dem)
    n = 10_000
    shots = faultsim.sample_shots(dem, n, seed=23)
    dx = faultsim.restrict_shot_detectors(xdem, shots.detectors)
    dec = bposd.BpOsdDecoder(xdem, bposd.BpConfig(max_iterations=30), bposd.OsdConfig(order=0))
    d_mat, _ = xdem.dense_matrices()
    for i in range(n):
        e_hat, _ = dec.decode_error(dx[i])
        assert np.array_equal((d_mat @ e_hat) % 2, dx[i]), f"syndrome violated at shot {i}"
    report(5, f"bb72 p=0.006: D e_hat = d on 100% of {n} shots")


def test_criterion_06_oracle_equivalence(rep3_setup):
    _, _, _, _, dem = rep3_setup
    assert dem.n_mechanisms <= 20
    table = oracle.build_coset_table(dem)
    n = 10_000
    shots = faultsim.sample_shots(dem, n, seed=29)
    dec = bposd.BpOsdDecoder(dem, bposd.BpConfig(max_iterations=50),
                             bposd.OsdConfig(order=bposd.OSD_ORDER_CAP))
    bposd_errs = oracle_errs = 0
    for i in range(n):
        pred, _ = dec.decode(shots.detectors[i])
        if np.any(pred != shots.logicals[i]):
            bposd_errs += 1
        if np.any(table.mld(shots.detectors[i]) != shots.logicals[i]):
            oracle_errs += 1
    assert bposd_errs <= 1.2 * oracle_errs
    report(6, f"N_E={dem.n_mechanisms} DEM, 1e4 shots at p=0.05: BP-OSD LER "
              f"{bposd_errs/n:.4f} <= 1.2x MLD {oracle_errs/n:.4f}")


def test_criterion_07_pseudo_threshold(bb72_code, bb72_r6):
    circ, nc, table = bb72_r6
    dem = faultsim.build_dem(nc, table)
    xdem = faultsim.x_only(dem)
    n = 30_000
    shots = faultsim.sample_shots(dem, n, seed=31)
    dx = faultsim.restrict_shot_detectors(xdem, shots.detectors)
    dec = bposd.BpOsdDecoder(xdem, bposd.BpConfig(max_iterations=30), bposd.OsdConfig(order=3))
    errors = 0
    for i in range(n):
        pred, _ = dec.decode(dx[i])
        if np.any(pred != shots.logicals[i]):
            errors += 1
    ler = errors / n
    # conservative: even at +3 sigma the per-qubit-per-round rate stays below p
    upper = ler + 3 * bench.binomial_stderr(ler, n)
    per_rq = bench.per_qubit_per_round_rate(upper, bb72_code.k, 6)
    assert per_rq < 0.003
    report(7, f"bb72 N_R=6 OSD-3 p=0.003, {n} shots: LER={ler:.4f}, "
              f"per-qubit-per-round={per_rq:.5f} < 0.003 (3 sigma)")


def test_criterion_08_gradient_correctness(rep3_setup):
    t0 = time.time()
    _, _, _, table, dem = rep3_setup
    cfg = model.ModelConfig(d_m=32, d_f=64, n_heads=4, n_enc_layers=1, n_dec_layers=1,
                            c=1, n_detector_slots=dem.layer_width,
                            n_logicals=dem.n_logicals, n_layers=dem.n_layers)
    dec = model.RecurrentDecoder.fresh(cfg, dem, seed=37, dtype=np.float64)
    batch = faultsim.sample_training_batch(dem, table, 2, seed=41, n_rounds_noisy=2)

    def build():
        return dec.compute_loss(batch, n_latent=2, train=False, rng=None)

    loss = build()
    nn.backward(loss)
    worst = 0.0
    groups = 0
    for name, t in dec.params.named().items():
        assert t.grad is not None, f"{name} received no gradient"
        groups += 1
        flat = t.data.reshape(-1)
        for i in np.linspace(0, flat.size - 1, num=min(3, flat.size), dtype=int):
            orig = flat[i]
            h = 1e-4
            flat[i] = orig + h
            fp = build().item()
            flat[i] = orig - h
            fm = build().item()
            flat[i] = orig
            fd = (fp - fm) / (2 * h)
            ad = t.grad.reshape(-1)[i]
            worst = max(worst, abs(fd - ad) / max(abs(fd), abs(ad), 1e-3))
    elapsed = time.time() - t0
    assert worst < 1e-5
    assert elapsed < 300
    report(8, f"finite differences over {groups} parameter groups: "
              f"max relative error {worst:.2e} < 1e-5, {elapsed:.0f}s")


def test_criterion_09_causality_and_masking(rep3_setup):
    _, _, _, _, dem = rep3_setup
    # autoregressive causality: flipping prefix bit k leaves outputs <= k alone
    cfg = model.ModelConfig(d_m=16, d_f=32, n_heads=2, n_enc_layers=1, n_dec_layers=1,
                            c=1, n_detector_slots=dem.layer_width, n_logicals=6,
                            n_layers=dem.n_layers)
    dec = model.RecurrentDecoder.fresh(cfg, dem, seed=43)
    ctx = model._Ctx(train=False)
    m0 = model.encoder_initial(dec.params, cfg)
    h0 = model.decoder_initial(dec.params, cfg)
    base = np.zeros(6, dtype=np.uint8)
    _, logits_a = model.decoder_step_predict(base, m0, h0, dec.params, ctx)
    for k in range(6):
        flipped = base.copy()
        flipped[k] = 1
        _, logits_b = model.decoder_step_predict(flipped, m0, h0, dec.params, ctx)
        assert np.array_equal(logits_a.data[: k + 1], logits_b.data[: k + 1])

    # code-aware mask: alpha_ij is exactly zero wherever (D D^T)_ij = 0,
    # in every head and encoder layer (checked directly on the attention map)
    full, layer_masks = model.build_code_aware_mask(dem)
    counts = np.zeros((dem.n_detectors, dem.n_detectors))
    for mech in dem.mechanisms:
        for a in mech.detectors:
            for b in mech.detectors:
                counts[a, b] += 1
    layout = dem.layer_slots()
    rng = np.random.default_rng(47)
    for t, slots in enumerate(layout):
        mask = layer_masks[t]
        x = nn.Tensor(rng.normal(size=(dem.layer_width, 16)))
        p = dec.params.encoder[0].attn
        # recompute the attention weights the masked layer uses
        d_k = 16 // p.n_heads
        q = (x.data @ p.wq.data + p.bq.data)
        kk = (x.data @ p.wk.data + p.bk.data)
        for h in range(p.n_heads):
            sl = slice(h * d_k, (h + 1) * d_k)
            beta = q[:, sl] @ kk[:, sl].T / np.sqrt(d_k) + mask
            alpha = np.exp(beta - beta.max(axis=1, keepdims=True))
            alpha /= alpha.sum(axis=1, keepdims=True)
            for s1, d1 in enumerate(slots):
                for s2, d2 in enumerate(slots):
                    # diagonal of a detector no mechanism touches stays
                    # finite (else its softmax row would be empty)
                    if s1 == s2 and counts[d1, d1] == 0:
                        continue
                    if d1 >= 0 and d2 >= 0 and counts[d1, d2] == 0:
                        assert alpha[s1, s2] == 0.0
    report(9, "autoregressive perturbation and code-aware mask zeros hold exactly")


def test_criterion_10_parameter_count():
    cfg = model.ModelConfig()  # d_m=256, d_f=512, 3+3 layers, 8 heads, c=1, bb72 widths
    total = model.count_parameters(model.init_params(cfg, seed=0))
    assert abs(total - 4.77e6) / 4.77e6 < 0.10
    report(10, f"default bb72 model has {total:,} parameters "
               f"({100*abs(total-4.77e6)/4.77e6:.2f}% from 4.77e6)")


def test_criterion_11_toy_training(rep3_setup):
    t0 = time.time()
    _, _, _, table, dem = rep3_setup
    cfg = model.ModelConfig(d_m=32, d_f=64, n_heads=4, n_enc_layers=1, n_dec_layers=1,
                            c=1, n_detector_slots=dem.layer_width,
                            n_logicals=dem.n_logicals, n_layers=dem.n_layers)
    dec = model.RecurrentDecoder.fresh(cfg, dem, seed=11)
    stages = [
        model.StageConfig(batch_size=64, lr=3e-3, n_rounds=2, n_latent_rounds=0,
                          p=0.05, epochs=8, samples_per_epoch=2048),
        model.StageConfig(batch_size=64, lr=1e-3, n_rounds=2, n_latent_rounds=2,
                          p=0.05, epochs=15, samples_per_epoch=2048),
    ]
    sampler = lambda st: (lambda n, s: faultsim.sample_training_batch(dem, table, n, s, st.n_rounds))
    model.train_curriculum(dec, stages, sampler, seed=13)
    dec.n_latent = model.latent_iterations(2, cfg.n_layers, 2)

    n = 10_000
    shots = faultsim.sample_shots(dem, n, seed=999)  # held out from training seeds
    layers = faultsim.layers_from_shots(dem, shots.detectors)
    preds, _ = dec.predict(layers)
    ml_errs = int((preds != shots.logicals).any(axis=1).sum())
    table_o = oracle.build_coset_table(dem)
    mld_errs = sum(
        1 for i in range(n) if np.any(table_o.mld(shots.detectors[i]) != shots.logicals[i])
    )
    zero_errs = int(shots.logicals.any(axis=1).sum())
    elapsed = time.time() - t0
    assert ml_errs <= 1.5 * mld_errs
    assert ml_errs < zero_errs
    assert elapsed < 1800
    report(11, f"rep3 toy: ML LER {ml_errs/n:.4f} <= 1.5x MLD {mld_errs/n:.4f} "
               f"and < predict-zero {zero_errs/n:.4f}; trained+evaluated in {elapsed:.0f}s")


def test_criterion_12_mask_ablation():
    code = codes.repetition_code(9)
    mcfg = model.ModelConfig(d_m=32, d_f=64, n_heads=4, n_enc_layers=2, n_dec_layers=1,
                             c=1, n_detector_slots=8, n_logicals=1, n_layers=5)
    stages = [model.StageConfig(batch_size=32, lr=2e-3, n_rounds=2, n_latent_rounds=0,
                                p=0.05, epochs=12, samples_per_epoch=1024)]
    rep = bench.run_mask_ablation(code, 2, 0.05, mcfg, stages, seed=21)
    masked = rep.smoothed("masked")
    unmasked = rep.smoothed("unmasked")
    assert len(masked) == len(unmasked)
    assert masked[-1] <= unmasked[-1]
    report(12, f"identical training, final 50-step moving average: "
               f"masked {masked[-1]:.4f} <= unmasked {unmasked[-1]:.4f}")


def test_criterion_13_timing_bimodality(bb72_r2, rep3_setup):
    _, _, _, dem = bb72_r2
    xdem = faultsim.x_only(dem)
    n = 2000
    shots = faultsim.sample_shots(dem, n, seed=53)
    dx = faultsim.restrict_shot_detectors(xdem, shots.detectors)
    dec = bposd.BpOsdDecoder(xdem, bposd.BpConfig(max_iterations=30), bposd.OsdConfig(order=0))
    bp_ns, osd_ns, all_ns = [], [], []
    for i in range(n):
        t0 = time.perf_counter_ns()
        _, converged = dec.decode(dx[i])
        dt = time.perf_counter_ns() - t0
        all_ns.append(dt)
        (bp_ns if converged else osd_ns).append(dt)
    assert bp_ns and osd_ns
    median_ratio = np.median(osd_ns) / np.median(bp_ns)
    assert median_ratio > 1.0

    # toy recurrent model on the same shots: constant-time inference
    mcfg = model.ModelConfig(d_m=16, d_f=32, n_heads=2, n_enc_layers=1, n_dec_layers=1,
                             c=1, n_detector_slots=dem.layer_width,
                             n_logicals=dem.n_logicals, n_layers=dem.n_layers)
    mdec = model.RecurrentDecoder.fresh(mcfg, dem, seed=59)
    layer_view = faultsim.layers_from_shots(dem, shots.detectors)
    ml_ns = []
    for i in range(500):
        t0 = time.perf_counter_ns()
        mdec.predict(layer_view[i])
        ml_ns.append(time.perf_counter_ns() - t0)
    cv_ml = np.std(ml_ns) / np.mean(ml_ns)
    cv_bposd = np.std(all_ns) / np.mean(all_ns)
    assert cv_ml < cv_bposd
    report(13, f"BP-OSD: OSD/BP median ratio {median_ratio:.1f} > 1; "
               f"runtime CV ml={cv_ml:.3f} < bposd={cv_bposd:.3f}")


def test_criterion_14_error_bar_formula(rep3_setup):
    cfg = ExperimentConfig(code="rep3", n_rounds=2, p_list=[0.03, 0.05, 0.08],
                           shots=500, seed=61, decoder="bposd", osd_order=1,
                           audit_shots=0)
    rep = bench.run_ler_experiment(cfg)
    for row in rep.rows:
        assert row.stderr == np.sqrt(row.ler * (1 - row.ler) / row.shots)
    report(14, f"all {len(rep.rows)} report rows carry stderr = sqrt(p(1-p)/n) exactly")
