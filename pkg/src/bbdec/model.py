"""Recurrent transformer decoder with code-aware self-attention.

One encoder/decoder iteration per detector layer. The encoder folds each
round's detector bits into a running memory under a mask derived from the
detector adjacency (log of the shared-mechanism counts); the decoder
autoregressively emits either latent vectors or logical-flip predictions,
depending on the curriculum stage. Training teacher-forces the flip
prefixes; inference is fully autoregressive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import faultsim as fs
from . import nn
from .nn import AttentionParams, Tensor

START_LATENT = 3  # token asking the decoder for a latent vector
START_PREDICT = 2  # token asking the decoder for flip predictions
NEG_INF = -1e30  # effective -inf that keeps float32 arithmetic finite


@dataclass
class ModelConfig:
    d_m: int = 256
    d_f: int = 512
    n_heads: int = 8
    n_enc_layers: int = 3
    n_dec_layers: int = 3
    c: int = 1  # latent predictions per round
    n_detector_slots: int = 72  # padded per-layer width
    n_logicals: int = 12
    n_layers: int = 9  # model iterations = detector layers (N_R + 3)
    use_mask: bool = True

    def __post_init__(self):
        if self.d_m % self.n_heads:
            raise ValueError("model dimension must be divisible by the head count")
        if self.c < 1:
            raise ValueError("need at least one latent prediction per round")


@dataclass
class StageConfig:
    """One curriculum stage (mirrors the stage-table schema)."""

    batch_size: int
    lr: float
    n_rounds: int  # noisy rounds in the training circuits
    n_latent_rounds: int  # rounds producing latent predictions (table N_H)
    p: float
    epochs: int
    c: int | None = None
    reset_optimizer: bool = True
    samples_per_epoch: int = 16384
    lr_schedule: nn.LrSchedule | None = None


def latent_iterations(stage_n_h: int, n_layers: int, n_rounds: int) -> int:
    """Map a stage's N_H (counted in noisy rounds) to model iterations.

    The detector layering adds boundary layers: iteration 0 consumes the
    deterministic prep layer and the last two iterations consume boundary
    layers. N_H = 0 predicts everywhere (sliding-window stage); 1 <= N_H <
    N_R makes the prep layer plus the first N_H rounds latent; N_H >= N_R
    clamps to all-but-final latent.
    """
    if stage_n_h <= 0:
        return 0
    if stage_n_h >= n_rounds:
        return n_layers - 1
    return stage_n_h + 1


# -- parameters ----------------------------------------------------------------


@dataclass
class EncoderLayerParams:
    attn: AttentionParams
    ln1_g: Tensor
    ln1_b: Tensor
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor
    ln2_g: Tensor
    ln2_b: Tensor


@dataclass
class DecoderLayerParams:
    self_attn: AttentionParams
    ln1_g: Tensor
    ln1_b: Tensor
    cross_prev: AttentionParams
    ln2_g: Tensor
    ln2_b: Tensor
    cross_enc: AttentionParams
    ln3_g: Tensor
    ln3_b: Tensor
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor
    ln4_g: Tensor
    ln4_b: Tensor


@dataclass
class ModelParams:
    emb_d: Tensor  # {0,1} detector embedding
    pos_d: Tensor  # detector slot positions
    emb_e: Tensor  # {0,1} flips + control tokens 2,3
    pos_e: Tensor  # flip positions
    encoder: list[EncoderLayerParams]
    decoder: list[DecoderLayerParams]
    readout: Tensor  # (d_m, 1)

    def named(self) -> dict[str, Tensor]:
        out = {
            "emb_d": self.emb_d,
            "pos_d": self.pos_d,
            "emb_e": self.emb_e,
            "pos_e": self.pos_e,
            "readout": self.readout,
        }
        for i, lay in enumerate(self.encoder):
            out.update(lay.attn.named(f"enc{i}.attn"))
            for k in ("ln1_g", "ln1_b", "w1", "b1", "w2", "b2", "ln2_g", "ln2_b"):
                out[f"enc{i}.{k}"] = getattr(lay, k)
        for i, lay in enumerate(self.decoder):
            out.update(lay.self_attn.named(f"dec{i}.self_attn"))
            out.update(lay.cross_prev.named(f"dec{i}.cross_prev"))
            out.update(lay.cross_enc.named(f"dec{i}.cross_enc"))
            for k in ("ln1_g", "ln1_b", "ln2_g", "ln2_b", "ln3_g", "ln3_b",
                      "w1", "b1", "w2", "b2", "ln4_g", "ln4_b"):
                out[f"dec{i}.{k}"] = getattr(lay, k)
        return out


def _attn_params(d_m: int, n_heads: int, rng, dtype) -> AttentionParams:
    p = lambda shape: nn.param(shape, rng, 0.02, dtype)
    z = lambda shape: nn.zeros_param(shape, dtype)
    return AttentionParams(
        n_heads=n_heads,
        wq=p((d_m, d_m)), bq=z((d_m,)),
        wk=p((d_m, d_m)), bk=z((d_m,)),
        wv=p((d_m, d_m)), bv=z((d_m,)),
        wo=p((d_m, d_m)), bo=z((d_m,)),
    )


def init_params(cfg: ModelConfig, seed: int, dtype=np.float32) -> ModelParams:
    rng = np.random.Generator(np.random.Philox(key=np.array([seed, 0x6D6F64], dtype=np.uint64)))
    p = lambda shape: nn.param(shape, rng, 0.02, dtype)
    g1 = lambda shape: nn.ones_param(shape, dtype)
    z = lambda shape: nn.zeros_param(shape, dtype)
    d_m, d_f = cfg.d_m, cfg.d_f

    def enc_layer():
        return EncoderLayerParams(
            attn=_attn_params(d_m, cfg.n_heads, rng, dtype),
            ln1_g=g1((d_m,)), ln1_b=z((d_m,)),
            w1=p((d_m, d_f)), b1=z((d_f,)), w2=p((d_f, d_m)), b2=z((d_m,)),
            ln2_g=g1((d_m,)), ln2_b=z((d_m,)),
        )

    def dec_layer():
        return DecoderLayerParams(
            self_attn=_attn_params(d_m, cfg.n_heads, rng, dtype),
            ln1_g=g1((d_m,)), ln1_b=z((d_m,)),
            cross_prev=_attn_params(d_m, cfg.n_heads, rng, dtype),
            ln2_g=g1((d_m,)), ln2_b=z((d_m,)),
            cross_enc=_attn_params(d_m, cfg.n_heads, rng, dtype),
            ln3_g=g1((d_m,)), ln3_b=z((d_m,)),
            w1=p((d_m, d_f)), b1=z((d_f,)), w2=p((d_f, d_m)), b2=z((d_m,)),
            ln4_g=g1((d_m,)), ln4_b=z((d_m,)),
        )

    return ModelParams(
        emb_d=p((2, d_m)),
        pos_d=z((cfg.n_detector_slots, d_m)),
        emb_e=p((4, d_m)),
        pos_e=z((max(cfg.n_logicals, 1), d_m)),
        encoder=[enc_layer() for _ in range(cfg.n_enc_layers)],
        decoder=[dec_layer() for _ in range(cfg.n_dec_layers)],
        readout=p((d_m, 1)),
    )


def count_parameters(params: ModelParams) -> int:
    return sum(t.data.size for t in params.named().values())


# -- masks ----------------------------------------------------------------------


def build_code_aware_mask(dem: fs.DetectorErrorModel) -> tuple[np.ndarray, list[np.ndarray]]:
    """log(D D^T) over all detectors, plus its per-layer restrictions.

    (D D^T)_{ij} counts the mechanisms flipping both detectors i and j
    (length-two paths on the space-time Tanner graph); log(0) maps to an
    effective -inf so masked pairs get exactly zero attention. Padded slots
    attend only to themselves, as do detectors no mechanism touches.
    """
    n = dem.n_detectors
    counts = np.zeros((n, n), dtype=np.int64)
    for mech in dem.mechanisms:
        idx = list(mech.detectors)
        if idx:
            counts[np.ix_(idx, idx)] += 1
    full = np.where(counts > 0, np.log(np.maximum(counts, 1)), NEG_INF).astype(np.float64)
    layers = []
    width = dem.layer_width
    for slots in dem.layer_slots():
        block = np.full((width, width), NEG_INF)
        np.fill_diagonal(block, 0.0)
        real = [(s, d) for s, d in enumerate(slots) if d >= 0]
        for s1, d1 in real:
            for s2, d2 in real:
                if counts[d1, d2] > 0:
                    block[s1, s2] = math.log(counts[d1, d2])
        for s1, d1 in real:
            if counts[d1, d1] == 0:
                block[s1, s1] = 0.0  # untouched detector: keep softmax finite
        layers.append(block)
    return full, layers


def build_plain_mask(dem: fs.DetectorErrorModel) -> list[np.ndarray]:
    """Ablation variant: no code information, only padding hygiene."""
    width = dem.layer_width
    layers = []
    for slots in dem.layer_slots():
        block = np.full((width, width), NEG_INF)
        np.fill_diagonal(block, 0.0)
        real = [s for s, d in enumerate(slots) if d >= 0]
        for s1 in real:
            for s2 in real:
                block[s1, s2] = 0.0
        layers.append(block)
    return layers


def causal_mask(n: int) -> np.ndarray:
    m = np.zeros((n, n))
    m[np.triu_indices(n, k=1)] = NEG_INF
    return m


# -- forward passes --------------------------------------------------------------


@dataclass
class _Ctx:
    """Per-call context: dropout source and train/inference switch."""

    train: bool = False
    rng: np.random.Generator | None = None
    drop: float = 0.1

    def dropout(self, x: Tensor) -> Tensor:
        if not self.train:
            return x
        return nn.dropout(x, self.drop, self.rng, True)


def _ffn(x: Tensor, w1, b1, w2, b2, ctx: _Ctx) -> Tensor:
    return nn.feed_forward(x, w1, b1, w2, b2, rng=ctx.rng, train=ctx.train, drop=ctx.drop)


def encoder_step(m_prev: Tensor, d_layer: np.ndarray, params: ModelParams,
                 mask: np.ndarray, ctx: _Ctx) -> Tensor:
    """One encoder iteration: fold a detector layer into the memory.

    d_layer: (..., N_D) bits. Returns the updated memory (..., N_D, d_m).
    """
    x = nn.add(nn.add(m_prev, nn.embedding(params.emb_d, d_layer)),
               nn.embedding(params.pos_d, np.arange(d_layer.shape[-1])))
    for lay in params.encoder:
        a = nn.attention(x, x, lay.attn, mask)
        x = nn.layer_norm(nn.add(x, ctx.dropout(a)), lay.ln1_g, lay.ln1_b)
        f = _ffn(x, lay.w1, lay.b1, lay.w2, lay.b2, ctx)
        x = nn.layer_norm(nn.add(x, ctx.dropout(f)), lay.ln2_g, lay.ln2_b)
    return x


def encoder_initial(params: ModelParams, cfg: ModelConfig, batch_shape=()) -> Tensor:
    zeros = np.zeros(batch_shape + (cfg.n_detector_slots,), dtype=np.int64)
    return nn.add(nn.embedding(params.emb_d, zeros),
                  nn.embedding(params.pos_d, np.arange(cfg.n_detector_slots)))


def decoder_initial(params: ModelParams, cfg: ModelConfig, batch_shape=()) -> Tensor:
    zeros = np.zeros(batch_shape + (cfg.n_logicals,), dtype=np.int64)
    return nn.add(nn.embedding(params.emb_e, zeros),
                  nn.embedding(params.pos_e, np.arange(cfg.n_logicals)))


def decoder_block(seq: Tensor, m_enc: Tensor, h_prev: Tensor, params: ModelParams,
                  ctx: _Ctx, causal: np.ndarray | None = None) -> Tensor:
    """The decoder stack over a query sequence.

    Self-attention (autoregressive when a causal mask is given), cross-
    attention against the previous round's decoder output, cross-attention
    against the encoder memory, then the feed-forward, each with add&norm.
    """
    y = seq
    for lay in params.decoder:
        a = nn.attention(y, y, lay.self_attn, causal)
        y = nn.layer_norm(nn.add(y, ctx.dropout(a)), lay.ln1_g, lay.ln1_b)
        a = nn.attention(y, h_prev, lay.cross_prev)
        y = nn.layer_norm(nn.add(y, ctx.dropout(a)), lay.ln2_g, lay.ln2_b)
        a = nn.attention(y, m_enc, lay.cross_enc)
        y = nn.layer_norm(nn.add(y, ctx.dropout(a)), lay.ln3_g, lay.ln3_b)
        f = _ffn(y, lay.w1, lay.b1, lay.w2, lay.b2, ctx)
        y = nn.layer_norm(nn.add(y, ctx.dropout(f)), lay.ln4_g, lay.ln4_b)
    return y


def decoder_step_latent(h_prev: Tensor, m_enc: Tensor, params: ModelParams, c: int,
                        ctx: _Ctx, batch_shape=()) -> Tensor:
    """Generate c latent vectors sequentially from the start token."""
    start = np.full(batch_shape + (1,), START_LATENT, dtype=np.int64)
    seq = nn.embedding(params.emb_e, start)
    outputs = []
    for k in range(c):
        y = decoder_block(seq, m_enc, h_prev, params, ctx, causal_mask(k + 1))
        h_k = nn.slice_axis(y, -2, k, k + 1)
        outputs.append(h_k)
        if k + 1 < c:
            seq = nn.concat([seq, h_k], axis=-2)
    return outputs[0] if c == 1 else nn.concat(outputs, axis=-2)


def decoder_step_predict(prefix_bits: np.ndarray, m_enc: Tensor, h_prev: Tensor,
                         params: ModelParams, ctx: _Ctx) -> tuple[Tensor, Tensor]:
    """Teacher-forced prediction pass over all flip positions at once.

    prefix_bits: (..., N_L) ground-truth flips; position k sees the start
    token followed by bits < k. Returns (h vectors (..., N_L, d_m),
    logits (..., N_L)).
    """
    n_l = prefix_bits.shape[-1]
    tokens = np.concatenate(
        [np.full(prefix_bits.shape[:-1] + (1,), START_PREDICT, dtype=np.int64),
         prefix_bits[..., : n_l - 1].astype(np.int64)],
        axis=-1,
    )
    seq = nn.add(nn.embedding(params.emb_e, tokens),
                 nn.embedding(params.pos_e, np.arange(n_l)))
    y = decoder_block(seq, m_enc, h_prev, params, ctx, causal_mask(n_l))
    logits = nn.reshape(nn.matmul(y, params.readout), y.data.shape[:-1])
    return y, logits


def embed_flips(bits: np.ndarray, params: ModelParams) -> Tensor:
    n_l = bits.shape[-1]
    return nn.add(nn.embedding(params.emb_e, bits.astype(np.int64)),
                  nn.embedding(params.pos_e, np.arange(n_l)))


def bce_from_logits(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean binary cross-entropy, numerically stable in the logits."""
    t = targets.astype(logits.data.dtype)
    # softplus(z) - t*z  ==  -[t log s(z) + (1-t) log(1-s(z))],
    # with softplus(z) = (z + |z|)/2 + log1p(exp(-|z|)) staying finite
    z = logits
    absz = _abs(z)
    softplus = nn.add(nn.mul(nn.add(z, absz), 0.5),
                      _log1p_exp_neg(absz))
    per_bit = nn.add(softplus, nn.mul(z, nn.Tensor(-t)))
    return nn.tmean(per_bit)


def _abs(z: Tensor) -> Tensor:
    sign = np.sign(z.data)
    out = np.abs(z.data)

    def bw(g):
        nn._accum(z, g * sign)

    return nn._make(out, (z,), bw)


def _log1p_exp_neg(absz: Tensor) -> Tensor:
    e = np.exp(-absz.data)
    out = np.log1p(e)

    def bw(g):
        nn._accum(absz, -g * e / (1.0 + e))

    return nn._make(out, (absz,), bw)


# -- the assembled decoder -------------------------------------------------------


class RecurrentDecoder:
    """Config + parameters + per-layer masks, with the full recurrence."""

    def __init__(self, cfg: ModelConfig, params: ModelParams,
                 layer_masks: list[np.ndarray], n_latent: int | None = None):
        if len(layer_masks) != cfg.n_layers:
            raise ValueError(
                f"model expects {cfg.n_layers} detector layers, masks give {len(layer_masks)}"
            )
        self.cfg = cfg
        self.params = params
        self.layer_masks = layer_masks
        # inference default: latent everywhere but the final iteration
        self.n_latent = cfg.n_layers - 1 if n_latent is None else n_latent

    @classmethod
    def fresh(cls, cfg: ModelConfig, dem: fs.DetectorErrorModel, seed: int,
              dtype=np.float32) -> "RecurrentDecoder":
        masks = build_code_aware_mask(dem)[1] if cfg.use_mask else build_plain_mask(dem)
        return cls(cfg, init_params(cfg, seed, dtype), masks)

    def _run(self, layers: np.ndarray, n_latent: int, ctx: _Ctx,
             teacher_targets: np.ndarray | None = None):
        """Shared recurrence. layers: (..., T, W) bits.

        With teacher_targets (..., T, N_L), predicting iterations are
        teacher-forced within the round (truth prefixes) and per-iteration
        logits are returned; otherwise prediction is autoregressive on the
        model's own bits. Either way, the flips fed forward as the next
        round's context are the model's thresholded outputs, so the
        recurrence the optimizer sees is the one inference runs.
        """
        cfg = self.cfg
        T = cfg.n_layers
        if layers.shape[-2] != T:
            raise ValueError(f"shot has {layers.shape[-2]} detector layers, model wants {T}")
        if layers.shape[-1] != cfg.n_detector_slots:
            raise ValueError(f"layer width {layers.shape[-1]} != {cfg.n_detector_slots}")
        batch_shape = layers.shape[:-2]
        m = encoder_initial(self.params, cfg, batch_shape)
        h_prev = decoder_initial(self.params, cfg, batch_shape)
        logits_per_iter: dict[int, Tensor] = {}
        bits_per_iter: dict[int, np.ndarray] = {}
        for t in range(T):
            m = encoder_step(m, layers[..., t, :].astype(np.int64), self.params,
                             self.layer_masks[t], ctx)
            if t < n_latent:
                h_prev = decoder_step_latent(h_prev, m, self.params, cfg.c, ctx, batch_shape)
            else:
                if teacher_targets is not None:
                    target_bits = teacher_targets[..., t, :]
                    _, logits = decoder_step_predict(target_bits, m, h_prev, self.params, ctx)
                    logits_per_iter[t] = logits
                    bits = (logits.data >= 0).astype(np.int64)
                else:
                    bits, logits = self._autoregress(m, h_prev, ctx, batch_shape)
                    logits_per_iter[t] = logits
                    bits_per_iter[t] = bits
                h_prev = embed_flips(bits, self.params)
        return logits_per_iter, bits_per_iter

    def _autoregress(self, m_enc: Tensor, h_prev: Tensor, ctx: _Ctx, batch_shape):
        cfg = self.cfg
        n_l = cfg.n_logicals
        bits = np.zeros(batch_shape + (n_l,), dtype=np.int64)
        logits_rows = None
        for k in range(n_l):
            _, logits = decoder_step_predict(bits, m_enc, h_prev, self.params, ctx)
            lam_k = 1.0 / (1.0 + np.exp(-logits.data[..., k]))
            bits[..., k] = (lam_k >= 0.5).astype(np.int64)
            logits_rows = logits
        return bits, logits_rows

    def predict(self, layers: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Decode one shot (or a batch): layers (..., T, W) -> (e_hat, lam)."""
        ctx = _Ctx(train=False)
        logits_per_iter, bits_per_iter = self._run(layers, self.n_latent, ctx)
        t_final = self.cfg.n_layers - 1
        lam = 1.0 / (1.0 + np.exp(-logits_per_iter[t_final].data))
        return bits_per_iter[t_final].astype(np.uint8), lam

    def compute_loss(self, batch: fs.TrainingBatch, n_latent: int,
                     train: bool, rng: np.random.Generator | None) -> Tensor:
        """Mean per-bit BCE over the predicting iterations (teacher-forced)."""
        ctx = _Ctx(train=train, rng=rng)
        logits_per_iter, _ = self._run(batch.layers, n_latent, ctx,
                                       teacher_targets=batch.targets)
        losses = [
            bce_from_logits(logits, batch.targets[..., t, :])
            for t, logits in sorted(logits_per_iter.items())
        ]
        total = losses[0]
        for l in losses[1:]:
            total = nn.add(total, l)
        return nn.mul(total, 1.0 / len(losses))


# -- training ---------------------------------------------------------------------


@dataclass
class TraceRow:
    stage: int
    epoch: int
    step: int
    loss: float


def train_curriculum(decoder: RecurrentDecoder, stages: list[StageConfig],
                     sampler_factory, seed: int) -> list[TraceRow]:
    """Run the multi-stage curriculum; returns the per-step loss trace.

    sampler_factory(stage) must yield a function (n, seed) -> TrainingBatch
    drawn at the stage's error rate and round count (fresh shots per epoch:
    the unlimited-data regime).
    """
    params = decoder.params.named()
    trace: list[TraceRow] = []
    opt = nn.AdamState(lr=stages[0].lr if stages else 1e-3)
    rng = np.random.Generator(np.random.Philox(key=np.array([seed, 0x7472], dtype=np.uint64)))
    for si, stage in enumerate(stages):
        if stage.c is not None and stage.c != decoder.cfg.c:
            decoder.cfg.c = stage.c
        if stage.reset_optimizer or si == 0:
            opt = nn.AdamState(lr=stage.lr, schedule=stage.lr_schedule)
        else:
            opt.lr = stage.lr
            opt.schedule = stage.lr_schedule
        sample = sampler_factory(stage)
        n_latent = latent_iterations(stage.n_latent_rounds, decoder.cfg.n_layers,
                                     stage.n_rounds)
        steps_per_epoch = max(stage.samples_per_epoch // stage.batch_size, 1)
        for epoch in range(stage.epochs):
            batch_all = sample(stage.samples_per_epoch, seed + 7919 * si + epoch)
            for step in range(steps_per_epoch):
                lo = step * stage.batch_size
                hi = lo + stage.batch_size
                batch = fs.TrainingBatch(batch_all.layers[lo:hi], batch_all.targets[lo:hi])
                nn.zero_grads(params)
                loss = decoder.compute_loss(batch, n_latent, train=True, rng=rng)
                nn.backward(loss)
                nn.adam_step(params, opt)
                trace.append(TraceRow(si, epoch, step, loss.item()))
    return trace


def moving_average(values, window: int = 50) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    if len(v) == 0:
        return v
    kernel = np.ones(min(window, len(v))) / min(window, len(v))
    return np.convolve(v, kernel, mode="valid")


# -- checkpointing -----------------------------------------------------------------


def save_model(path: str, decoder: RecurrentDecoder) -> None:
    cfg = decoder.cfg
    tensors = dict(decoder.params.named())
    tensors["__config__"] = np.array(
        [cfg.d_m, cfg.d_f, cfg.n_heads, cfg.n_enc_layers, cfg.n_dec_layers, cfg.c,
         cfg.n_detector_slots, cfg.n_logicals, cfg.n_layers, int(cfg.use_mask),
         decoder.n_latent],
        dtype=np.float32,
    )
    nn.save_checkpoint(path, tensors)


def load_model(path: str, dem: fs.DetectorErrorModel) -> RecurrentDecoder:
    tensors = nn.load_checkpoint(path)
    raw = tensors.pop("__config__").astype(int)
    cfg = ModelConfig(
        d_m=int(raw[0]), d_f=int(raw[1]), n_heads=int(raw[2]), n_enc_layers=int(raw[3]),
        n_dec_layers=int(raw[4]), c=int(raw[5]), n_detector_slots=int(raw[6]),
        n_logicals=int(raw[7]), n_layers=int(raw[8]), use_mask=bool(raw[9]),
    )
    if dem.n_layers != cfg.n_layers:
        raise ValueError(
            f"checkpoint was trained for {cfg.n_layers} detector layers but the "
            f"experiment has {dem.n_layers}; models do not transfer across round counts"
        )
    decoder = RecurrentDecoder.fresh(cfg, dem, seed=0)
    named = decoder.params.named()
    for name, arr in tensors.items():
        if name not in named:
            raise ValueError(f"checkpoint tensor {name!r} has no slot in the model")
        if named[name].data.shape != arr.shape:
            raise ValueError(f"checkpoint tensor {name!r} shape {arr.shape} != {named[name].data.shape}")
        named[name].data = arr.astype(named[name].data.dtype)
    decoder.n_latent = int(raw[10])
    return decoder
