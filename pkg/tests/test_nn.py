import os

import numpy as np
import pytest

from bbdec import nn
from bbdec.nn import AdamState, AttentionParams, Tensor


def rng64(seed=0):
    return np.random.default_rng(seed)


def finite_diff(f, x: np.ndarray, h=1e-4):
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        orig = x[i]
        x[i] = orig + h
        fp = f()
        x[i] = orig - h
        fm = f()
        x[i] = orig
        g[i] = (fp - fm) / (2 * h)
    return g


def relative_error(fd: np.ndarray, ad: np.ndarray) -> float:
    # floor keeps exactly-zero gradients (softmax shift invariances) from
    # amplifying finite-difference roundoff into fake mismatches
    denom = np.maximum(np.maximum(np.abs(fd), np.abs(ad)), 1e-3)
    return float((np.abs(fd - ad) / denom).max())


def check_grad(build, *tensors, tol=1e-5):
    """build() -> scalar Tensor touching the given float64 tensors."""
    loss = build()
    nn.backward(loss)
    for t in tensors:
        fd = finite_diff(lambda: build().item(), t.data)
        rel = relative_error(fd, t.grad)
        assert rel < tol, f"gradient mismatch: {rel:.2e}"
        t.grad = None


def t64(arr, requires_grad=True):
    return Tensor(np.asarray(arr, dtype=np.float64), requires_grad=requires_grad)


def test_grad_matmul_add_mul():
    r = rng64(1)
    a = t64(r.normal(size=(3, 4)))
    b = t64(r.normal(size=(4, 5)))
    c = t64(r.normal(size=(5,)))
    check_grad(lambda: nn.tsum(nn.mul(nn.add(nn.matmul(a, b), c), nn.add(nn.matmul(a, b), c))), a, b, c)


def test_grad_broadcast_matmul():
    r = rng64(2)
    a = t64(r.normal(size=(2, 3, 4)))
    w = t64(r.normal(size=(4, 4)))
    check_grad(lambda: nn.tsum(nn.matmul(a, w)), a, w)


def test_grad_softmax_log_exp_tanh_sigmoid_gelu_pow():
    r = rng64(3)
    x = t64(r.normal(size=(4, 5)))
    check_grad(lambda: nn.tsum(nn.mul(nn.softmax(x), nn.softmax(x))), x)
    y = t64(np.abs(r.normal(size=(6,))) + 0.5)
    check_grad(lambda: nn.tsum(nn.log(y)), y)
    z = t64(r.normal(size=(6,)))
    check_grad(lambda: nn.tsum(nn.exp(z)), z)
    check_grad(lambda: nn.tsum(nn.tanh(z)), z)
    check_grad(lambda: nn.tsum(nn.sigmoid(z)), z)
    check_grad(lambda: nn.tsum(nn.gelu(z)), z)
    check_grad(lambda: nn.tsum(nn.power(y, -0.5)), y)


def test_grad_layer_norm():
    r = rng64(4)
    x = t64(r.normal(size=(3, 8)))
    g = t64(r.normal(size=(8,)))
    b = t64(r.normal(size=(8,)))
    check_grad(lambda: nn.tsum(nn.mul(nn.layer_norm(x, g, b), nn.layer_norm(x, g, b))), x, g, b)


def test_grad_embedding_concat_slice():
    r = rng64(5)
    table = t64(r.normal(size=(4, 6)))
    idx = np.array([[0, 2, 2], [3, 1, 0]])

    def build():
        e = nn.embedding(table, idx)
        c = nn.concat([e, e], axis=-2)
        s = nn.slice_axis(c, -2, 1, 4)
        return nn.tsum(nn.mul(s, s))

    check_grad(build, table)


def _attn_params64(d_m, heads, r):
    mk = lambda shape: t64(r.normal(size=shape) * 0.3)
    return AttentionParams(
        n_heads=heads,
        wq=mk((d_m, d_m)), bq=mk((d_m,)),
        wk=mk((d_m, d_m)), bk=mk((d_m,)),
        wv=mk((d_m, d_m)), bv=mk((d_m,)),
        wo=mk((d_m, d_m)), bo=mk((d_m,)),
    )


def test_grad_attention():
    r = rng64(6)
    p = _attn_params64(8, 2, r)
    x = t64(r.normal(size=(3, 8)))
    kv = t64(r.normal(size=(5, 8)))
    mask = np.zeros((3, 5))
    mask[0, 4] = -1e30
    tensors = [x, kv, p.wq, p.bq, p.wk, p.bk, p.wv, p.bv, p.wo, p.bo]
    check_grad(lambda: nn.tsum(nn.mul(nn.attention(x, kv, p, mask),
                                      nn.attention(x, kv, p, mask))), *tensors)


def test_attention_matches_double_loop_reference():
    r = rng64(7)
    d_m, heads = 8, 2
    d_k = d_m // heads
    p = _attn_params64(d_m, heads, r)
    x = r.normal(size=(3, d_m))
    kv = r.normal(size=(4, d_m))
    out = nn.attention(Tensor(x.astype(np.float64)), Tensor(kv.astype(np.float64)), p).data

    want = np.zeros((3, d_m))
    for h in range(heads):
        sl = slice(h * d_k, (h + 1) * d_k)
        q = x @ p.wq.data[:, sl] + p.bq.data[sl]
        k = kv @ p.wk.data[:, sl] + p.bk.data[sl]
        v = kv @ p.wv.data[:, sl] + p.bv.data[sl]
        for i in range(3):
            beta = np.array([q[i] @ k[j] / np.sqrt(d_k) for j in range(4)])
            alpha = np.exp(beta - beta.max())
            alpha /= alpha.sum()
            ctx = sum(alpha[j] * v[j] for j in range(4))
            want[i] += ctx @ p.wo.data[sl, :]
    want += p.bo.data
    assert np.abs(out - want).max() < 1e-6


def test_attention_diagonal_mask_isolates_tokens():
    r = rng64(8)
    d_m, heads, n = 8, 2, 4
    p = _attn_params64(d_m, heads, r)
    x = Tensor(r.normal(size=(n, d_m)))
    mask = np.full((n, n), -1e30)
    np.fill_diagonal(mask, 0.0)
    out = nn.attention(x, x, p, mask).data
    # with attention pinned to the diagonal, each row is W(V(x_i)) + b
    d_k = d_m // heads
    for i in range(n):
        want = p.bo.data.copy()
        for h in range(heads):
            sl = slice(h * d_k, (h + 1) * d_k)
            v = x.data[i] @ p.wv.data[:, sl] + p.bv.data[sl]
            want = want + v @ p.wo.data[sl, :]
        assert np.abs(out[i] - want).max() < 1e-6


def test_softmax_rows_and_masked_zeros():
    r = rng64(9)
    x = r.normal(size=(5, 7))
    x[2, 3] = -1e30
    x[4, :3] = -1e30
    out = nn.softmax(Tensor(x)).data
    assert np.abs(out.sum(axis=-1) - 1).max() < 1e-6
    assert out[2, 3] == 0.0
    assert (out[4, :3] == 0.0).all()


def test_uniform_rows_for_equal_inputs():
    x = np.ones((3, 4)) * 0.7
    out = nn.softmax(Tensor(x)).data
    assert np.abs(out - 0.25).max() < 1e-12


def test_layer_norm_constant_vector_zeroes():
    x = Tensor(np.full((2, 6), 3.25))
    out = nn.layer_norm(x, Tensor(np.ones(6)), Tensor(np.zeros(6))).data
    assert np.abs(out).max() < 1e-3  # eps keeps it near but not exactly zero


def test_layer_norm_standardizes():
    r = rng64(10)
    x = r.normal(2.0, 3.0, size=(4, 16))
    out = nn.layer_norm(Tensor(x), Tensor(np.ones(16)), Tensor(np.zeros(16))).data
    assert np.abs(out.mean(axis=-1)).max() < 1e-6
    assert np.abs(out.var(axis=-1) - 1).max() < 1e-2
    # reference computation
    want = (x - x.mean(-1, keepdims=True)) / np.sqrt(x.var(-1, keepdims=True) + 1e-5)
    assert np.abs(out - want).max() < 1e-5


def test_gelu_values():
    assert nn.gelu(Tensor(np.zeros(3))).data.max() == 0.0
    big = nn.gelu(Tensor(np.array([20.0]))).data[0]
    assert abs(big - 20.0) < 1e-6


def test_feed_forward_zero_input_zero_bias():
    r = rng64(20)
    w1 = Tensor(r.normal(size=(6, 12)))
    w2 = Tensor(r.normal(size=(12, 6)))
    zb1, zb2 = Tensor(np.zeros(12)), Tensor(np.zeros(6))
    out = nn.feed_forward(Tensor(np.zeros((3, 6))), w1, zb1, w2, zb2)
    assert not out.data.any()


def test_feed_forward_matches_reference():
    r = rng64(21)
    x = r.normal(size=(4, 6))
    w1, b1 = r.normal(size=(6, 12)), r.normal(size=(12,))
    w2, b2 = r.normal(size=(12, 6)), r.normal(size=(6,))
    out = nn.feed_forward(Tensor(x), Tensor(w1), Tensor(b1), Tensor(w2), Tensor(b2)).data
    h = x @ w1 + b1
    c = 0.7978845608028654
    g = 0.5 * h * (1 + np.tanh(c * (h + 0.044715 * h**3)))
    want = g @ w2 + b2
    assert np.abs(out - want).max() < 1e-6


def test_feed_forward_grad():
    r = rng64(22)
    x = t64(r.normal(size=(3, 6)))
    w1, b1 = t64(r.normal(size=(6, 12))), t64(r.normal(size=(12,)))
    w2, b2 = t64(r.normal(size=(12, 6))), t64(r.normal(size=(6,)))
    check_grad(lambda: nn.tsum(nn.mul(nn.feed_forward(x, w1, b1, w2, b2),
                                      nn.feed_forward(x, w1, b1, w2, b2))),
               x, w1, b1, w2, b2)


def test_backward_linear_grad_is_input():
    x = np.array([1.0, -2.0, 3.0])
    w = t64([0.5, 0.5, 0.5])
    loss = nn.tsum(nn.mul(w, Tensor(x.astype(np.float64))))
    nn.backward(loss)
    assert np.array_equal(w.grad, x)


def test_backward_deterministic():
    r = rng64(11)
    a_data = r.normal(size=(4, 4))

    def run():
        a = t64(a_data.copy())
        p = _attn_params64(4, 2, rng64(12))
        out = nn.attention(a, a, p)
        loss = nn.tsum(nn.mul(out, out))
        nn.backward(loss)
        return a.grad.copy()

    assert np.array_equal(run(), run())


def test_double_backward_rejected():
    w = t64([1.0, 2.0])
    loss = nn.tsum(nn.mul(w, w))
    nn.backward(loss)
    with pytest.raises(RuntimeError, match="forward"):
        nn.backward(loss)


def test_dropout_inference_identity_train_scales():
    r = rng64(13)
    x = Tensor(r.normal(size=(100,)))
    assert nn.dropout(x, 0.1, None, train=False) is x
    out = nn.dropout(x, 0.5, np.random.default_rng(1), train=True).data
    kept = out != 0
    assert 0.2 < kept.mean() < 0.8
    assert np.allclose(out[kept], x.data[kept] * 2.0)


def test_adam_zero_grad_keeps_params():
    p = Tensor(np.array([1.0, 2.0], dtype=np.float32), requires_grad=True)
    p.grad = np.zeros(2, dtype=np.float32)
    st = AdamState(lr=0.1)
    nn.adam_step({"p": p}, st)
    assert st.step == 1
    assert np.array_equal(p.data, [1.0, 2.0])


def test_adam_first_step_magnitude():
    p = Tensor(np.array([0.0], dtype=np.float64), requires_grad=True)
    p.grad = np.array([1.0])
    nn.adam_step({"p": p}, AdamState(lr=0.1))
    assert abs(p.data[0] + 0.1) < 1e-6


def test_adam_optimizes_quadratic():
    r = rng64(14)
    w = t64(r.normal(size=(5,)))
    target = np.arange(5.0)
    losses = []
    st = AdamState(lr=0.1)
    params = {"w": w}
    for _ in range(300):
        nn.zero_grads(params)
        diff = nn.add(w, Tensor(-target))
        loss = nn.tsum(nn.mul(diff, diff))
        nn.backward(loss)
        nn.adam_step(params, st)
        losses.append(loss.item())
    assert losses[-1] < losses[0] * 0.01
    # strictly decreasing through the descent once the moments settle
    mid = losses[10:60]
    assert all(b < a for a, b in zip(mid, mid[1:]))


def test_lr_schedule():
    sch = nn.LrSchedule(base=1e-5, warmup_steps=1000, decay_exponent=0.0625)
    assert sch.at(500) == pytest.approx(5e-6)
    assert sch.at(1000) == pytest.approx(1e-5)
    assert sch.at(1001) == pytest.approx(1e-5)
    assert sch.at(1000 + 2**16) == pytest.approx(1e-5 / 2)


def test_checkpoint_roundtrip(tmp_path):
    r = rng64(15)
    tensors = {
        "a.w": r.normal(size=(3, 4)).astype(np.float32),
        "b": r.normal(size=(7,)).astype(np.float32),
        "scalarish": np.array([1.5], dtype=np.float32),
    }
    path = os.path.join(tmp_path, "ck.bin")
    nn.save_checkpoint(path, tensors)
    back = nn.load_checkpoint(path)
    assert set(back) == set(tensors)
    for k in tensors:
        assert back[k].dtype == np.float32
        assert np.array_equal(back[k], tensors[k])
    # bit-exact: saving the loaded dict reproduces the file
    path2 = os.path.join(tmp_path, "ck2.bin")
    nn.save_checkpoint(path2, back)
    assert open(path, "rb").read() == open(path2, "rb").read()


def test_checkpoint_bad_magic(tmp_path):
    path = os.path.join(tmp_path, "junk.bin")
    with open(path, "wb") as f:
        f.write(b"NOTACKPT" + b"\x00" * 16)
    with pytest.raises(ValueError, match="magic"):
        nn.load_checkpoint(path)
