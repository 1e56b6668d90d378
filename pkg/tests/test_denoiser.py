import pytest
import torch

from diffstyle import denoiser as dn
from diffstyle.denoiser import DenoiserConfig, Denoiser, DiffusionBatch
from diffstyle.diffusion import linear_schedule, q_sample

TINY = DenoiserConfig(layers=1, heads=2, dim=8, ff_dim=16, cond_len=3, target_len=4, dropout=0.0)


def tiny_model(config=TINY, vocab=11, seed=0, scale=None, dtype=torch.float64):
    torch.manual_seed(seed)
    m = Denoiser(config, vocab).to(dtype)
    if scale is not None:
        with torch.no_grad():
            for p in m.parameters():
                p.normal_(0.0, scale)
    return m.eval()


def tiny_batch(config=TINY, B=2, vocab=11, T=50, seed=1, dtype=torch.float64, ids_below=None):
    g = torch.Generator().manual_seed(seed)
    hi = ids_below or vocab
    return DiffusionBatch(
        cond_ids=torch.randint(0, hi, (B, config.cond_len), generator=g),
        target_ids=torch.randint(0, hi, (B, config.target_len), generator=g),
        t=torch.randint(1, T + 1, (B,), generator=g),
        noise=torch.randn(B, config.target_len, config.dim, generator=g, dtype=dtype),
    )


def test_embed_lookup():
    m = tiny_model()
    assert torch.equal(m.embed(torch.tensor([5])), m.embedding[5:6])
    rows = m.embed(torch.tensor([3, 3]))
    assert torch.equal(rows[0], rows[1])
    with pytest.raises(ValueError):
        m.embed(torch.tensor([11]))


def test_embed_tracks_table_updates():
    m = tiny_model()
    opt = torch.optim.SGD(m.parameters(), lr=0.5)
    batch = tiny_batch()
    k = int(batch.target_ids[0, 0])
    before = m.embed(torch.tensor([k])).detach().clone()
    dn.loss(m, batch, linear_schedule(50)).backward()
    opt.step()
    assert not torch.equal(before, m.embed(torch.tensor([k])))
    assert torch.equal(m.embed(torch.tensor([k])), m.embedding[k:k + 1])


def test_forward_shape_batched_and_unbatched():
    m = tiny_model()
    cond, tgt = torch.randn(5, 3, 8, dtype=torch.float64), torch.randn(5, 4, 8, dtype=torch.float64)
    assert m(cond, tgt, torch.arange(1, 6)).shape == (5, 4, 8)
    assert m(cond[0], tgt[0], 3).shape == (4, 8)
    with pytest.raises(ValueError):
        m(torch.randn(5, 2, 8, dtype=torch.float64), tgt, 1)


def test_zero_layer_is_projection_of_inputs():
    cfg = TINY.replace(layers=0)
    m = tiny_model(cfg)
    cond, tgt = torch.randn(3, 8, dtype=torch.float64), torch.randn(4, 8, dtype=torch.float64)
    t = 17
    h = torch.cat([cond, tgt]) + m.position + m.time_embed(torch.tensor([t]))[0]
    expected = m.out(h[3:])
    assert torch.allclose(m(cond, tgt, t), expected, atol=1e-14)


def test_condition_rows_reach_target_outputs():
    m = tiny_model(scale=0.3)
    cond, tgt = torch.randn(3, 8, dtype=torch.float64), torch.randn(4, 8, dtype=torch.float64)
    base = m(cond, tgt, 5)
    for row in range(3):
        bumped = cond.clone()
        bumped[row] += 0.1 * torch.randn(8, dtype=torch.float64)  # uniform shifts vanish under LayerNorm
        diff = (m(bumped, tgt, 5) - base).abs()
        assert diff.min(dim=-1).values.gt(0).all(), f"condition row {row} does not reach every target row"


def test_timestep_conditioning_is_live():
    m = tiny_model(scale=0.3)
    cond, tgt = torch.randn(3, 8, dtype=torch.float64), torch.randn(4, 8, dtype=torch.float64)
    assert not torch.allclose(m(cond, tgt, 3), m(cond, tgt, 40))


def test_eval_forward_deterministic_train_forward_stochastic():
    m = tiny_model(TINY.replace(dropout=0.5), scale=0.3)
    cond, tgt = torch.randn(3, 8, dtype=torch.float64), torch.randn(4, 8, dtype=torch.float64)
    assert torch.equal(m(cond, tgt, 4), m(cond, tgt, 4))
    m.train()
    assert not torch.equal(m(cond, tgt, 4), m(cond, tgt, 4))


@pytest.mark.parametrize("mask_pad", [True, False])
def test_pad_mask_flag(mask_pad):
    m = tiny_model(TINY.replace(mask_pad=mask_pad, layers=2), scale=0.3)
    ids = torch.tensor([[4, 0, 0]])
    tgt = torch.randn(1, 4, 8, dtype=torch.float64)
    out = m.denoise(ids, tgt, 3)
    with torch.no_grad():
        m.embedding[0] += torch.randn(8, dtype=torch.float64)
    # masked PAD keys are invisible to every target position
    assert torch.allclose(out, m.denoise(ids, tgt, 3), atol=1e-14) == mask_pad


@pytest.mark.parametrize("cfg,vocab", [(TINY, 11), (dn.DESK, 300), (dn.PAPER_SCALE, 1000), (TINY.replace(layers=0), 5)])
def test_parameter_count_formula(cfg, vocab):
    m = Denoiser(cfg, vocab)
    assert sum(p.numel() for p in m.parameters()) == dn.parameter_count(cfg, vocab)


def test_loss_zero_and_constant_offset(monkeypatch):
    m = tiny_model()
    batch = tiny_batch()
    s = linear_schedule(50)
    monkeypatch.setattr(m, "denoise", lambda ids, x, t: m.embed(batch.target_ids))
    assert dn.loss(m, batch, s).item() == 0.0
    monkeypatch.setattr(m, "denoise", lambda ids, x, t: m.embed(batch.target_ids) + 0.25)
    assert dn.loss(m, batch, s).item() == pytest.approx(0.0625, rel=1e-12)


def test_loss_matches_hand_summed_mse():
    cfg = TINY.replace(cond_len=2, target_len=2, dim=4, heads=2, ff_dim=8)
    m = tiny_model(cfg, scale=0.5)
    s = linear_schedule(50)
    batch = tiny_batch(cfg, B=1)
    x0 = m.embedding[batch.target_ids[0]]
    x_t = q_sample(s, x0, int(batch.t[0]), batch.noise[0])
    with torch.no_grad():
        pred = m(m.embedding[batch.cond_ids[0]], x_t, int(batch.t[0]))
    total = 0.0
    for i in range(2):
        for j in range(4):
            total += (pred[i, j].item() - x0[i, j].item()) ** 2
    assert dn.loss(m, batch, s).item() == pytest.approx(total / 8, rel=1e-12)


def test_unused_embedding_row_has_zero_gradient():
    m = tiny_model(scale=0.3)
    batch = tiny_batch(ids_below=6)
    grads = dn.gradients(m, batch, linear_schedule(50))
    assert torch.all(grads["embedding"][6:] == 0)
    assert grads["embedding"][:6].abs().sum() > 0


def test_gradients_scale_linearly():
    m = tiny_model(scale=0.3)
    batch, s = tiny_batch(), linear_schedule(50)
    g1 = dn.gradients(m, batch, s)
    params = list(m.parameters())
    g2 = torch.autograd.grad(2 * dn.loss(m, batch, s), params)
    for (name, a), b in zip(g1.items(), g2):
        assert torch.allclose(2 * a, b, rtol=1e-12, atol=0), name


def test_gradients_reject_non_finite_loss():
    m = tiny_model()
    with torch.no_grad():
        m.out.bias[0] = float("nan")
    with pytest.raises(FloatingPointError):
        dn.gradients(m, tiny_batch(), linear_schedule(50))


def central_differences(m, batch, schedule, h=1e-4):
    """Numerical gradient of the loss, one coordinate at a time."""
    out = {}
    with torch.no_grad():
        for name, p in m.named_parameters():
            g = torch.zeros_like(p)
            flat, gflat = p.view(-1), g.view(-1)
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + h
                up = dn.loss(m, batch, schedule).item()
                flat[i] = orig - h
                down = dn.loss(m, batch, schedule).item()
                flat[i] = orig
                gflat[i] = (up - down) / (2 * h)
            out[name] = g
    return out


def max_relative_error(analytic, numeric, floor=1e-6):
    denom = torch.maximum(torch.maximum(analytic.abs(), numeric.abs()), torch.full_like(analytic, floor))
    return ((analytic - numeric).abs() / denom).max().item()


def test_gradient_matches_finite_differences():
    m = tiny_model(scale=0.4)
    batch, s = tiny_batch(), linear_schedule(50)
    analytic = dn.gradients(m, batch, s)
    numeric = central_differences(m, batch, s)
    classes = {"embedding", "position", "time1", "time2", "attn.q", "attn.k", "attn.v", "attn.o",
               "norm1", "norm2", "ff1", "ff2", "out"}
    seen = {c for c in classes for name in analytic if c in name}
    assert seen == classes
    for name in analytic:
        assert max_relative_error(analytic[name], numeric[name]) < 1e-4, name
