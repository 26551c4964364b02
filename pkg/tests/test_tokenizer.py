import numpy as np
import pytest
import torch
from hypothesis import given, strategies as st

from whisperconv.tokenizer import (
    AlignmentRequiredError,
    FsqConfig,
    NumericError,
    RoleError,
    SeqModel,
    SeqModelConfig,
    SyntheticTeacher,
    Tokenizer,
    codes_to_indices,
    distill_loss,
    fsmn_apply,
    fsq_quantize,
    grad,
    indices_to_codes,
    load_tokenizer,
    make_optimizer,
    rope_rotate,
    save_tokenizer,
    tokenize,
    train_step,
    unified_loss,
)

from oracles import finite_difference, model_gradient_errors, relative_error

TINY = SeqModelConfig(feature_dim=6, embed_dim=2, dim_model=8, dim_ff=12, heads=2, layers=1, fsmn_left=1, fsmn_right=1)


def tiny_model(role="distilled", seed=0):
    torch.manual_seed(seed)
    return SeqModel(TINY, role).double()


# -- RoPE ---------------------------------------------------------------------


def test_rope_position_zero_is_identity():
    x = torch.randn(1, 8, dtype=torch.float64)
    assert torch.equal(rope_rotate(x, torch.tensor([0.0])), x)


def test_rope_preserves_pair_norms():
    x = torch.randn(7, 10, dtype=torch.float64)
    y = rope_rotate(x)
    nx = x.reshape(7, 5, 2).norm(dim=-1)
    ny = y.reshape(7, 5, 2).norm(dim=-1)
    assert torch.allclose(nx, ny, atol=1e-6)


def test_rope_rejects_odd_dim():
    with pytest.raises(ValueError):
        rope_rotate(torch.zeros(3, 5))


def test_rope_matches_explicit_rotation():
    x = torch.randn(4, 6, dtype=torch.float64)
    y = rope_rotate(x, base=100.0)
    for p in range(4):
        for i in range(3):
            a = p * 100.0 ** (-2 * i / 6)
            c, s = np.cos(a), np.sin(a)
            e, o = x[p, 2 * i].item(), x[p, 2 * i + 1].item()
            assert y[p, 2 * i].item() == pytest.approx(e * c - o * s, abs=1e-12)
            assert y[p, 2 * i + 1].item() == pytest.approx(e * s + o * c, abs=1e-12)


def test_rope_relative_position_property():
    gen = torch.Generator().manual_seed(3)
    for _ in range(50):
        q = torch.randn(1, 8, generator=gen, dtype=torch.float64)
        k = torch.randn(1, 8, generator=gen, dtype=torch.float64)
        m, n, s = (float(v) for v in torch.randint(0, 200, (3,), generator=gen))
        d1 = (rope_rotate(q, torch.tensor([m])) * rope_rotate(k, torch.tensor([n]))).sum()
        d2 = (rope_rotate(q, torch.tensor([m + s])) * rope_rotate(k, torch.tensor([n + s]))).sum()
        assert float(d1) == pytest.approx(float(d2), abs=1e-5)


# -- FSMN ---------------------------------------------------------------------


def test_fsmn_zero_coeffs_identity():
    h = torch.randn(5, 4, dtype=torch.float64)
    assert torch.equal(fsmn_apply(h, torch.zeros(3, 4, dtype=torch.float64), 1, 1), h)


def test_fsmn_single_frame_center_tap():
    h = torch.randn(1, 3, dtype=torch.float64)
    coeffs = torch.zeros(3, 3, dtype=torch.float64)
    coeffs[1] = 0.7
    assert torch.allclose(fsmn_apply(h, coeffs, 1, 1), h * 1.7)


@pytest.mark.parametrize("left,right", [(1, 1), (2, 0), (0, 3), (2, 2)])
def test_fsmn_matches_naive_loop(left, right):
    gen = torch.Generator().manual_seed(left * 10 + right)
    h = torch.randn(6, 5, generator=gen, dtype=torch.float64)
    coeffs = torch.randn(left + right + 1, 5, generator=gen, dtype=torch.float64)
    expected = h.clone()
    for t in range(6):
        for i in range(-left, right + 1):
            if 0 <= t + i < 6:
                expected[t] += coeffs[i + left] * h[t + i]
    assert torch.allclose(fsmn_apply(h, coeffs, left, right), expected, atol=1e-12)


def test_fsmn_tap_mismatch():
    with pytest.raises(ValueError):
        fsmn_apply(torch.zeros(4, 2), torch.zeros(2, 2), 1, 1)


# -- sequence model -------------------------------------------------------------


def test_zero_output_projection_gives_zero_embeddings():
    m = tiny_model()
    torch.nn.init.zeros_(m.output_proj.weight)
    torch.nn.init.zeros_(m.output_proj.bias)
    assert torch.count_nonzero(m(torch.randn(5, 6, dtype=torch.float64))) == 0


@pytest.mark.parametrize("frames", [1, 2, 7, 33])
def test_frame_count_preserved(frames):
    assert tiny_model()(torch.randn(frames, 6, dtype=torch.float64)).shape == (frames, 2)


def test_single_frame_attention_passes_values():
    m = tiny_model()
    att = m.blocks[0].attention
    x = torch.randn(1, 8, dtype=torch.float64)
    assert torch.allclose(att(x), att.out(att.v(x)), atol=1e-12)


def test_frame_swap_changes_output():
    m = tiny_model()
    x = torch.randn(5, 6, dtype=torch.float64)
    y = x[[1, 0, 2, 3, 4]]
    out_x, out_y = m(x), m(y)
    assert not torch.allclose(out_x[[1, 0, 2, 3, 4]], out_y, atol=1e-6)


def test_feature_dim_mismatch():
    with pytest.raises(ValueError):
        tiny_model()(torch.zeros(3, 5, dtype=torch.float64))


def test_role_is_immutable_and_checked():
    m = tiny_model()
    with pytest.raises(AttributeError):
        m.role = "w2n"
    with pytest.raises(ValueError):
        SeqModel(TINY, "teacher")
    d = m.derive("w2n")
    assert d.role == "w2n" and m.role == "distilled"
    x = torch.randn(3, 6, dtype=torch.float64)
    assert torch.equal(d(x), m(x))


def test_batched_forward_matches_unbatched():
    m = tiny_model()
    x = torch.randn(3, 5, 6, dtype=torch.float64)
    out = m(x)
    for b in range(3):
        assert torch.allclose(out[b], m(x[b]), atol=1e-12)


# -- FSQ ----------------------------------------------------------------------


def test_fsq_grid_fixed_point():
    cfg = FsqConfig((5, 4))
    grid = torch.tensor([[-2.0, -2.0], [0.0, 1.0], [2.0, 0.0]], dtype=torch.float64)
    z = cfg.unbound(grid)
    tok = fsq_quantize(z, cfg)
    assert torch.allclose(tok.dequantized, z, atol=1e-12)
    assert torch.allclose(cfg.bound(tok.dequantized), grid, atol=1e-9)


def test_fsq_three_levels_three_values():
    cfg = FsqConfig((3,))
    z = torch.linspace(-50, 50, 2001, dtype=torch.float64)[:, None]
    tok = fsq_quantize(z, cfg)
    assert len(torch.unique(tok.dequantized)) == 3
    assert sorted(torch.unique(tok.codes).tolist()) == [0, 1, 2]


def test_fsq_idempotent():
    cfg = FsqConfig()
    z = torch.randn(1000, 4, dtype=torch.float64) * 2
    t1 = fsq_quantize(z, cfg)
    t2 = fsq_quantize(t1.dequantized, cfg)
    assert torch.equal(t1.codes, t2.codes)


def test_fsq_codes_in_range_and_index_formula():
    cfg = FsqConfig((8, 5, 5, 5))
    tok = fsq_quantize(torch.randn(500, 4, dtype=torch.float64) * 3, cfg)
    levels = torch.tensor(cfg.levels)
    assert bool(((tok.codes >= 0) & (tok.codes < levels)).all())
    manual = tok.codes[:, 0] + 8 * tok.codes[:, 1] + 40 * tok.codes[:, 2] + 200 * tok.codes[:, 3]
    assert torch.equal(tok.indices, manual)
    assert torch.equal(indices_to_codes(tok.indices, cfg), tok.codes)


def test_fsq_all_codes_used():
    cfg = FsqConfig((5, 5))
    tok = fsq_quantize(torch.randn(10_000, 2, generator=torch.Generator().manual_seed(0), dtype=torch.float64), cfg)
    assert len(torch.unique(tok.indices)) == 25


def test_fsq_even_levels_cover_grid():
    cfg = FsqConfig((4, 2))
    tok = fsq_quantize(torch.randn(5000, 2, dtype=torch.float64) * 3, cfg)
    assert len(torch.unique(tok.indices)) == 8


def test_fsq_dim_mismatch():
    with pytest.raises(ValueError):
        fsq_quantize(torch.zeros(2, 3), FsqConfig((5, 5)))
    with pytest.raises(ValueError):
        FsqConfig((5, 1))


def test_fsq_straight_through_gradient_is_bound_derivative():
    cfg = FsqConfig((8, 5, 5, 5))
    z = torch.randn(4, 4, dtype=torch.float64, requires_grad=True)
    w = torch.randn(4, 4, dtype=torch.float64)
    (fsq_quantize(z, cfg).dequantized * w).sum().backward()
    numeric = finite_difference(lambda: (cfg.bound(z) * w).sum(), z)
    assert relative_error(z.grad, numeric) <= 1e-4


@given(st.lists(st.integers(0, 999), min_size=1, max_size=30))
def test_index_code_round_trip(indices):
    cfg = FsqConfig()
    idx = torch.tensor(indices)
    assert torch.equal(codes_to_indices(indices_to_codes(idx, cfg), cfg), idx)


# -- losses --------------------------------------------------------------------


def test_distill_loss_values():
    a = torch.randn(5, 3, dtype=torch.float64)
    assert float(distill_loss(a, a)) == 0.0
    assert float(distill_loss(torch.tensor([[3.0, 4.0]]), torch.zeros(1, 2))) == 25.0


def test_distill_loss_matches_naive_loop():
    a, b = np.random.default_rng(0).normal(size=(2, 7, 4))
    expected = sum(sum((a[t, k] - b[t, k]) ** 2 for k in range(4)) for t in range(7)) / 7
    assert float(distill_loss(torch.tensor(a), torch.tensor(b))) == pytest.approx(expected, abs=1e-6)


def test_distill_loss_shape_mismatch():
    with pytest.raises(ValueError):
        distill_loss(torch.zeros(3, 2), torch.zeros(3, 3))


def test_unified_loss_lambda_zero_is_distill():
    m = tiny_model()
    xp, xc = torch.randn(2, 5, 6, dtype=torch.float64)
    z = torch.randn(5, 2, dtype=torch.float64)
    with torch.no_grad():
        assert float(unified_loss(m, xp, xc, z, 0.0)) == pytest.approx(float(distill_loss(m(xp), z)), abs=1e-7)


def test_unified_loss_matches_naive():
    m = tiny_model()
    xp, xc = torch.randn(2, 4, 6, dtype=torch.float64)
    z = torch.randn(4, 2, dtype=torch.float64)
    op, oc = m(xp).detach().numpy(), m(xc).detach().numpy()
    zn = z.numpy()
    expected = ((op - zn) ** 2).sum(1).mean() + 0.3 * ((oc - zn) ** 2).sum(1).mean()
    with torch.no_grad():
        assert float(unified_loss(m, xp, xc, z, 0.3)) == pytest.approx(expected, abs=1e-6)


def test_unified_loss_zero_when_output_matches():
    m = tiny_model()
    x = torch.randn(4, 6, dtype=torch.float64)
    z = m(x).detach()
    with torch.no_grad():
        assert float(unified_loss(m, x, x, z, 0.7)) == pytest.approx(0.0, abs=1e-12)


def test_unified_loss_requires_alignment():
    m = tiny_model()
    with pytest.raises(AlignmentRequiredError):
        unified_loss(m, torch.zeros(4, 6, dtype=torch.float64), torch.zeros(5, 6, dtype=torch.float64), torch.zeros(4, 2), 0.5)


# -- gradients -----------------------------------------------------------------


def test_gradients_match_finite_differences_distill():
    m = tiny_model()
    x = torch.randn(4, 6, dtype=torch.float64)
    y = torch.randn(4, 2, dtype=torch.float64)
    errors = model_gradient_errors(m, lambda mm: distill_loss(mm(x), y))
    assert max(errors.values()) <= 1e-4, errors


def test_gradients_match_finite_differences_unified():
    m = tiny_model("w2n", seed=1)
    xp, xc = torch.randn(2, 4, 6, dtype=torch.float64)
    z = torch.randn(4, 2, dtype=torch.float64)
    errors = model_gradient_errors(m, lambda mm: unified_loss(mm, xp, xc, z, 0.5))
    assert max(errors.values()) <= 1e-4, errors


def test_zero_loss_gives_zero_gradients():
    m = tiny_model()
    x = torch.randn(4, 6, dtype=torch.float64)
    y = m(x).detach()
    assert all(float(g.abs().max()) == 0.0 for g in grad(m, lambda mm: distill_loss(mm(x), y)).values())


def test_output_projection_gradient_closed_form():
    m = tiny_model()
    torch.nn.init.zeros_(m.output_proj.weight)
    torch.nn.init.zeros_(m.output_proj.bias)
    x = torch.randn(1, 6, dtype=torch.float64)
    teacher = torch.randn(1, 2, dtype=torch.float64)
    h = m.input_proj(x)
    for b in m.blocks:
        h = b(h)
    g = grad(m, lambda mm: distill_loss(mm(x), teacher))
    assert torch.allclose(g["output_proj.weight"], -2 * teacher.T @ h.detach(), atol=1e-12)
    assert torch.allclose(g["output_proj.bias"], -2 * teacher[0], atol=1e-12)


def test_nonfinite_reports_layer():
    m = tiny_model()
    with torch.no_grad():
        m.blocks[0].ff[0].weight[0, 0] = float("nan")
    x = torch.randn(3, 6, dtype=torch.float64)
    with pytest.raises(NumericError, match="blocks.0.ff"):
        grad(m, lambda mm: mm(x).sum())


# -- optimizer -----------------------------------------------------------------


def test_lr_zero_leaves_params_unchanged():
    m = tiny_model()
    before = {k: v.clone() for k, v in m.state_dict().items()}
    opt = make_optimizer(m, 0.0)
    x = torch.randn(4, 6, dtype=torch.float64)
    train_step(m, opt, lambda mm: mm(x).pow(2).sum())
    assert all(torch.equal(before[k], v) for k, v in m.state_dict().items())


def test_adam_quadratic_converges():
    theta = torch.nn.Parameter(torch.tensor([5.0], dtype=torch.float64))
    holder = torch.nn.Module()
    holder.theta = theta
    opt = make_optimizer(holder, 0.1)
    for _ in range(200):
        train_step(holder, opt, lambda h: (h.theta - 2.0).pow(2).sum())
    assert abs(theta.item() - 2.0) <= 1e-2


def test_adam_hyperparameters():
    group = make_optimizer(tiny_model(), 1e-4).param_groups[0]
    assert group["betas"] == (0.9, 0.999) and group["eps"] == 1e-8


def test_train_step_rejects_nonfinite_loss():
    m = tiny_model()
    with pytest.raises(NumericError):
        train_step(m, make_optimizer(m, 1e-3), lambda mm: torch.tensor(float("inf"), requires_grad=True))


def test_distillation_reduces_loss():
    torch.manual_seed(0)
    cfg = SeqModelConfig(feature_dim=16, embed_dim=4, dim_model=16, dim_ff=32, heads=2, layers=1)
    m = SeqModel(cfg)
    teacher = SyntheticTeacher(16, 4, seed=1)
    x = torch.randn(4, 30, 16)
    y = teacher(x).float()
    opt = make_optimizer(m, 1e-2)
    losses = [train_step(m, opt, lambda mm: distill_loss(mm(x), y)) for _ in range(150)]
    assert losses[-1] <= 0.2 * losses[0]


# -- frozen tokenizer ------------------------------------------------------------


def test_tokenize_deterministic_and_pure():
    tok = Tokenizer(tiny_model(), FsqConfig((5, 5)))
    before = {k: v.clone() for k, v in tok.model.state_dict().items()}
    x = torch.randn(9, 6, dtype=torch.float64)
    a, b = tokenize(tok, x), tokenize(tok, x)
    assert torch.equal(a.indices, b.indices)
    assert all(torch.equal(before[k], v) for k, v in tok.model.state_dict().items())


def test_tokenize_preserves_frames():
    tok = Tokenizer(tiny_model(), FsqConfig((5, 5)))
    for frames in np.random.default_rng(0).integers(1, 60, size=10):
        assert tokenize(tok, torch.randn(int(frames), 6, dtype=torch.float64)).frames == frames


def test_tokenize_role_check():
    tok = Tokenizer(tiny_model("n2w"), FsqConfig((5, 5)))
    with pytest.raises(RoleError):
        tokenize(tok, torch.randn(3, 6, dtype=torch.float64))


def test_tokenizer_levels_must_match_output():
    with pytest.raises(ValueError):
        Tokenizer(tiny_model(), FsqConfig((5, 5, 5)))


def test_checkpoint_round_trip(tmp_path):
    tok = Tokenizer(tiny_model("n2w"), FsqConfig((5, 3)))
    save_tokenizer(tmp_path, tok, seed=11)
    back = load_tokenizer(tmp_path, dtype=torch.float64)
    assert back.model.role == "n2w" and back.fsq.levels == (5, 3)
    x = torch.randn(4, 6, dtype=torch.float64)
    assert torch.allclose(back.model(x), tok.model(x), atol=1e-5)


def test_synthetic_teacher_deterministic():
    x = torch.randn(5, 8)
    assert torch.equal(SyntheticTeacher(8, 3, seed=4)(x), SyntheticTeacher(8, 3, seed=4)(x))
    assert not torch.equal(SyntheticTeacher(8, 3, seed=4)(x), SyntheticTeacher(8, 3, seed=5)(x))
