import math

import numpy as np
import pytest
import torch
import torch.nn.functional as F

from biasbench.methods import (
    FactorHeads,
    GdroState,
    MethodConfig,
    gce_loss,
    gce_loss_from_logits,
    gdro_step,
    grad_reverse,
    irmv1_penalty,
    lff_weights,
    lnl_losses,
    rubi_combine,
    rubi_losses,
    sd_penalty,
    softmax_entropy,
    stdm_loss,
    upweighted_loss,
)
from biasbench.methods.losses import NumericError

torch.manual_seed(0)


# --- StdM -------------------------------------------------------------------

def test_stdm_uniform_logits():
    logits = torch.zeros(4, 10, dtype=torch.float64)
    y = torch.tensor([1, 2, 3, 4])
    assert float(stdm_loss(logits, y)) == pytest.approx(math.log(10), abs=1e-12)


def test_stdm_confident_limit():
    logits = torch.full((2, 5), -100.0, dtype=torch.float64)
    y = torch.tensor([0, 3])
    logits[0, 0] = 100.0
    logits[1, 3] = 100.0
    assert float(stdm_loss(logits, y)) < 1e-12


def test_stdm_two_sample_mean():
    logits = torch.tensor([[2.0, 0.0], [0.0, 1.0]], dtype=torch.float64)
    y = torch.tensor([0, 0])
    per = F.cross_entropy(logits, y, reduction="none")
    assert float(stdm_loss(logits, y)) == pytest.approx(float(per.mean()), abs=1e-15)


def test_stdm_rejects_nonfinite():
    logits = torch.tensor([[float("nan"), 0.0]])
    with pytest.raises(NumericError):
        stdm_loss(logits, torch.tensor([0]))


# --- UpWt -------------------------------------------------------------------

def test_upwt_equal_groups_is_stdm():
    logits = torch.randn(12, 5, dtype=torch.float64)
    y = torch.randint(0, 5, (12,))
    gid = torch.arange(12) % 3
    counts = torch.tensor([4, 4, 4])
    assert float(upweighted_loss(logits, y, gid, counts) - stdm_loss(logits, y)) == pytest.approx(0.0, abs=1e-12)


def test_upwt_constant_loss_invariance():
    # identical per-sample CE: reweighting cannot change the value
    logits = torch.zeros(10, 4, dtype=torch.float64)
    y = torch.zeros(10, dtype=torch.long)
    gid = torch.tensor([0] * 9 + [1])
    counts = torch.tensor([99, 1])
    assert float(upweighted_loss(logits, y, gid, counts)) == pytest.approx(math.log(4), abs=1e-12)


def test_upwt_weight_ratio():
    # group sizes {4, 1}: minority sample weighs 4x a majority sample
    logits = torch.tensor([[3.0, 0.0], [0.0, 3.0]], dtype=torch.float64)
    y = torch.tensor([0, 0])
    gid = torch.tensor([0, 1])
    counts = torch.tensor([4, 1])
    ce = F.cross_entropy(logits, y, reduction="none")
    expected = (0.25 * ce[0] + 1.0 * ce[1]) / 1.25
    assert float(upweighted_loss(logits, y, gid, counts)) == pytest.approx(float(expected), abs=1e-12)


def test_upwt_unknown_group():
    logits = torch.randn(2, 3)
    with pytest.raises(KeyError):
        upweighted_loss(logits, torch.tensor([0, 1]), torch.tensor([0, 5]), torch.tensor([1, 1]))


# --- GDRO -------------------------------------------------------------------

def test_gdro_equal_losses_keep_q():
    q = torch.tensor([0.25, 0.25, 0.25, 0.25], dtype=torch.float64)
    L = torch.full((4,), 0.7, dtype=torch.float64)
    _, q2 = gdro_step(L, q, eta=0.05)
    assert torch.allclose(q2, q, atol=1e-15)


def test_gdro_hand_update():
    q = torch.tensor([0.5, 0.5], dtype=torch.float64)
    L = torch.tensor([1.0, 0.0], dtype=torch.float64)
    robust, q2 = gdro_step(L, q, eta=0.01)
    hi = math.exp(0.01) / (math.exp(0.01) + 1.0)
    assert float(q2[0]) == pytest.approx(hi, abs=1e-12)
    assert float(robust) == pytest.approx(hi * 1.0, abs=1e-12)


def test_gdro_converges_to_worst_group():
    state = GdroState(2, eta=0.01)
    L = torch.tensor([1.0, 0.0])
    for _ in range(3000):
        robust = state.step(L)
    assert float(state.q[0]) > 1 - 1e-3
    assert float(robust) == pytest.approx(1.0, abs=1e-3)


def test_gdro_simplex_preserved():
    rng = np.random.default_rng(0)
    state = GdroState(5, eta=0.1, dtype=torch.float64)
    for _ in range(2000):
        L = torch.tensor(rng.random(5))
        state.step(L)
        assert abs(float(state.q.sum()) - 1.0) < 1e-12
        assert float(state.q.min()) > 0


# --- RUBi -------------------------------------------------------------------

def test_rubi_sigma_zero_halves_and_preserves_argmax():
    d = torch.tensor([[2.0, -1.0, 0.5]])
    b = torch.zeros(1, 3)
    out = rubi_combine(d, b)
    assert torch.allclose(out, 0.5 * d)
    assert out.argmax() == d.argmax()


def test_rubi_constant_mask_preserves_argmax():
    torch.manual_seed(5)
    for _ in range(20):
        d = torch.randn(3, 6)
        c = float(torch.randn(()))
        out = rubi_combine(d, torch.full((3, 6), c))
        assert torch.equal(out.argmax(dim=1), d.argmax(dim=1))


def test_rubi_hand_values():
    d = torch.tensor([[2.0, -1.0]], dtype=torch.float64)
    b = torch.tensor([[1.0, -1.0]], dtype=torch.float64)
    out = rubi_combine(d, b)
    assert float(out[0, 0]) == pytest.approx(2 * torch.sigmoid(torch.tensor(1.0, dtype=torch.float64)).item(), abs=1e-12)
    assert float(out[0, 0]) == pytest.approx(1.4621171573, abs=1e-9)
    assert float(out[0, 1]) == pytest.approx(-0.2689414214, abs=1e-9)


def test_rubi_saturated_bias_passthrough():
    d = torch.tensor([[1.5, -0.5, 0.1]], dtype=torch.float64)
    b = torch.full((1, 3), 40.0, dtype=torch.float64)
    y = torch.tensor([0])
    fused, bias_ce = rubi_losses(d, b, y)
    assert float(fused) == pytest.approx(float(F.cross_entropy(d, y)), abs=1e-12)


def test_rubi_shape_mismatch():
    with pytest.raises(ValueError):
        rubi_combine(torch.zeros(1, 3), torch.zeros(1, 4))


# --- LNL --------------------------------------------------------------------

def test_grad_reverse_scales_backward():
    x = torch.randn(5, 3, requires_grad=True)
    out = grad_reverse(x, -0.1)
    out.sum().backward()
    assert torch.allclose(x.grad, torch.full_like(x, -0.1))


def test_lnl_entropy_max_at_uniform():
    heads = FactorHeads(4, [10])
    with torch.no_grad():
        heads.heads[0].weight.zero_()
        heads.heads[0].bias.zero_()
    feats = torch.randn(8, 4, requires_grad=True)
    logits = torch.randn(8, 10)
    y = torch.randint(0, 10, (8,))
    b = torch.randint(0, 10, (8, 1))
    task, adv, ent = lnl_losses(feats, logits, y, b, heads, -0.1, 0.5)
    assert float(ent.detach()) == pytest.approx(math.log(10), abs=1e-6)
    # gradient of the entropy term wrt features vanishes at exact uniformity
    g, = torch.autograd.grad(-0.5 * ent, feats)
    assert float(g.abs().max()) < 1e-7


def test_lnl_reversal_weight_applied():
    heads = FactorHeads(3, [4])
    logits = torch.randn(6, 5)
    y = torch.randint(0, 5, (6,))
    b = torch.randint(0, 4, (6, 1))
    feats = torch.randn(6, 3, requires_grad=True)
    _, adv, _ = lnl_losses(feats, logits, y, b, heads, 1.0, 0.0)
    g_pos, = torch.autograd.grad(adv, feats)
    feats2 = feats.detach().clone().requires_grad_()
    _, adv2, _ = lnl_losses(feats2, logits, y, b, heads, -0.1, 0.0)
    g_neg, = torch.autograd.grad(adv2, feats2)
    assert torch.allclose(g_neg, -0.1 * g_pos, atol=1e-9)


def test_lnl_off_switch_task_is_stdm():
    heads = FactorHeads(3, [4])
    logits = torch.randn(6, 5, dtype=torch.float64)
    y = torch.randint(0, 5, (6,))
    b = torch.randint(0, 4, (6, 1))
    feats = torch.randn(6, 3, dtype=torch.float64)
    heads.to(torch.float64)
    task, _, _ = lnl_losses(feats, logits, y, b, heads, 0.0, 0.0)
    assert float(task - stdm_loss(logits, y)) == 0.0


def test_lnl_negative_entropy_weight_rejected():
    heads = FactorHeads(3, [4])
    with pytest.raises(ValueError):
        lnl_losses(torch.randn(2, 3), torch.randn(2, 5), torch.tensor([0, 1]),
                   torch.zeros(2, 1, dtype=torch.long), heads, -0.1, -1.0)


# --- GCE / LFF ---------------------------------------------------------------

def test_gce_perfect_confidence():
    s = torch.tensor([[1.0, 0.0]])
    assert float(gce_loss(s, torch.tensor([0]), 0.7)) == 0.0


def test_gce_hand_value():
    s = torch.tensor([[0.5, 0.5]], dtype=torch.float64)
    val = float(gce_loss(s, torch.tensor([0]), 0.7))
    assert val == pytest.approx((1 - 0.5 ** 0.7) / 0.7, abs=1e-12)
    assert val == pytest.approx(0.5491826, abs=1e-4)


def test_gce_small_gamma_approaches_ce():
    # pointwise limit (1 - s**g)/g -> -ln s; the gap grows as g*CE^2/2, so
    # keep the logits in a moderate-confidence regime for the stated bound
    torch.manual_seed(1)
    logits = 0.5 * torch.randn(32, 10, dtype=torch.float64)
    y = torch.randint(0, 10, (32,))
    gce = gce_loss_from_logits(logits, y, 1e-4)
    ce = F.cross_entropy(logits, y, reduction="none")
    assert float((gce - ce).abs().max()) < 1e-3


def test_gce_gradient_identity():
    torch.manual_seed(2)
    for gamma in (0.1, 0.5, 0.7, 1.0):
        logits = torch.randn(16, 8, dtype=torch.float64, requires_grad=True)
        y = torch.randint(0, 8, (16,))
        loss = gce_loss_from_logits(logits, y, gamma).sum()
        g, = torch.autograd.grad(loss, logits)
        with torch.no_grad():
            p = F.softmax(logits, dim=1)
            s_y = p.gather(1, y.view(-1, 1))
            ce_grad = p.clone()
            ce_grad[torch.arange(16), y] -= 1.0
            assert float((g - s_y ** gamma * ce_grad).abs().max()) < 1e-12


def test_gce_gamma_validation_and_clamp():
    with pytest.raises(ValueError):
        gce_loss(torch.tensor([[1.0]]), torch.tensor([0]), 0.0)
    s = torch.tensor([[0.0, 1.0]], dtype=torch.float64)
    val = float(gce_loss(s, torch.tensor([0]), 0.5))
    assert math.isfinite(val)


def test_lff_weights_cases():
    lb = torch.tensor([1.0, 2.0, 1.0, 0.0])
    ld = torch.tensor([1.0, 0.0, 3.0, 0.0])
    w = lff_weights(lb, ld)
    assert w.tolist() == pytest.approx([0.5, 1.0, 0.25, 0.5])
    assert bool((w >= 0).all() and (w <= 1).all() and torch.isfinite(w).all())


# --- IRMv1 -------------------------------------------------------------------

def test_irm_single_sample_hand_case():
    # one sample, two classes, logits [a, -a], label 0:
    # CE(w) = log(1 + exp(-2aw)); d/dw at w=1 = -2a * sigmoid(-2a)
    a = 0.8
    logits = torch.tensor([[a, -a]], dtype=torch.float64)
    y = torch.tensor([0])
    env = torch.tensor([0])
    _, pen = irmv1_penalty(logits, y, env, lam=1.0)
    expected = (2 * a * torch.sigmoid(torch.tensor(-2 * a, dtype=torch.float64)).item()) ** 2
    assert float(pen) == pytest.approx(expected, abs=1e-12)


def test_irm_matches_finite_differences():
    torch.manual_seed(3)
    h = 1e-5
    for _ in range(10):
        logits = torch.randn(12, 4, dtype=torch.float64)
        y = torch.randint(0, 4, (12,))
        env = torch.randint(0, 3, (12,))
        _, pen = irmv1_penalty(logits, y, env, lam=1.0)
        fd = 0.0
        for e in torch.unique(env):
            m = env == e
            lp = F.cross_entropy(logits[m] * (1 + h), y[m])
            lm = F.cross_entropy(logits[m] * (1 - h), y[m])
            fd += float((lp - lm) / (2 * h)) ** 2
        assert float(pen) == pytest.approx(fd, rel=1e-4)


def test_irm_off_switch_and_saturation():
    torch.manual_seed(4)
    logits = torch.randn(10, 3, dtype=torch.float64)
    y = torch.randint(0, 3, (10,))
    env = torch.randint(0, 2, (10,))
    risk, pen = irmv1_penalty(logits, y, env, lam=0.0)
    assert float(risk - F.cross_entropy(logits, y)) == 0.0
    assert float(pen) == 0.0
    # saturated correct predictions: both risk and penalty vanish
    big = torch.full((6, 3), -200.0, dtype=torch.float64)
    y2 = torch.tensor([0, 1, 2, 0, 1, 2])
    big[torch.arange(6), y2] = 200.0
    risk2, pen2 = irmv1_penalty(big, y2, torch.tensor([0, 0, 0, 1, 1, 1]), lam=1.0)
    assert float(risk2) < 1e-12 and float(pen2) < 1e-12


def test_irm_penalty_backpropagates():
    logits = torch.randn(8, 3, dtype=torch.float64, requires_grad=True)
    y = torch.randint(0, 3, (8,))
    env = torch.randint(0, 2, (8,))
    risk, pen = irmv1_penalty(logits, y, env, lam=10.0)
    (risk + pen).backward()
    assert logits.grad is not None and torch.isfinite(logits.grad).all()


# --- SD ----------------------------------------------------------------------

def test_sd_zero_at_shift():
    logits = torch.full((3, 4), 1.7, dtype=torch.float64)
    y = torch.tensor([0, 1, 2])
    assert float(sd_penalty(logits, y, 1.0, 1.7)) == 0.0


def test_sd_hand_value():
    assert float(sd_penalty(torch.tensor([[3.0, 4.0]]), torch.tensor([0]), 1.0, 0.0)) == pytest.approx(12.5)


def test_sd_per_class_values():
    logits = torch.tensor([[0.44, 0.44]], dtype=torch.float64)
    y = torch.tensor([0])
    assert float(sd_penalty(logits, y, [10.0, 10.0], [0.44, 2.5])) == 0.0
    y1 = torch.tensor([1])
    expected = 10.0 / 2 * 2 * (0.44 - 2.5) ** 2
    assert float(sd_penalty(logits, y1, [10.0, 10.0], [0.44, 2.5])) == pytest.approx(expected, abs=1e-9)


def test_sd_negative_lambda_rejected():
    with pytest.raises(ValueError):
        sd_penalty(torch.zeros(1, 2), torch.tensor([0]), -1.0, 0.0)


# --- Config / registry --------------------------------------------------------

def test_method_config_validation():
    with pytest.raises(ValueError):
        MethodConfig("LFF", {"gamma": 0.0})
    with pytest.raises(ValueError):
        MethodConfig("LNL", {"lambda_grad": 0.5})
    with pytest.raises(ValueError):
        MethodConfig("LNL", {"lambda_ent": -0.1})
    with pytest.raises(ValueError):
        MethodConfig("SD", {"lam": -1.0})
    with pytest.raises(ValueError):
        MethodConfig("Nope")
    cfg = MethodConfig("GDRO")
    assert cfg.params["eta"] == 0.01
    assert cfg.explicit
    assert not MethodConfig("LFF").explicit


def test_stage2_grids_match_documented_ranges():
    assert MethodConfig.stage2_grid("GDRO")["eta"] == [0.001, 0.01, 0.1]
    assert MethodConfig.stage2_grid("LNL")["lambda_grad"] == [-1.0, -0.1, -0.01]
    assert MethodConfig.stage2_grid("LNL")["lambda_ent"] == [1.0, 0.1, 0.01, 0.0]
    assert MethodConfig.stage2_grid("IRMv1")["lam"] == [1.0, 10.0, 100.0, 1000.0, 10000.0]
    assert MethodConfig.stage2_grid("LFF")["gamma"] == [0.1, 0.3, 0.5, 0.7, 0.9]
    assert MethodConfig.stage2_grid("SD")["lam"] == [1e-3, 1e-2, 0.1, 1.0, 10.0, 100.0]
    assert MethodConfig.stage2_grid("StdM") == {}


def test_entropy_helper():
    logits = torch.zeros(4, 10, dtype=torch.float64)
    assert float(softmax_entropy(logits)) == pytest.approx(math.log(10), abs=1e-12)
