import math

import numpy as np
import pytest
import torch

from lenmt.nnet import (
    AdamState,
    GradientError,
    TrainHyper,
    adam_step,
    dropout,
    gradient_check,
    label_smoothed_xent,
    lr_schedule,
)

PAPER_HYPER = TrainHyper(warmup_steps=4000)


class TestLrSchedule:
    def test_initial(self):
        assert lr_schedule(0, PAPER_HYPER) == pytest.approx(1e-7)

    def test_peak_at_warmup_end(self):
        assert lr_schedule(4000, PAPER_HYPER) == pytest.approx(1e-3)

    def test_inverse_sqrt_decay(self):
        # 0.001 * sqrt(4000 / 16000)
        assert lr_schedule(16000, PAPER_HYPER) == pytest.approx(5e-4)

    def test_monotone_warmup(self):
        values = [lr_schedule(s, PAPER_HYPER) for s in range(0, 4001, 100)]
        assert values == sorted(values)

    def test_negative_step_rejected(self):
        with pytest.raises(ValueError):
            lr_schedule(-1, PAPER_HYPER)


def oracle_smoothed_xent(logits, targets, smoothing, mask):
    """Brute-force float64 oracle: explicit softmax and per-class sum."""
    total, n = 0.0, 0
    vocab = logits.shape[-1]
    flat_logits = logits.reshape(-1, vocab)
    flat_targets = targets.reshape(-1)
    flat_mask = mask.reshape(-1)
    for row, gold, keep in zip(flat_logits, flat_targets, flat_mask):
        if not keep:
            continue
        exps = [math.exp(v) for v in row.tolist()]
        z = sum(exps)
        probs = [e / z for e in exps]
        loss = 0.0
        for v in range(vocab):
            q = (1 - smoothing) if v == gold else smoothing / (vocab - 1)
            loss -= q * math.log(probs[v])
        total += loss
        n += 1
    return total / n


class TestLabelSmoothedXent:
    def test_uniform_logits_no_smoothing(self):
        vocab = 7
        logits = torch.zeros(3, vocab)
        targets = torch.tensor([0, 3, 6])
        loss = label_smoothed_xent(logits, targets, smoothing=0.0)
        assert float(loss) == pytest.approx(math.log(vocab), abs=1e-6)

    def test_confident_correct_goes_to_zero(self):
        logits = torch.full((2, 5), -100.0)
        logits[0, 1] = 100.0
        logits[1, 3] = 100.0
        targets = torch.tensor([1, 3])
        loss = label_smoothed_xent(logits, targets, smoothing=0.0)
        assert float(loss) == pytest.approx(0.0, abs=1e-8)

    def test_matches_brute_force_oracle(self):
        rng = torch.Generator().manual_seed(42)
        logits = torch.randn(3, 5, generator=rng, dtype=torch.float64)
        targets = torch.tensor([0, 2, 4])
        mask = torch.ones(3, dtype=torch.bool)
        for smoothing in [0.0, 0.1, 0.3]:
            got = float(label_smoothed_xent(logits, targets, smoothing))
            want = oracle_smoothed_xent(logits, targets, smoothing, mask)
            assert got == pytest.approx(want, abs=1e-10)

    def test_padding_masked_out(self):
        rng = torch.Generator().manual_seed(1)
        logits = torch.randn(2, 3, 6, generator=rng, dtype=torch.float64)
        targets = torch.tensor([[1, 2, 0], [3, 0, 0]])
        got = float(label_smoothed_xent(logits, targets, 0.1, pad_id=0))
        mask = targets != 0
        want = oracle_smoothed_xent(logits, targets, 0.1, mask)
        assert got == pytest.approx(want, abs=1e-10)

    def test_all_pad_rejected(self):
        logits = torch.zeros(2, 4)
        targets = torch.zeros(2, dtype=torch.int64)
        with pytest.raises(ValueError, match="padding"):
            label_smoothed_xent(logits, targets, 0.1, pad_id=0)

    def test_gradient_matches_finite_differences(self):
        rng = torch.Generator().manual_seed(3)
        logits = torch.randn(2, 4, generator=rng, dtype=torch.float64, requires_grad=True)
        targets = torch.tensor([1, 3])

        def fn(params):
            return label_smoothed_xent(params["logits"], targets, 0.1)

        report = gradient_check(fn, {"logits": logits})
        assert report.max_rel_err < 1e-6


class TestAdamStep:
    def hyper(self):
        return TrainHyper(warmup_steps=10, lr_peak=0.1, lr_init=0.1)

    def test_zero_gradient_no_change(self):
        p = torch.tensor([1.0, -2.0])
        params = {"w": p.clone()}
        adam_step(params, {"w": torch.zeros(2)}, AdamState(), step=1, hyper=self.hyper())
        assert torch.equal(params["w"], p)

    def test_first_step_magnitude_is_lr(self):
        # constant g=1: bias-corrected m_hat = 1, v_hat = 1 -> step ~ lr
        hyper = self.hyper()
        lr = lr_schedule(1, hyper)
        params = {"w": torch.tensor([0.5])}
        adam_step(params, {"w": torch.ones(1)}, AdamState(), step=1, hyper=hyper)
        assert float(params["w"]) == pytest.approx(0.5 - lr, rel=1e-6)

    def test_deterministic_trajectories(self):
        def run():
            torch.manual_seed(9)
            params = {"w": torch.randn(4)}
            state = AdamState()
            hyper = self.hyper()
            for step in range(1, 20):
                g = params["w"] * 0.3 + 1.0
                adam_step(params, {"w": g}, state, step, hyper)
            return params["w"].clone()

        assert torch.equal(run(), run())

    def test_non_finite_gradient_names_parameter(self):
        params = {"layer.weight": torch.zeros(2)}
        grads = {"layer.weight": torch.tensor([1.0, float("nan")])}
        with pytest.raises(GradientError, match="layer.weight"):
            adam_step(params, grads, AdamState(), step=1, hyper=self.hyper())

    def test_descends_on_quadratic(self):
        params = {"w": torch.tensor([5.0])}
        state = AdamState()
        hyper = self.hyper()
        for step in range(1, 300):
            g = 2 * params["w"]
            adam_step(params, {"w": g.clone()}, state, step, hyper)
        assert abs(float(params["w"])) < 0.5


class TestGradientCheck:
    def test_linear_map_nearly_exact(self):
        torch.manual_seed(0)
        a = torch.randn(4, 4, dtype=torch.float64)
        x = torch.randn(4, dtype=torch.float64, requires_grad=True)

        def fn(params):
            return (a @ params["x"]).sum()

        report = gradient_check(fn, {"x": x})
        assert report.max_rel_err < 1e-9

    def test_softmax_xent(self):
        torch.manual_seed(1)
        logits = torch.randn(3, 6, dtype=torch.float64, requires_grad=True)
        targets = torch.tensor([0, 5, 2])

        def fn(params):
            return label_smoothed_xent(params["logits"], targets, 0.0)

        report = gradient_check(fn, {"logits": logits})
        assert report.max_rel_err < 1e-6

    def test_requires_float64(self):
        x = torch.randn(2, requires_grad=True)
        with pytest.raises(ValueError, match="float64"):
            gradient_check(lambda p: p["x"].sum(), {"x": x})

    def test_subsampling(self):
        x = torch.randn(50, dtype=torch.float64, requires_grad=True)
        report = gradient_check(
            lambda p: (p["x"] ** 2).sum(), {"x": x}, max_coords_per_param=10
        )
        assert report.n_checked == 10
        assert report.max_rel_err < 1e-7


class TestDropout:
    def test_disabled_in_eval(self):
        x = torch.ones(10)
        gen = torch.Generator().manual_seed(0)
        assert torch.equal(dropout(x, 0.5, training=False, gen=gen), x)

    def test_replayable(self):
        x = torch.ones(100)
        a = dropout(x, 0.4, True, torch.Generator().manual_seed(7))
        b = dropout(x, 0.4, True, torch.Generator().manual_seed(7))
        assert torch.equal(a, b)

    def test_inverted_scaling(self):
        x = torch.ones(20000)
        out = dropout(x, 0.25, True, torch.Generator().manual_seed(1))
        kept = out[out > 0]
        assert float(kept[0]) == pytest.approx(1 / 0.75)
        assert float(out.mean()) == pytest.approx(1.0, abs=0.02)


def test_hyper_validation():
    with pytest.raises(ValueError):
        TrainHyper(dropout=1.0)
    with pytest.raises(ValueError):
        TrainHyper(warmup_steps=0)
    with pytest.raises(ValueError):
        TrainHyper(label_smoothing=-0.1)
