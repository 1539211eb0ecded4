"""Regression and ranking loss terms: closed-form values and gradients."""

import math

import numpy as np
import numpy.testing as npt
import pytest
import torch

from deltapot.losses import (
    LossConfig,
    approx_ndcg,
    balanced_mse,
    initial_log_sigma2,
    rank_loss,
    total_loss,
)


class TestBalancedMse:
    def test_single_sample_is_exactly_zero(self):
        loss = balanced_mse(torch.tensor([3.7]), torch.tensor([-1.2]), torch.tensor(0.0))
        assert float(loss) == 0.0

    def test_duplicate_labels_give_log_batch_size(self):
        """Equal labels make every row's softmax uniform: loss = log B."""
        pred = torch.tensor([0.3, -5.0], dtype=torch.float64)
        target = torch.tensor([2.0, 2.0], dtype=torch.float64)
        loss = balanced_mse(pred, target, torch.tensor(0.0, dtype=torch.float64))
        assert abs(float(loss) - math.log(2.0)) <= 1e-12

    def test_matches_manual_computation(self):
        rng = np.random.default_rng(0)
        pred = torch.tensor(rng.normal(size=6))
        target = torch.tensor(rng.normal(size=6))
        log_s2 = torch.tensor(float(rng.normal()), dtype=torch.float64)
        s2 = math.exp(float(log_s2))
        logits = -((pred.numpy()[:, None] - target.numpy()[None, :]) ** 2) / (2 * s2)
        expected = np.mean(
            [np.log(np.exp(row).sum()) - row[i] for i, row in enumerate(logits)]
        )
        assert float(balanced_mse(pred, target, log_s2)) == pytest.approx(expected, rel=1e-12)

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(1)
        pred = torch.tensor(rng.normal(size=5), requires_grad=True)
        target = torch.tensor(rng.normal(size=5))
        log_s2 = torch.tensor(-0.4, dtype=torch.float64, requires_grad=True)
        balanced_mse(pred, target, log_s2).backward()
        eps = 1e-6
        for i in range(5):
            shift = torch.zeros(5, dtype=torch.float64)
            shift[i] = eps
            hi = float(balanced_mse(pred.detach() + shift, target, log_s2.detach()))
            lo = float(balanced_mse(pred.detach() - shift, target, log_s2.detach()))
            assert float(pred.grad[i]) == pytest.approx((hi - lo) / (2 * eps), rel=1e-5, abs=1e-8)
        hi = float(balanced_mse(pred.detach(), target, log_s2.detach() + eps))
        lo = float(balanced_mse(pred.detach(), target, log_s2.detach() - eps))
        assert float(log_s2.grad) == pytest.approx((hi - lo) / (2 * eps), rel=1e-5, abs=1e-8)

    def test_shape_validation(self):
        with pytest.raises(ValueError):
            balanced_mse(torch.zeros(3), torch.zeros(4), torch.tensor(0.0))
        with pytest.raises(ValueError):
            balanced_mse(torch.zeros(0), torch.zeros(0), torch.tensor(0.0))
        with pytest.raises(ValueError):
            balanced_mse(torch.zeros((2, 2)), torch.zeros((2, 2)), torch.tensor(0.0))


class TestApproxNdcg:
    def test_perfect_order_approaches_one(self):
        pred = torch.tensor([10.0, 20.0, 30.0, 40.0], dtype=torch.float64)
        target = torch.tensor([1.0, 2.0, 3.0, 4.0], dtype=torch.float64)
        ndcg = approx_ndcg(pred, target, temperature=0.01)
        assert float(ndcg) == pytest.approx(1.0, abs=1e-9)

    def test_reversed_pair_closed_form(self):
        """Two items fully misranked: DCG = g/log2(3), ideal = g/log2(2)."""
        pred = torch.tensor([100.0, -100.0], dtype=torch.float64)
        target = torch.tensor([0.0, 1.0], dtype=torch.float64)
        ndcg = approx_ndcg(pred, target, temperature=0.01)
        assert float(ndcg) == pytest.approx(math.log(2.0) / math.log(3.0), abs=1e-9)

    def test_all_equal_labels_score_one(self):
        ndcg = approx_ndcg(torch.tensor([1.0, 5.0, -2.0]), torch.tensor([4.0, 4.0, 4.0]))
        assert float(ndcg) == 1.0

    def test_shift_invariance(self):
        rng = np.random.default_rng(2)
        pred = torch.tensor(rng.normal(size=6))
        target = torch.tensor(rng.normal(size=6))
        a = approx_ndcg(pred, target, temperature=0.5)
        b = approx_ndcg(pred + 100.0, target, temperature=0.5)
        c = approx_ndcg(pred, target + 42.0, temperature=0.5)
        assert float(a) == pytest.approx(float(b), rel=1e-9)
        assert float(a) == pytest.approx(float(c), rel=1e-9)

    def test_needs_two_items(self):
        with pytest.raises(ValueError):
            approx_ndcg(torch.tensor([1.0]), torch.tensor([1.0]))

    def test_misranking_lowers_score(self):
        target = torch.tensor([1.0, 2.0, 3.0, 4.0], dtype=torch.float64)
        good = approx_ndcg(torch.tensor([1.0, 2.0, 3.0, 4.0], dtype=torch.float64), target, 0.05)
        bad = approx_ndcg(torch.tensor([4.0, 3.0, 2.0, 1.0], dtype=torch.float64), target, 0.05)
        assert float(bad) < float(good)


class TestRankLoss:
    def test_zero_at_perfect_ranking(self):
        assert float(rank_loss(torch.tensor(1.0, dtype=torch.float64))) == 0.0

    def test_worst_case_closed_form(self):
        loss = rank_loss(torch.tensor(0.0, dtype=torch.float64), alpha=1.0)
        assert abs(float(loss) - (math.e - 2.0)) <= 1e-12

    def test_nonnegative_and_decreasing(self):
        grid = torch.linspace(0.0, 1.0, 21, dtype=torch.float64)
        values = [float(rank_loss(x, alpha=2.5)) for x in grid]
        assert all(v >= 0.0 for v in values)
        assert all(a >= b for a, b in zip(values, values[1:]))


class TestTotalLoss:
    def test_single_sample_skips_rank_term(self):
        cfg = LossConfig()
        loss = total_loss(torch.tensor([2.0]), torch.tensor([7.0]), torch.tensor(0.0), cfg)
        assert float(loss) == 0.0

    def test_sum_of_terms(self):
        rng = np.random.default_rng(3)
        cfg = LossConfig(rank_alpha=1.5, ndcg_temperature=0.7)
        pred = torch.tensor(rng.normal(size=4))
        target = torch.tensor(rng.normal(size=4))
        log_s2 = torch.tensor(0.2, dtype=torch.float64)
        expected = float(balanced_mse(pred, target, log_s2)) + float(
            rank_loss(approx_ndcg(pred, target, 0.7), 1.5)
        )
        assert float(total_loss(pred, target, log_s2, cfg)) == pytest.approx(expected, rel=1e-12)


class TestLossConfig:
    def test_initial_log_sigma2(self):
        assert initial_log_sigma2(LossConfig(noise_sigma2_init=0.25)) == pytest.approx(
            math.log(0.25)
        )

    def test_validation(self):
        LossConfig().validate()
        with pytest.raises(ValueError):
            LossConfig(noise_sigma2_init=0.0).validate()
        with pytest.raises(ValueError):
            LossConfig(rank_alpha=-1.0).validate()
        with pytest.raises(ValueError):
            LossConfig(ndcg_temperature=0.0).validate()
