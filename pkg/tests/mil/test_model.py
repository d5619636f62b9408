"""Unit tests for the selective-scan MIL aggregator and its loss."""

import math

import numpy as np
import pytest
import torch

from src.errors import ContractViolation
from src.mil.model import BagPrediction, BagTensors, build_model, loss, predict_bag, prepare_bag
from src.scanning.grid import coarse_positions
from src.selection.token_selection import TokenMask
from src.tensor.functional import rms_norm
from src.tensor.gradcheck import grad_check

DTYPE = torch.float64


def grid_bag(n_rows, n_cols, in_features, seed=0, label=1):
    gen = torch.Generator().manual_seed(seed)
    back_map = np.array([(r, c) for r in range(n_rows) for c in range(n_cols)], dtype=np.int64)
    return BagTensors(
        bag_id=f"toy-{seed}",
        features=torch.randn(n_rows * n_cols, in_features, generator=gen, dtype=DTYPE),
        back_map=back_map,
        height=n_rows,
        width=n_cols,
        label=label,
    )


class TestForward:
    def test_single_token_gets_all_attention(self, small_config):
        pred = build_model(small_config)(grid_bag(1, 1, 6))
        assert pred.attention.tolist() == [1.0]
        assert pred.token_mask.masked_count == 0

    def test_fixed_seed_is_deterministic(self, small_config):
        bag = grid_bag(3, 4, 6)
        first = build_model(small_config)(bag).bag_logits
        second = build_model(small_config)(bag).bag_logits
        assert torch.equal(first, second)

    def test_seed_changes_initialisation(self, small_config):
        bag = grid_bag(3, 4, 6)
        first = build_model(small_config)(bag).bag_logits
        other = build_model(small_config.replace(seed=1))(bag).bag_logits
        assert not torch.equal(first, other)

    def test_build_leaves_global_generator_alone(self, small_config):
        torch.manual_seed(99)
        expected = torch.rand(3)
        torch.manual_seed(99)
        build_model(small_config)
        assert torch.equal(torch.rand(3), expected)

    def test_zero_ratio_matches_backbone_without_selection(self, small_config):
        bag = grid_bag(3, 4, 6)
        with_selection = build_model(small_config.replace(cts_ratio=0.0))(bag)
        without = build_model(small_config.replace(use_cts=False))(bag)
        assert torch.equal(with_selection.bag_logits, without.bag_logits)
        assert without.aux_logits is None

    def test_zero_stripe_kernel_matches_backbone_without_encoder(self, small_config):
        bag = grid_bag(3, 4, 6)
        encoded = build_model(small_config)(bag)
        plain = build_model(small_config.replace(use_s2pe=False))(bag)
        assert torch.equal(encoded.bag_logits, plain.bag_logits)

    def test_everything_off_is_the_plain_backbone(self, small_config, small_dataset):
        config = small_config.replace(overlap=False, use_cts=False, use_s2pe=False)
        model = build_model(config)
        bag = prepare_bag(small_dataset.bags[1], overlap=False)
        x = model.embed(bag.features)
        for block in model.blocks:
            x = x + block.ssm(rms_norm(x, block.norm_scale)).outputs
        pooled, _ = model.pooling(rms_norm(x, model.final_norm_scale))
        assert torch.equal(model(bag).bag_logits, model.head(pooled))

    def test_attention_skips_masked_tokens(self, small_config):
        pred = build_model(small_config.replace(cts_ratio=0.5))(grid_bag(3, 4, 6))
        masked = ~pred.token_mask.keep
        assert pred.token_mask.masked_count == 6
        assert bool((pred.attention[masked] == 0).all())
        assert pred.attention.sum().item() == pytest.approx(1.0, abs=1e-12)

    def test_selection_never_masks_every_token(self, small_config):
        pred = build_model(small_config.replace(cts_ratio=0.99))(grid_bag(1, 3, 6))
        assert pred.token_mask.masked_count == 2

    def test_local_channels_are_exempt_per_block(self, small_config):
        config = small_config.replace(n_blocks=2, local_channels=3)
        pred = build_model(config)(grid_bag(3, 4, 6))
        assert len(pred.channel_exemptions) == 2
        assert all(int(exempt.sum()) == 3 for exempt in pred.channel_exemptions)
        assert torch.equal(pred.token_mask.channel_exempt, pred.channel_exemptions[0])

    def test_empty_bag(self, small_config):
        bag = grid_bag(1, 1, 6)
        bag.features = torch.zeros(0, 6, dtype=DTYPE)
        with pytest.raises(ContractViolation, match="empty"):
            build_model(small_config)(bag)

    def test_feature_width_mismatch(self, small_config):
        with pytest.raises(ContractViolation, match="feature dim 5"):
            build_model(small_config)(grid_bag(2, 2, 5))

    def test_full_objective_gradients(self, small_config):
        config = small_config.replace(cts_ratio=0.3)
        model = build_model(config)
        with torch.no_grad():
            model.s2pe.weight.normal_(0.0, 0.3, generator=torch.Generator().manual_seed(4))
        bag = grid_bag(2, 3, 6, seed=3)

        def objective():
            return loss(model(bag), bag.label, config.aux_weight)

        assert grad_check(objective, list(model.parameters())) < 1e-4


class TestPrepareBag:
    def test_overlapping_view(self, small_dataset):
        bag = small_dataset.bags[0]
        tensors = prepare_bag(bag, overlap=True)
        assert tensors.size == bag.size
        assert (tensors.height, tensors.width) == (bag.index.height, bag.index.width)

    def test_coarse_view_keeps_patch_tokens(self, small_dataset):
        bag = small_dataset.bags[0]
        positions, coarse = coarse_positions(bag.index)
        tensors = prepare_bag(bag, overlap=False)
        assert (tensors.height, tensors.width) == (4, 4)
        assert tensors.size == coarse.count
        assert torch.equal(tensors.features, torch.as_tensor(bag.features[positions]))

    def test_predict_bag_follows_config(self, small_dataset, small_config):
        model = build_model(small_config.replace(overlap=False))
        pred = predict_bag(small_dataset.bags[0], model)
        assert pred.attention.shape[0] == prepare_bag(small_dataset.bags[0], overlap=False).size


def uniform_prediction(aux=True):
    zeros = torch.zeros(2, dtype=DTYPE)
    return BagPrediction(
        bag_logits=zeros,
        aux_logits=torch.tensor([2.0, -1.0], dtype=DTYPE) if aux else None,
        attention=torch.ones(1, dtype=DTYPE),
        token_mask=TokenMask.keep_all(1),
    )


class TestLoss:
    def test_uniform_logits(self):
        assert loss(uniform_prediction(aux=False), 1, 1.0).item() == pytest.approx(math.log(2), abs=1e-15)

    def test_zero_aux_weight_drops_auxiliary_term(self):
        assert loss(uniform_prediction(), 0, 0.0).item() == pytest.approx(math.log(2), abs=1e-15)

    def test_auxiliary_term_is_weighted(self):
        aux_ce = math.log(math.exp(2.0) + math.exp(-1.0)) + 1.0
        value = loss(uniform_prediction(), 1, 0.5).item()
        assert value == pytest.approx(math.log(2) + 0.5 * aux_ce, rel=1e-12)

    def test_label_out_of_range(self):
        with pytest.raises(ContractViolation, match="label 2"):
            loss(uniform_prediction(), 2, 1.0)
