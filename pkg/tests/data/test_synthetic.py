"""Unit tests for synthetic bag and dataset generation."""

import numpy as np
import pytest

from src.constants.common_constants import Splits
from src.data.storage import manifest_text, serialize_bag
from src.data.synthetic import (
    BagSpec,
    build_coarse_layout,
    class_directions,
    generate_bag,
    generate_dataset,
    overlap_features,
    sample_tissue,
    split_for,
)
from src.errors import ContractViolation


class TestBagSpec:
    def test_defaults(self):
        spec = BagSpec()
        assert spec.cluster_radius == 2.0
        assert spec.noise_scale == 0.5

    @pytest.mark.parametrize(
        "values",
        [{"noise_scale": 0.0}, {"tissue_fraction": 0.0}, {"k_classes": 1}, {"width": 40000}, {"depth": 3}],
    )
    def test_rejected(self, values):
        with pytest.raises(ContractViolation, match="invalid bag spec"):
            BagSpec.build(**values)

    def test_from_file(self, tmp_path):
        path = tmp_path / "bags.spec"
        path.write_text("height = 5\nwidth = 3\n# stronger signal\nsignal_strength = 2.5\n", encoding="utf-8")
        spec = BagSpec.from_file(path)
        assert (spec.height, spec.width, spec.signal_strength) == (5, 3, 2.5)


class TestTissue:
    def test_target_size_and_connectivity(self, rng):
        tissue = sample_tissue(6, 7, 0.5, rng)
        assert tissue.sum() == 21
        start = tuple(np.argwhere(tissue)[0])
        seen, stack = {start}, [start]
        while stack:
            r, c = stack.pop()
            for nr, nc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
                if 0 <= nr < 6 and 0 <= nc < 7 and tissue[nr, nc] and (nr, nc) not in seen:
                    seen.add((nr, nc))
                    stack.append((nr, nc))
        assert len(seen) == 21

    def test_full_fraction(self, rng):
        assert sample_tissue(3, 3, 1.0, rng).all()


class TestGenerateBag:
    def test_negative_bag_has_no_positive_instances(self, small_spec, rng):
        bag = generate_bag(small_spec, 0, rng)
        assert bag.label == 0
        assert not bag.instance_labels.any()
        assert bag.coarse.center is None

    def test_positive_instances_cluster_around_center(self, small_spec):
        for seed in range(10):
            bag = generate_bag(small_spec, 1, np.random.default_rng(seed))
            layout = bag.coarse
            assert bag.instance_labels.any()
            positive = np.argwhere(layout.labels > 0)
            distance = np.hypot(positive[:, 0] - layout.center[0], positive[:, 1] - layout.center[1])
            assert (distance <= small_spec.cluster_radius).all()
            assert layout.tissue[tuple(positive.T)].all()

    def test_tokens_follow_the_fine_grid(self, small_spec, rng):
        bag = generate_bag(small_spec, 1, rng)
        assert (bag.index.height, bag.index.width) == (7, 7)
        assert bag.features.shape == (bag.index.count, small_spec.feature_dim)
        assert bag.instance_labels.shape == (bag.size,)

    def test_noise_free_tokens_average_overlapped_cells(self, rng):
        spec = BagSpec(height=3, width=4, feature_dim=2, tissue_fraction=0.7, signal_strength=0.0)
        layout = build_coarse_layout(spec, 1, rng)
        fine, features, _ = overlap_features(layout, 0.0, rng)
        for (r, c), value in zip(fine.coords, features):
            cells = {(r // 2, c // 2), (r // 2, (c + 1) // 2), ((r + 1) // 2, c // 2), ((r + 1) // 2, (c + 1) // 2)}
            cells = [cell for cell in cells if layout.tissue[cell]]
            expected = np.mean([layout.vectors[cell] for cell in cells], axis=0)
            np.testing.assert_allclose(value, expected, rtol=0, atol=1e-12)

    def test_unknown_class(self, small_spec, rng):
        with pytest.raises(ContractViolation, match="class 2"):
            generate_bag(small_spec, 2, rng)

    def test_class_directions_are_unit_rows(self):
        directions = class_directions(6, 3)
        np.testing.assert_allclose(np.linalg.norm(directions, axis=1), 1.0, rtol=0, atol=1e-12)


class TestGenerateDataset:
    def test_one_bag_per_class(self, small_spec):
        dataset = generate_dataset(small_spec, 1, seed=0)
        assert [bag.bag_id for bag in dataset.bags] == ["bag-00000", "bag-00001"]
        assert [bag.label for bag in dataset.bags] == [0, 1]

    @pytest.mark.parametrize("n, k", [(1, 2), (3, 3), (4, 2)])
    def test_exact_class_balance(self, n, k):
        spec = BagSpec(height=3, width=3, feature_dim=4, k_classes=k)
        labels = [bag.label for bag in generate_dataset(spec, n, seed=1).bags]
        assert all(labels.count(c) == n for c in range(k))

    def test_same_seed_same_bytes(self, small_spec):
        first = generate_dataset(small_spec, 2, seed=11)
        second = generate_dataset(small_spec, 2, seed=11)
        assert manifest_text(first) == manifest_text(second)
        assert [serialize_bag(b) for b in first.bags] == [serialize_bag(b) for b in second.bags]

    def test_different_seed_different_bags(self, small_spec):
        first = generate_dataset(small_spec, 1, seed=1)
        second = generate_dataset(small_spec, 1, seed=2)
        assert serialize_bag(first.bags[0]) != serialize_bag(second.bags[0])

    def test_splits_follow_the_hash(self, small_spec):
        dataset = generate_dataset(small_spec, 3, seed=7)
        for bag in dataset.bags:
            assert dataset.splits[bag.bag_id] == split_for(7, bag.bag_id, small_spec.test_fraction)
        total = len(dataset.split(Splits.TRAIN)) + len(dataset.split(Splits.TEST))
        assert total == len(dataset.bags)

    def test_split_extremes(self):
        assert split_for(0, "bag-00000", 0.0) == Splits.TRAIN
        assert split_for(0, "bag-00000", 1.0) == Splits.TEST

    def test_lookup_errors(self, small_dataset):
        with pytest.raises(ContractViolation):
            small_dataset.split("validation")
        with pytest.raises(ContractViolation):
            small_dataset.bag("bag-99999")

    def test_needs_a_bag_per_class(self, small_spec):
        with pytest.raises(ContractViolation):
            generate_dataset(small_spec, 0, seed=0)
