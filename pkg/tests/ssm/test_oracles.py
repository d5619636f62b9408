"""Unit tests for the closed-form hidden-state oracles."""

import numpy as np
import pytest

from src.errors import ContractViolation
from src.ssm.oracles import hidden_state_oracle, linearize, scan_2d_oracle, split_recurrence_oracle


class TestHiddenStateOracle:
    def test_first_token(self):
        assert hidden_state_oracle([0.3, 0.9], [2.0, 5.0], [1.5, -1.0], 1) == pytest.approx(3.0)

    def test_constant_factors(self):
        assert hidden_state_oracle([0.5] * 3, [1.0] * 3, [1.0] * 3, 3) == pytest.approx(1.75, abs=1e-15)

    def test_index_out_of_range(self):
        with pytest.raises(ContractViolation):
            hidden_state_oracle([0.5], [1.0], [1.0], 2)
        with pytest.raises(ContractViolation):
            hidden_state_oracle([0.5], [1.0], [1.0], 0)

    def test_misaligned_sequences(self):
        with pytest.raises(ContractViolation):
            hidden_state_oracle([0.5, 0.5], [1.0], [1.0, 1.0], 1)


class TestLinearize:
    @pytest.mark.parametrize("i, j, width, expected", [(1, 1, 4, 1), (2, 3, 5, 8), (3, 7, 7, 21)])
    def test_values(self, i, j, width, expected):
        assert linearize(i, j, width) == expected

    def test_column_out_of_range(self):
        with pytest.raises(ContractViolation):
            linearize(1, 6, 5)


class TestScan2dOracle:
    def test_origin_cell(self):
        x = np.arange(1.0, 7.0).reshape(2, 3)
        b = np.full((2, 3), 0.5)
        assert scan_2d_oracle(x, [0.1, 0.2], [0.3, 0.4, 0.5], b, (1, 1)) == pytest.approx(0.5)

    def test_uniform_two_by_two(self):
        ones = np.ones((2, 2))
        assert scan_2d_oracle(ones, [0.5, 0.5], [0.5, 0.5], ones, (2, 2)) == pytest.approx(2.25, abs=1e-15)

    def test_single_row_reduces_to_sequence(self, rng):
        width = 7
        x = rng.normal(size=(1, width))
        b = rng.normal(size=(1, width))
        cols = rng.uniform(0.1, 0.99, size=width)
        for j in range(1, width + 1):
            flat = hidden_state_oracle(cols, b[0], x[0], j)
            assert abs(scan_2d_oracle(x, [0.7], cols, b, (1, j)) - flat) <= 1e-12

    def test_location_outside_grid(self):
        ones = np.ones((2, 2))
        with pytest.raises(ContractViolation):
            scan_2d_oracle(ones, [0.5, 0.5], [0.5, 0.5], ones, (3, 1))


class TestSplitRecurrence:
    def test_origin_cell(self, rng):
        x = rng.normal(size=(3, 4))
        b = rng.normal(size=(3, 4))
        a = rng.uniform(0.1, 0.9, size=12)
        assert split_recurrence_oracle(x, a, b, (1, 1)) == pytest.approx(b[0, 0] * x[0, 0])

    def test_first_row_is_row_prefix(self, rng):
        x = rng.normal(size=(3, 4))
        b = rng.normal(size=(3, 4))
        a = rng.uniform(0.1, 0.9, size=12)
        prefix = hidden_state_oracle(a[:4], b[0], x[0], 3)
        assert split_recurrence_oracle(x, a, b, (1, 3)) == pytest.approx(prefix, rel=1e-12)

    def test_matches_flat_recurrence_on_random_grids(self, rng):
        for _ in range(100):
            height, width = rng.integers(1, 7, size=2)
            x = rng.normal(size=(height, width))
            b = rng.normal(size=(height, width))
            a = rng.uniform(0.05, 0.999, size=height * width)
            for i in range(1, height + 1):
                for j in range(1, width + 1):
                    t = linearize(i, j, width)
                    flat = hidden_state_oracle(a, b.reshape(-1), x.reshape(-1), t)
                    split = split_recurrence_oracle(x, a, b, (i, j))
                    assert abs(split - flat) <= 1e-9 * max(1.0, abs(flat))
