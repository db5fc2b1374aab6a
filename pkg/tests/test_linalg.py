import datetime

import numpy as np
import pytest

from fsstgnn.errors import DataError, DefinitenessError, RangeError, ShapeError
from fsstgnn.linalg import (
    CorrelationMatrix,
    PrecisionMatrix,
    TimeSeriesPanel,
    cholesky_lower,
    compute_correlation,
    correlation_from_rows,
    invert_spd,
    is_positive_definite,
    read_matrix,
    symmetrize,
    write_matrix,
)

from _oracles import make_panel, random_spd


class TestInvertSpd:
    def test_identity(self):
        assert np.allclose(invert_spd(np.eye(4)), np.eye(4))

    def test_diagonal(self):
        inv = invert_spd(np.diag([2.0, 4.0]))
        assert np.allclose(inv, np.diag([0.5, 0.25]))

    def test_two_by_two_closed_form(self):
        rho = 0.5
        m = np.array([[1.0, rho], [rho, 1.0]])
        expected = np.array([[4.0 / 3.0, -2.0 / 3.0], [-2.0 / 3.0, 4.0 / 3.0]])
        assert np.abs(invert_spd(m) - expected).max() < 1e-12

    def test_product_is_identity(self):
        rng = np.random.default_rng(0)
        for _ in range(5):
            m = random_spd(rng, 6)
            assert np.abs(m @ invert_spd(m) - np.eye(6)).max() < 1e-8

    def test_round_trip(self):
        rng = np.random.default_rng(1)
        for _ in range(5):
            m = random_spd(rng, 5)
            assert np.abs(invert_spd(invert_spd(m)) - m).max() < 1e-6

    def test_non_pd_reports_pivot(self):
        m = np.array([[1.0, 2.0], [2.0, 1.0]])
        with pytest.raises(DefinitenessError) as err:
            invert_spd(m)
        assert err.value.pivot == 1

    def test_asymmetric_rejected(self):
        with pytest.raises(ShapeError):
            invert_spd(np.array([[1.0, 0.5], [0.2, 1.0]]))


class TestIsPositiveDefinite:
    def test_identity(self):
        assert is_positive_definite(np.eye(3))

    def test_singular(self):
        assert not is_positive_definite(np.array([[1.0, 1.0], [1.0, 1.0]]))

    def test_near_singular_but_pd(self):
        assert is_positive_definite(np.array([[1.0, 0.99], [0.99, 1.0]]))

    def test_agrees_with_eigenvalues(self):
        rng = np.random.default_rng(2)
        for _ in range(40):
            m = symmetrize(rng.normal(size=(5, 5)))
            by_eig = np.linalg.eigvalsh(m).min() > 1e-12
            assert is_positive_definite(m) == by_eig

    def test_non_square_rejected(self):
        with pytest.raises(ShapeError):
            is_positive_definite(np.ones((2, 3)))


class TestCholesky:
    def test_factor_reconstructs(self):
        rng = np.random.default_rng(3)
        m = random_spd(rng, 6)
        lower = cholesky_lower(m)
        assert np.abs(lower @ lower.T - m).max() < 1e-9


class TestComputeCorrelation:
    def test_identical_columns(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(50, 1))
        panel = make_panel(np.hstack([x, x]))
        corr = compute_correlation(panel, (0, 50))
        assert corr.entries[0, 1] == pytest.approx(1.0, abs=1e-12)

    def test_negated_column(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(50, 1))
        panel = make_panel(np.hstack([x, -x]))
        corr = compute_correlation(panel, (0, 50))
        assert corr.entries[0, 1] == pytest.approx(-1.0, abs=1e-12)

    def test_independent_noise_bounded(self):
        # sampling error is about 3/sqrt(T) = 0.095 at T=1000
        rng = np.random.default_rng(6)
        panel = make_panel(rng.normal(size=(1000, 10)))
        corr = compute_correlation(panel, (0, 1000))
        off = corr.entries - np.eye(10)
        assert np.abs(off).max() < 0.15

    def test_invariants_on_random_panels(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            panel = make_panel(rng.normal(size=(30, 6)))
            corr = compute_correlation(panel, (0, 30))
            assert np.abs(corr.entries - corr.entries.T).max() <= 1e-12
            assert np.all(np.diag(corr.entries) == 1.0)
            assert np.abs(corr.entries).max() <= 1.0

    def test_affine_invariance(self):
        rng = np.random.default_rng(8)
        base = rng.normal(size=(40, 4))
        scaled = base.copy()
        scaled[:, 2] = 3.5 * scaled[:, 2] + 11.0
        c1 = correlation_from_rows(base)
        c2 = correlation_from_rows(scaled)
        assert np.abs(c1.entries - c2.entries).max() < 1e-10

    def test_zero_variance_column(self):
        rng = np.random.default_rng(9)
        x = rng.normal(size=(20, 3))
        x[:, 1] = 7.0
        corr = correlation_from_rows(x)
        assert corr.entries[1, 1] == 1.0
        assert np.all(corr.entries[1, [0, 2]] == 0.0)
        assert np.all(corr.entries[[0, 2], 1] == 0.0)

    def test_window_out_of_bounds(self):
        panel = make_panel(np.random.default_rng(10).normal(size=(20, 3)))
        with pytest.raises(RangeError):
            compute_correlation(panel, (5, 25))

    def test_window_too_short(self):
        panel = make_panel(np.random.default_rng(11).normal(size=(20, 3)))
        with pytest.raises(RangeError):
            compute_correlation(panel, (4, 5))


class TestPanel:
    def test_too_small(self):
        with pytest.raises(DataError):
            make_panel(np.ones((1, 3)))
        with pytest.raises(DataError):
            make_panel(np.ones((5, 1)))

    def test_non_finite_rejected(self):
        values = np.ones((4, 3))
        values[2, 1] = np.nan
        with pytest.raises(DataError):
            make_panel(values)

    def test_unsorted_timestamps(self):
        with pytest.raises(DataError):
            TimeSeriesPanel(np.ones((3, 2)), ("a", "b"), (3, 1, 2))

    def test_id_count_mismatch(self):
        with pytest.raises(ShapeError):
            TimeSeriesPanel(np.ones((3, 2)), ("a",), (1, 2, 3))

    def test_differenced(self):
        panel = make_panel(np.arange(12.0).reshape(6, 2))
        diff = panel.differenced()
        assert diff.n_steps == 5
        assert np.all(diff.values == 2.0)


class TestMatrixTypes:
    def test_correlation_validation(self):
        with pytest.raises(ShapeError):
            CorrelationMatrix(np.array([[1.0, 0.5], [0.5, 0.9]]))  # diagonal not 1
        with pytest.raises(ShapeError):
            CorrelationMatrix(np.array([[1.0, 1.5], [1.5, 1.0]]))  # out of range

    def test_precision_requires_pd(self):
        with pytest.raises(DefinitenessError):
            PrecisionMatrix(np.array([[1.0, 2.0], [2.0, 1.0]]))

    def test_precision_pattern_from_entries(self):
        entries = np.array([[2.0, 0.0, 0.4], [0.0, 2.0, 0.0], [0.4, 0.0, 2.0]])
        prec = PrecisionMatrix.from_entries(entries)
        assert prec.sparsity_pattern == frozenset({(0, 2), (2, 0)})

    def test_precision_pattern_symmetry_enforced(self):
        with pytest.raises(ShapeError):
            PrecisionMatrix(np.eye(3), sparsity_pattern=frozenset({(0, 1)}))


class TestMatrixFixtureIO:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(12)
        m = rng.normal(size=(5, 5))
        path = tmp_path / "m.txt"
        write_matrix(path, m)
        assert np.array_equal(read_matrix(path), m)

    def test_first_line_is_n(self, tmp_path):
        path = tmp_path / "m.txt"
        write_matrix(path, np.eye(3))
        assert path.read_text().splitlines()[0] == "3"

    def test_bad_token_count(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("2\n1.0 0.0\n")
        with pytest.raises(DataError):
            read_matrix(path)
