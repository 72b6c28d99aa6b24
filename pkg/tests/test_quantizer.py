import numpy as np
import pytest
from scipy.integrate import quad

from condquant.quantizer import (
    ClvqConfig,
    Grid,
    InsufficientSupportError,
    StepSchedule,
    assign,
    clvq_step,
    clvq_train,
    clvq_train_bootstrap,
    clvq_train_trace,
    default_schedule,
    distortion,
    grid_from_csv,
    grid_separation,
    grid_to_csv,
    load_grid,
    project,
    save_grid,
    uniform_optimal_grid,
    zador_reference_d1,
)


class TestGrid:
    def test_scalar_points_become_column(self):
        g = Grid([0.25, 0.75])
        assert g.size == 2 and g.dim == 1

    def test_duplicates_rejected(self):
        with pytest.raises(ValueError, match="distinct"):
            Grid([0.5, 0.5])

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            Grid([0.5, np.nan])


class TestStepSchedule:
    def test_steps_in_unit_interval(self):
        s = StepSchedule(a=10.0, b=20.0)
        deltas = [s.step(t) for t in range(1, 1000)]
        assert all(0.0 < d < 1.0 for d in deltas)
        assert all(a > b for a, b in zip(deltas, deltas[1:]))

    def test_rejects_step_reaching_one(self):
        with pytest.raises(ValueError):
            StepSchedule(a=21.0, b=20.0)

    def test_default_family(self):
        s = default_schedule(5)
        assert s.b == 50.0
        assert s.step(1) == pytest.approx(0.5)


class TestProject:
    def test_nearest(self):
        g = Grid([0.25, 0.75])
        i, pt = project(g, 0.4)
        assert i == 0 and pt[0] == 0.25

    def test_tie_smallest_index(self):
        g = Grid([0.25, 0.75])
        i, _ = project(g, 0.5)
        assert i == 0

    def test_two_dimensional(self):
        g = Grid([[0.0, 0.0], [1.0, 1.0]])
        i, pt = project(g, [0.9, 0.9])
        assert i == 1
        np.testing.assert_array_equal(pt, [1.0, 1.0])

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            project(Grid([[0.0, 0.0]]), [1.0])

    def test_idempotent_on_grid_points(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            g = Grid(rng.standard_normal((8, 2)))
            for j in range(g.size):
                assert project(g, g.points[j])[0] == j

    def test_assign_matches_project(self):
        rng = np.random.default_rng(12)
        g = Grid(rng.standard_normal((7, 3)))
        x = rng.standard_normal((200, 3))
        idx = assign(g, x)
        for i in range(40):
            assert idx[i] == project(g, x[i])[0]


class TestClvqStep:
    def test_squared_error_update(self):
        g = clvq_step(Grid([0.2, 0.8]), 0.3, 0.1, p=2.0)
        np.testing.assert_allclose(g.points[:, 0], [0.21, 0.8], atol=1e-15)

    def test_coincident_winner_does_not_move(self):
        g = clvq_step(Grid([0.2, 0.8]), 0.2, 0.5, p=2.0)
        np.testing.assert_array_equal(g.points[:, 0], [0.2, 0.8])

    def test_unit_norm_update(self):
        # p = 1: the winner takes a step of length delta toward the input,
        # |winner - xi|^(p-1) = 1, so 1.0 moves to 0.8
        g = clvq_step(Grid([0.0, 1.0]), 0.9, 0.2, p=1.0)
        np.testing.assert_allclose(g.points[:, 0], [0.0, 0.8], atol=1e-15)

    def test_delta_validated(self):
        with pytest.raises(ValueError):
            clvq_step(Grid([0.0, 1.0]), 0.5, 1.5)

    def test_only_winner_moves(self):
        rng = np.random.default_rng(13)
        g = Grid(rng.standard_normal((6, 2)))
        for _ in range(50):
            xi = rng.standard_normal(2)
            g2 = clvq_step(g, xi, 0.05)
            changed = np.any(g.points != g2.points, axis=1).sum()
            assert changed <= 1
            g = g2


class TestClvqTrain:
    def test_init_exhausts_sample_when_n_equals_N(self):
        rng = np.random.default_rng(14)
        x = rng.standard_normal(6)
        g = clvq_train(x, ClvqConfig(n_points=6, seed=3))
        assert sorted(g.points[:, 0]) == sorted(x)

    def test_insufficient_distinct_support(self):
        with pytest.raises(InsufficientSupportError, match="insufficient distinct support"):
            clvq_train([1.0, 1.0, 2.0], ClvqConfig(n_points=3, seed=0))

    def test_deterministic(self):
        rng = np.random.default_rng(15)
        x = rng.random(5000)
        a = clvq_train(x, ClvqConfig(n_points=8, seed=21))
        b = clvq_train(x, ClvqConfig(n_points=8, seed=21))
        np.testing.assert_array_equal(a.points, b.points)

    def test_uniform_recovery(self):
        x = np.random.default_rng(99).random(50_000)
        g = clvq_train(x, ClvqConfig(n_points=5, seed=7))
        got = np.sort(g.points[:, 0])
        np.testing.assert_allclose(got, [0.1, 0.3, 0.5, 0.7, 0.9], atol=0.04)

    def test_two_dimensional_training(self):
        rng = np.random.default_rng(16)
        x = rng.random((3000, 2))
        g = clvq_train(x, ClvqConfig(n_points=4, seed=1))
        assert g.points.shape == (4, 2)
        assert np.all(np.isfinite(g.points))
        assert grid_separation(g) > 0

    def test_separation_trace_positive(self):
        rng = np.random.default_rng(17)
        x = rng.random(20_000)
        g, seps = clvq_train_trace(x, ClvqConfig(n_points=5, seed=4), trace_every=1000)
        assert len(seps) == 20
        assert np.all(seps > 0)
        assert grid_separation(g) > 0


class TestClvqTrainBootstrap:
    def test_single_value(self):
        g = clvq_train_bootstrap([4.5, 4.5, 4.5], ClvqConfig(n_points=1, seed=0))
        assert g.points[0, 0] == 4.5

    def test_deterministic(self):
        rng = np.random.default_rng(18)
        x = rng.random(4000)
        a = clvq_train_bootstrap(x, ClvqConfig(n_points=6, seed=9))
        b = clvq_train_bootstrap(x, ClvqConfig(n_points=6, seed=9))
        np.testing.assert_array_equal(a.points, b.points)

    def test_uniform_recovery(self):
        x = np.random.default_rng(100).random(100_000)
        g = clvq_train_bootstrap(x, ClvqConfig(n_points=5, seed=7))
        np.testing.assert_allclose(
            np.sort(g.points[:, 0]), [0.1, 0.3, 0.5, 0.7, 0.9], atol=0.04
        )

    def test_insufficient_distinct_support(self):
        with pytest.raises(InsufficientSupportError):
            clvq_train_bootstrap([1.0, 1.0], ClvqConfig(n_points=2, seed=0))


class TestDistortion:
    def test_zero_when_grid_is_data(self):
        rng = np.random.default_rng(19)
        x = rng.standard_normal(20)
        assert distortion(Grid(x), x) == 0.0

    def test_two_point_residuals(self):
        assert distortion(Grid([0.5]), [0.0, 1.0], p=2.0) == pytest.approx(0.25)

    def test_matches_quadrature_oracle(self):
        # independent oracle: numeric quadrature of min((u-1/4)^2, (u-3/4)^2)
        oracle, err = quad(lambda u: min((u - 0.25) ** 2, (u - 0.75) ** 2), 0.0, 1.0)
        assert err < 1e-12
        assert oracle == pytest.approx(1.0 / 48.0, abs=1e-10)
        x = np.random.default_rng(20).random(200_000)
        emp = distortion(Grid([0.25, 0.75]), x, p=2.0)
        assert emp == pytest.approx(oracle, abs=5e-4)

    def test_empty_data(self):
        with pytest.raises(ValueError, match="empty data"):
            distortion(Grid([0.5]), np.empty((0, 1)))

    def test_first_power(self):
        # distortion with p = 1 is the mean absolute residual
        assert distortion(Grid([0.0]), [-1.0, 2.0], p=1.0) == pytest.approx(1.5)


class TestUniformOptimalGrid:
    def test_two_points(self):
        np.testing.assert_allclose(uniform_optimal_grid(0, 1, 2).points[:, 0], [0.25, 0.75])

    def test_single_point(self):
        np.testing.assert_allclose(uniform_optimal_grid(0, 1, 1).points[:, 0], [0.5])

    def test_symmetric_interval(self):
        np.testing.assert_allclose(uniform_optimal_grid(-3, 3, 3).points[:, 0], [-2.0, 0.0, 2.0])

    def test_invalid_interval(self):
        with pytest.raises(ValueError):
            uniform_optimal_grid(1, 1, 2)

    def test_optimality_certificate(self):
        # the closed-form grid beats 100 random perturbations of itself
        rng = np.random.default_rng(21)
        x = rng.random(50_000)
        g0 = uniform_optimal_grid(0, 1, 8)
        d0 = distortion(g0, x)
        for _ in range(100):
            pts = g0.points[:, 0] + rng.normal(scale=0.03, size=8)
            assert d0 <= distortion(Grid(pts), x)


class TestZadorReference:
    def test_squared_error_constant(self):
        assert zador_reference_d1(2.0, 1) == pytest.approx(1.0 / 12.0)

    def test_two_point_prediction(self):
        assert zador_reference_d1(2.0, 2) == pytest.approx(1.0 / 48.0)

    def test_absolute_error_constant(self):
        assert zador_reference_d1(1.0, 1) == pytest.approx(0.25)


class TestGridSeparation:
    def test_scalar_pair(self):
        assert grid_separation(Grid([0.25, 0.75])) == pytest.approx(0.5)

    def test_three_points(self):
        assert grid_separation(Grid([0.0, 1.0, 1.1])) == pytest.approx(0.1)

    def test_pythagorean_pair(self):
        assert grid_separation(Grid([[0.0, 0.0], [3.0, 4.0]])) == pytest.approx(5.0)

    def test_single_point_undefined(self):
        with pytest.raises(ValueError, match="separation undefined"):
            grid_separation(Grid([0.5]))


class TestGridCsv:
    def test_round_trip_bit_exact(self):
        rng = np.random.default_rng(22)
        g = Grid(rng.standard_normal((9, 3)) * 1e3)
        g2 = grid_from_csv(grid_to_csv(g))
        np.testing.assert_array_equal(g.points, g2.points)

    def test_header(self):
        text = grid_to_csv(Grid([[1.0, 2.0]]))
        assert text.splitlines()[0] == "x1,x2"

    def test_file_round_trip(self, tmp_path):
        g = Grid([0.1, 0.9])
        path = str(tmp_path / "grid.csv")
        save_grid(g, path)
        np.testing.assert_array_equal(load_grid(path).points, g.points)

    def test_bad_header_rejected(self):
        with pytest.raises(ValueError, match="header"):
            grid_from_csv("a,b\n1,2\n")
