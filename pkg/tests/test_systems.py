import numpy as np
import pytest
from scipy.linalg import eigh

from synode.errors import ConfigError, DataFormatError
from synode.mlp import MlpSpec, mlp_init
from synode.models import hybrid_lv_field
from synode.solvers import integrate_adaptive, integrate_fixed
from synode.systems import (
    LORENZ_INITIAL_STATE,
    LV_INITIAL_STATE,
    LorenzParams,
    LotkaVolterraParams,
    NoiseSpec,
    double_pendulum_energy,
    double_pendulum_field,
    load_csv_dataset,
    lorenz_field,
    lotka_volterra_field,
    lotka_volterra_invariant,
    make_dataset,
    noise_floor,
    save_dataset_csv,
)


class TestLotkaVolterraField:
    def test_paper_values_at_initial_state(self):
        f = lotka_volterra_field(LotkaVolterraParams(1.3, 0.9, 0.8, 1.8))
        x, y = LV_INITIAL_STATE
        # direct arithmetic from the field definition
        expected = np.array([1.3 * x - 0.9 * x * y, -0.8 * y + 1.8 * x * y])
        out = f(0.0, np.array([x, y]))
        assert np.allclose(out, expected, atol=1e-15)
        assert out[0] == pytest.approx(-1.267855, abs=1e-6)
        assert out[1] == pytest.approx(-0.016257, abs=1e-6)

    def test_extinction_fixed_point(self):
        f = lotka_volterra_field()
        assert np.array_equal(f(0.0, np.zeros(2)), np.zeros(2))

    def test_coexistence_fixed_point(self):
        p = LotkaVolterraParams(1.3, 0.9, 0.8, 1.8)
        f = lotka_volterra_field(p)
        u = np.array([p.gamma / p.delta, p.alpha / p.beta])
        assert np.max(np.abs(f(0.0, u))) < 1e-15

    def test_first_integral_conserved(self):
        p = LotkaVolterraParams()
        data = make_dataset("lotka_volterra", (0.0, 6.1), 0.1, seed=0)
        inv = lotka_volterra_invariant(p, data.clean)
        assert np.max(np.abs(inv - inv[0])) / np.abs(inv[0]) < 1e-5


class TestLorenzField:
    def test_origin_fixed_point(self):
        assert np.array_equal(lorenz_field()(0.0, np.zeros(3)), np.zeros(3))

    def test_paper_values(self):
        f = lorenz_field(LorenzParams(10.0, 28.0, 8.0 / 3.0))
        out = f(0.0, np.array([1.2, 2.1, 1.7]))
        expected = np.array(
            [10.0 * (2.1 - 1.2), 1.2 * (28.0 - 1.7) - 2.1, 1.2 * 2.1 - (8.0 / 3.0) * 1.7]
        )
        assert np.allclose(out, expected, atol=1e-15)
        assert np.allclose(out, [9.0, 29.46, -2.013333], atol=1e-6)

    def test_nontrivial_equilibria(self):
        p = LorenzParams()
        f = lorenz_field(p)
        c = np.sqrt(p.beta * (p.rho - 1.0))
        for sign in (1.0, -1.0):
            u = np.array([sign * c, sign * c, p.rho - 1.0])
            assert np.max(np.abs(f(0.0, u))) < 1e-13


class TestHybridField:
    def test_zero_nets_leave_mechanistic_skeleton(self):
        spec = MlpSpec((2, 5, 5, 1))
        zeros = np.zeros(spec.n_params)
        f = hybrid_lv_field(1.3, 0.8, (spec, zeros), (spec, zeros))
        u = np.array([0.7, 2.0])
        assert np.allclose(f(0.0, u), [1.3 * 0.7, -0.8 * 2.0], atol=1e-15)

    def test_matches_component_networks(self):
        spec = MlpSpec((2, 4, 4, 1))
        p1 = mlp_init(spec, 0)
        p2 = mlp_init(spec, 1)
        f = hybrid_lv_field(1.3, 0.8, (spec, p1), (spec, p2))
        from synode.mlp import mlp_forward

        u = np.array([0.5, 1.5])
        out = f(0.0, u)
        assert out[0] == pytest.approx(1.3 * 0.5 + mlp_forward(spec, p1, u)[0], abs=1e-14)
        assert out[1] == pytest.approx(-0.8 * 1.5 + mlp_forward(spec, p2, u)[0], abs=1e-14)


class TestDoublePendulum:
    def test_hanging_rest_is_equilibrium(self):
        f = double_pendulum_field()
        assert np.array_equal(f(0.0, np.zeros(4)), np.zeros(4))

    def test_energy_conservation(self):
        f = double_pendulum_field()
        times = np.linspace(0.0, 10.0, 101)
        traj = integrate_adaptive(f, [1.0, -0.8, 0.0, 0.0], times, rtol=1e-10, atol=1e-12)
        energy = double_pendulum_energy(traj.states)
        scale = np.abs(energy[0])
        assert np.max(np.abs(energy - energy[0])) / scale < 1e-6

    def test_small_angle_normal_mode_frequency(self):
        l1 = l2 = 1.0
        m1 = m2 = 1.0
        g = 9.81
        mass = np.array([[(m1 + m2) * l1**2, m2 * l1 * l2], [m2 * l1 * l2, m2 * l2**2]])
        stiff = np.diag([(m1 + m2) * g * l1, m2 * g * l2])
        omega_sq, vecs = eigh(stiff, mass)
        mode = vecs[:, 0] / np.max(np.abs(vecs[:, 0]))
        amp = 1e-3
        u0 = np.array([amp * mode[0], amp * mode[1], 0.0, 0.0])
        period = 2 * np.pi / np.sqrt(omega_sq[0])
        times = np.linspace(0.0, 6 * period, 600)
        traj = integrate_adaptive(double_pendulum_field(), u0, times, 1e-10, 1e-12)
        theta1 = traj.states[:, 0]
        crossings = []
        for i in range(len(theta1) - 1):
            if theta1[i] * theta1[i + 1] < 0:
                frac = theta1[i] / (theta1[i] - theta1[i + 1])
                crossings.append(times[i] + frac * (times[i + 1] - times[i]))
        measured_period = 2 * np.mean(np.diff(crossings))
        assert abs(measured_period - period) / period < 0.05

    def test_rejects_bad_geometry(self):
        with pytest.raises(ConfigError):
            double_pendulum_field(l1=0.0)


class TestMakeDataset:
    def test_lv_point_count(self):
        data = make_dataset(
            "lotka_volterra", (0.0, 6.1), 0.1, NoiseSpec("relative", 0.05), seed=0
        )
        assert len(data.times) == 62
        assert data.times[0] == 0.0
        assert data.times[-1] == pytest.approx(6.1, abs=1e-12)
        assert np.array_equal(data.clean[0], np.asarray(LV_INITIAL_STATE))

    def test_zero_noise_equals_clean(self):
        data = make_dataset("lotka_volterra", (0.0, 2.0), 0.1, NoiseSpec("none", 0.0), seed=0)
        assert np.array_equal(data.measurements, data.clean)

    def test_reproducible_per_seed(self):
        a = make_dataset("lorenz", (0.0, 1.0), 0.1, NoiseSpec("absolute", 0.25), seed=5)
        b = make_dataset("lorenz", (0.0, 1.0), 0.1, NoiseSpec("absolute", 0.25), seed=5)
        c = make_dataset("lorenz", (0.0, 1.0), 0.1, NoiseSpec("absolute", 0.25), seed=6)
        assert np.array_equal(a.measurements, b.measurements)
        assert not np.array_equal(a.measurements, c.measurements)

    def test_absolute_noise_std(self):
        # averaged over seeds the sample std per dimension concentrates
        stds = []
        for seed in range(8):
            data = make_dataset("lorenz", (0.0, 3.0), 0.1, NoiseSpec("absolute", 0.25), seed=seed)
            stds.append(np.std(data.measurements - data.clean, axis=0, ddof=1))
        mean_std = np.mean(stds, axis=0)
        assert np.all(mean_std > 0.15) and np.all(mean_std < 0.35)

    def test_relative_noise_uses_clean_means(self):
        data = make_dataset(
            "lotka_volterra", (0.0, 6.1), 0.1, NoiseSpec("relative", 0.05), seed=1
        )
        sigma = np.asarray(data.meta["noise"]["sigma"])
        assert np.allclose(sigma, 0.05 * np.abs(data.clean.mean(axis=0)), atol=1e-12)

    def test_extra_points_extends_grid_but_not_sigma(self):
        base = make_dataset(
            "lotka_volterra", (0.0, 3.0), 0.1, NoiseSpec("relative", 0.05), seed=2
        )
        extended = make_dataset(
            "lotka_volterra", (0.0, 3.0), 0.1, NoiseSpec("relative", 0.05), seed=2, extra_points=10
        )
        assert len(extended.times) == len(base.times) + 10
        assert np.allclose(
            extended.meta["noise"]["sigma"], base.meta["noise"]["sigma"], atol=1e-12
        )

    def test_lorenz_bounded(self):
        data = make_dataset("lorenz", (0.0, 3.1), 0.1, seed=0)
        assert np.max(np.abs(data.clean)) < 60.0

    def test_bad_span_rejected(self):
        with pytest.raises(ConfigError):
            make_dataset("lorenz", (0.0, 1.05), 0.1)

    def test_unknown_system_rejected(self):
        with pytest.raises(ConfigError):
            make_dataset("brusselator", (0.0, 1.0), 0.1)


class TestNoiseFloor:
    def test_zero_noise(self):
        data = make_dataset("lorenz", (0.0, 1.0), 0.1, NoiseSpec("none", 0.0), seed=0)
        assert noise_floor(data) == 0.0

    def test_absolute_noise_floor_concentrates(self):
        floors = [
            noise_floor(
                make_dataset("lorenz", (0.0, 3.0), 0.1, NoiseSpec("absolute", 0.25), seed=s)
            )
            for s in range(8)
        ]
        assert 0.03 < np.mean(floors) < 0.11

    def test_invariant_under_dimension_reorder(self):
        data = make_dataset("lorenz", (0.0, 1.0), 0.1, NoiseSpec("absolute", 0.25), seed=3)
        from synode.systems import Dataset

        flipped = Dataset(
            data.times, data.measurements[:, ::-1].copy(), data.clean[:, ::-1].copy()
        )
        assert noise_floor(flipped) == pytest.approx(noise_floor(data), abs=1e-15)

    def test_requires_clean(self):
        from synode.systems import Dataset

        data = Dataset(np.arange(3.0), np.zeros((3, 1)))
        with pytest.raises(ValueError):
            noise_floor(data)


class TestCsvRoundTrip:
    def test_dataset_round_trip(self, tmp_path):
        data = make_dataset(
            "lotka_volterra", (0.0, 1.0), 0.1, NoiseSpec("relative", 0.05), seed=4
        )
        path = tmp_path / "dataset.csv"
        save_dataset_csv(data, path)
        back = load_csv_dataset(path)
        assert np.array_equal(back.times, data.times)
        assert np.array_equal(back.measurements, data.measurements)
        assert np.array_equal(back.clean, data.clean)
        assert back.meta["system"] == "lotka_volterra"

    def test_train_split_slicing(self, tmp_path):
        f = double_pendulum_field()
        times = np.linspace(0.0, 1.49, 150)
        traj = integrate_adaptive(f, [0.6, -0.4, 0.0, 0.0], times, 1e-8, 1e-10)
        from synode.systems import Dataset

        data = Dataset(times, traj.states)
        path = tmp_path / "dp.csv"
        save_dataset_csv(data, path)
        back = load_csv_dataset(path)
        train = back.head(100)
        assert len(train.times) == 100
        assert len(back.times) == 150
        assert np.array_equal(train.measurements, back.measurements[:100])

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        with pytest.raises(DataFormatError):
            load_csv_dataset(path)

    def test_shuffled_rows_rejected(self, tmp_path):
        path = tmp_path / "shuffled.csv"
        path.write_text("t,u0\n0.0,1.0\n0.2,1.1\n0.1,1.2\n")
        with pytest.raises(DataFormatError) as err:
            load_csv_dataset(path)
        assert err.value.row == 4

    def test_malformed_cell_reports_row(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("t,u0\n0.0,1.0\n0.1,oops\n")
        with pytest.raises(DataFormatError) as err:
            load_csv_dataset(path)
        assert err.value.row == 3
