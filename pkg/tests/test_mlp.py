import numpy as np
import pytest

from synode.errors import ConfigError
from synode.mlp import (
    MlpSpec,
    load_checkpoint,
    mlp_forward,
    mlp_init,
    mlp_vjp,
    save_checkpoint,
)


def finite_diff_param_grad(spec, params, x, w, step=1e-5):
    grad = np.zeros_like(params)
    for i in range(len(params)):
        p = params.copy()
        p[i] += step
        up = w @ mlp_forward(spec, p, x)
        p[i] -= 2 * step
        down = w @ mlp_forward(spec, p, x)
        grad[i] = (up - down) / (2 * step)
    return grad


def finite_diff_input_grad(spec, params, x, w, step=1e-5):
    grad = np.zeros_like(x)
    for i in range(len(x)):
        xs = x.copy()
        xs[i] += step
        up = w @ mlp_forward(spec, params, xs)
        xs[i] -= 2 * step
        down = w @ mlp_forward(spec, params, xs)
        grad[i] = (up - down) / (2 * step)
    return grad


class TestSpec:
    def test_param_count_small(self):
        assert MlpSpec((2, 5, 5, 1)).n_params == 51

    def test_param_count_large(self):
        assert MlpSpec((3, 50, 50, 3)).n_params == 2903

    def test_rejects_too_few_layers(self):
        with pytest.raises(ConfigError):
            MlpSpec((2, 1))

    def test_rejects_zero_width(self):
        with pytest.raises(ConfigError):
            MlpSpec((2, 0, 1))


class TestInit:
    def test_deterministic(self):
        spec = MlpSpec((2, 5, 5, 1))
        a = mlp_init(spec, 42)
        b = mlp_init(spec, 42)
        assert np.array_equal(a, b)

    def test_seed_changes_draw(self):
        spec = MlpSpec((2, 5, 5, 1))
        assert not np.array_equal(mlp_init(spec, 0), mlp_init(spec, 1))

    def test_glorot_bounds_and_zero_bias(self):
        spec = MlpSpec((4, 7, 2))
        params = mlp_init(spec, 3)
        w1 = params[: 4 * 7]
        b1 = params[4 * 7 : 4 * 7 + 7]
        assert np.all(np.abs(w1) <= np.sqrt(6.0 / (4 + 7)))
        assert np.all(b1 == 0.0)


class TestForward:
    def test_zero_params_zero_output(self):
        spec = MlpSpec((3, 4, 4, 2))
        out = mlp_forward(spec, np.zeros(spec.n_params), np.array([0.3, -1.0, 2.0]))
        assert np.array_equal(out, np.zeros(2))

    def test_one_neuron_chain(self):
        spec = MlpSpec((1, 1, 1))
        params = np.array([1.0, 0.0, 1.0, 0.0])  # w1, b1, w2, b2
        out = mlp_forward(spec, params, np.array([0.5]))
        assert out[0] == pytest.approx(np.tanh(0.5), abs=1e-12)
        assert out[0] == pytest.approx(0.46211716, abs=1e-8)

    def test_wrong_input_length(self):
        spec = MlpSpec((2, 3, 1))
        with pytest.raises(ValueError):
            mlp_forward(spec, np.zeros(spec.n_params), np.zeros(3))


class TestVjp:
    def test_zero_cotangent(self):
        spec = MlpSpec((2, 4, 2))
        params = mlp_init(spec, 0)
        g, gx = mlp_vjp(spec, params, np.array([0.1, 0.2]), np.zeros(2))
        assert np.array_equal(g, np.zeros_like(g))
        assert np.array_equal(gx, np.zeros(2))

    def test_one_neuron_input_grad(self):
        spec = MlpSpec((1, 1, 1))
        params = np.array([1.0, 0.0, 1.0, 0.0])
        _, gx = mlp_vjp(spec, params, np.array([0.5]), np.array([1.0]))
        assert gx[0] == pytest.approx(1.0 - np.tanh(0.5) ** 2, abs=1e-12)
        assert gx[0] == pytest.approx(0.78644773, abs=1e-8)

    @pytest.mark.parametrize("sizes,seed", [((2, 5, 5, 1), 0), ((3, 8, 8, 3), 1), ((1, 4, 2), 7)])
    def test_matches_finite_differences(self, sizes, seed):
        spec = MlpSpec(sizes)
        rng = np.random.default_rng(seed)
        params = mlp_init(spec, seed)
        x = rng.standard_normal(spec.in_dim)
        w = rng.standard_normal(spec.out_dim)
        g, gx = mlp_vjp(spec, params, x, w)
        fd_g = finite_diff_param_grad(spec, params, x, w)
        fd_x = finite_diff_input_grad(spec, params, x, w)
        denom = np.maximum(np.abs(fd_g), 1e-8)
        assert np.max(np.abs(g - fd_g) / denom) < 1e-6
        denom_x = np.maximum(np.abs(fd_x), 1e-8)
        assert np.max(np.abs(gx - fd_x) / denom_x) < 1e-6

    def test_linear_in_cotangent(self):
        spec = MlpSpec((2, 3, 2))
        params = mlp_init(spec, 5)
        x = np.array([0.4, -0.9])
        w1 = np.array([1.0, 0.0])
        w2 = np.array([0.0, 1.0])
        g1, gx1 = mlp_vjp(spec, params, x, w1)
        g2, gx2 = mlp_vjp(spec, params, x, w2)
        g12, gx12 = mlp_vjp(spec, params, x, w1 + 2 * w2)
        assert np.allclose(g12, g1 + 2 * g2, atol=1e-14)
        assert np.allclose(gx12, gx1 + 2 * gx2, atol=1e-14)

    def test_batch_gradient_is_sum_of_examples(self):
        spec = MlpSpec((2, 4, 1))
        params = mlp_init(spec, 2)
        rng = np.random.default_rng(0)
        xs = rng.standard_normal((5, 2))
        w = np.array([1.0])
        per_example = [mlp_vjp(spec, params, x, w)[0] for x in xs]
        total = np.sum(per_example, axis=0)
        step = 1e-5
        fd = np.zeros_like(params)
        for i in range(len(params)):
            p = params.copy()
            p[i] += step
            up = sum(mlp_forward(spec, p, x)[0] for x in xs)
            p[i] -= 2 * step
            down = sum(mlp_forward(spec, p, x)[0] for x in xs)
            fd[i] = (up - down) / (2 * step)
        assert np.max(np.abs(total - fd) / np.maximum(np.abs(fd), 1e-8)) < 1e-6

    def test_wrong_cotangent_length(self):
        spec = MlpSpec((2, 3, 1))
        with pytest.raises(ValueError):
            mlp_vjp(spec, np.zeros(spec.n_params), np.zeros(2), np.zeros(2))


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        spec = MlpSpec((2, 5, 5, 1))
        params = mlp_init(spec, 9)
        path = tmp_path / "net.ckpt.json"
        save_checkpoint(spec, params, path)
        spec2, params2 = load_checkpoint(path)
        assert spec2 == spec
        assert np.array_equal(params, params2)
