import numpy as np
import pytest

from lavabridge.learner import LearnerConfig, SACLearner
from lavabridge.nets import MLP, Adam, SquashedGaussianHead, ema_update

H = 1e-5       # central-difference step
TOL = 1e-4     # max relative error


def central_diff(loss_fn, params):
    """Numerical gradient of loss_fn() with respect to every entry of params."""
    grads = [np.zeros_like(p) for p in params]
    for p, g in zip(params, grads):
        flat_p = p.reshape(-1)
        flat_g = g.reshape(-1)
        for i in range(flat_p.size):
            orig = flat_p[i]
            flat_p[i] = orig + H
            hi = loss_fn()
            flat_p[i] = orig - H
            lo = loss_fn()
            flat_p[i] = orig
            flat_g[i] = (hi - lo) / (2 * H)
    return grads


def max_rel_error(analytic, numeric):
    worst = 0.0
    for ga, gn in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(ga), np.abs(gn)), 1e-6)
        worst = max(worst, float(np.max(np.abs(ga - gn) / denom)))
    return worst


class TestMLP:
    def test_forward_shapes(self):
        net = MLP((4, 8, 8, 3), np.random.default_rng(0))
        y, cache = net.forward(np.zeros((5, 4)))
        assert y.shape == (5, 3)
        assert len(cache) == 4

    def test_zero_net_outputs_zero(self):
        net = MLP((4, 8, 2))
        y, _ = net.forward(np.ones((1, 4)))
        assert np.all(y == 0.0)

    def test_params_are_views_of_flat(self):
        net = MLP((3, 4, 2), np.random.default_rng(1))
        net.flat[...] = 0.0
        assert all(np.all(p == 0.0) for p in net.params)
        net.params[0][0, 0] = 5.0
        assert net.flat[0] == 5.0

    def test_param_gradients_match_finite_differences(self):
        rng = np.random.default_rng(1)
        net = MLP((4, 8, 8, 3), rng)
        x = rng.standard_normal((6, 4))
        w = rng.standard_normal((6, 3))  # fixed mixing to make the loss scalar

        def loss():
            y, _ = net.forward(x)
            return float(np.sum(w * np.tanh(y)))

        y, cache = net.forward(x)
        flat, _ = net.backward(cache, w * (1.0 - np.tanh(y) ** 2))
        numeric = central_diff(loss, net.params)
        assert max_rel_error(net.unflatten(flat), numeric) <= TOL

    def test_input_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(2)
        net = MLP((3, 8, 1), rng)
        x = rng.standard_normal((4, 3))
        y, cache = net.forward(x)
        _, dx = net.backward(cache, np.ones_like(y))
        numeric = np.zeros_like(x)
        for i in range(x.size):
            orig = x.reshape(-1)[i]
            x.reshape(-1)[i] = orig + H
            hi = float(np.sum(net.forward(x)[0]))
            x.reshape(-1)[i] = orig - H
            lo = float(np.sum(net.forward(x)[0]))
            x.reshape(-1)[i] = orig
            numeric.reshape(-1)[i] = (hi - lo) / (2 * H)
        assert max_rel_error([dx], [numeric]) <= TOL

    def test_float32_matches_float64_forward(self):
        rng = np.random.default_rng(3)
        net64 = MLP((4, 8, 2), rng)
        net32 = MLP((4, 8, 2), dtype=np.float32)
        net32.flat[...] = net64.flat
        x = rng.standard_normal((5, 4))
        y64, _ = net64.forward(x)
        y32, _ = net32.forward(x.astype(np.float32))
        assert np.allclose(y32, y64, atol=1e-5)


class TestAdamAndTargets:
    def test_adam_first_step_is_scaled_lr(self):
        # With fresh moments the first step is lr-sized regardless of gradient scale.
        net = MLP((1, 1))
        net.flat[...] = np.array([1.0, -2.0])
        opt = Adam(net, lr=0.1)
        opt.step(np.array([3.0, -4.0]))
        assert np.allclose(net.flat, [1.0 - 0.1, -2.0 + 0.1], atol=1e-6)

    def test_adam_descends_quadratic(self):
        net = MLP((1, 1))
        net.flat[...] = np.array([5.0, 5.0])
        opt = Adam(net, lr=0.05)
        for _ in range(500):
            opt.step(2.0 * net.flat)
        assert np.max(np.abs(net.flat)) < 1e-2

    def test_ema_tau_one_copies_exactly(self):
        a = MLP((2, 3))
        b = MLP((2, 3), np.random.default_rng(4))
        ema_update(a, b, tau=1.0)
        assert np.array_equal(a.flat, b.flat)

    def test_ema_blend(self):
        a = MLP((2, 2))
        b = MLP((2, 2))
        b.flat[...] = 1.0
        ema_update(a, b, tau=0.005)
        assert np.allclose(a.flat, 0.005)


class TestSquashedHead:
    def test_log_std_bounds_are_smoothly_enforced(self):
        head = SquashedGaussianHead(2, 1.0, -3.0, 1.0)
        raw = np.array([[-100.0, 100.0]])
        ls = head.log_std(raw)
        assert ls[0, 0] >= -3.0 - 1e-12
        assert ls[0, 1] <= 1.0 + 1e-12

    def test_log_prob_matches_change_of_variables(self):
        # Direct density check against the naive formula away from saturation.
        head = SquashedGaussianHead(1, 1.0, -3.0, 1.0)
        out = np.array([[0.3, 0.1]])
        xi = np.array([[0.7]])
        _, logp, _ = head.sample(out, xi)
        mu, raw = 0.3, 0.1
        log_std = -3.0 + 0.5 * 4.0 * (np.tanh(raw) + 1.0)
        std = np.exp(log_std)
        u = mu + std * 0.7
        naive = (-0.5 * 0.7**2 - log_std - 0.5 * np.log(2 * np.pi)
                 - np.log(1.0 - np.tanh(u) ** 2))
        assert abs(logp[0] - naive) < 1e-10


def make_learner(hidden=(8, 8), alpha=0.2, seed=3):
    cfg = LearnerConfig(hidden=hidden, alpha=alpha, batch_size=4, buffer_capacity=16,
                        dtype="float64")
    rng = np.random.default_rng(seed)
    return SACLearner(cfg, init_rng=rng, noise_rng=np.random.default_rng(seed + 1))


class TestGradientChecks:
    """Analytic gradients of the actual update losses vs central differences."""

    def test_critic_gradients(self):
        learner = make_learner()
        rng = np.random.default_rng(4)
        s = rng.uniform(0, 10, size=(16, 4))
        a = rng.uniform(-1, 1, size=(16, 2))
        y = rng.standard_normal(16)

        _, grad = learner.critic_loss_and_grads(s, a, y)
        for member in (0, 1):
            numeric = central_diff(lambda: learner.critic_loss_and_grads(s, a, y)[0],
                                   learner.q.net_params(member))
            analytic = learner.q.net_params(member, grad)
            assert max_rel_error(analytic, numeric) <= TOL

    def test_policy_gradients(self):
        learner = make_learner()
        rng = np.random.default_rng(5)
        s = rng.uniform(0, 10, size=(16, 4))
        xi = rng.standard_normal((16, 2))

        # Keep the twin-min selection stable under the +-1e-5 perturbations.
        out, _ = learner.policy.forward(s)
        a_new, _, _ = learner.head.sample(out, xi)
        sa = np.concatenate([s, a_new], axis=1)
        qq = learner.q.forward(sa)[0]
        assert np.min(np.abs(qq[0, :, 0] - qq[1, :, 0])) > 1e-3

        _, grads, _ = learner.policy_loss_and_grads(s, xi)
        numeric = central_diff(lambda: learner.policy_loss_and_grads(s, xi)[0],
                               learner.policy.params)
        assert max_rel_error(learner.policy.unflatten(grads), numeric) <= TOL

    def test_policy_gradients_small_alpha(self):
        learner = make_learner(alpha=0.002, seed=6)
        rng = np.random.default_rng(7)
        s = rng.uniform(0, 10, size=(8, 4))
        xi = rng.standard_normal((8, 2))
        _, grads, _ = learner.policy_loss_and_grads(s, xi)
        numeric = central_diff(lambda: learner.policy_loss_and_grads(s, xi)[0],
                               learner.policy.params)
        assert max_rel_error(learner.policy.unflatten(grads), numeric) <= TOL
