import math

import numpy as np
import pytest

from sixwheel.config import RunConfig
from sixwheel.errors import InvalidParameterError
from sixwheel.learn import (Adam, Chain, Linear, PolicyNet, Tanh, gae,
                            gae_simple, log_prob, ppo_update, sample_action)
from sixwheel.learn.policy import LOG2PI, OBS_SIZE


def _rand_obs(rng, n=1):
    return rng.normal(size=(n, OBS_SIZE)) * 0.3


class TestForward:
    def test_zero_weights_zero_outputs(self):
        net = PolicyNet(seed=0)
        for _, p, _ in net.params():
            p[...] = 0.0
        mean, value, _ = net.forward(_rand_obs(np.random.default_rng(0)))
        assert np.all(mean == 0.0)
        assert np.all(value == 0.0)

    def test_deterministic(self):
        net = PolicyNet(seed=1)
        obs = _rand_obs(np.random.default_rng(1))
        a = net.forward(obs)
        b = net.forward(obs)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])

    def test_mean_strictly_inside_unit_box(self):
        net = PolicyNet(seed=2)
        mean, _, _ = net.forward(_rand_obs(np.random.default_rng(2), 16) * 10)
        assert np.all(np.abs(mean) < 1.0)

    def test_nonfinite_input_identified(self):
        net = PolicyNet(seed=0)
        obs = np.zeros(OBS_SIZE)
        obs[123] = np.nan
        with pytest.raises(InvalidParameterError, match="123"):
            net.forward(obs)

    def test_jacobian_vector_product_matches_fd(self):
        net = PolicyNet(seed=3, dtype=np.float64)
        rng = np.random.default_rng(3)
        obs = _rand_obs(rng)
        v = rng.normal(size=(1, OBS_SIZE))
        v /= np.linalg.norm(v)
        eps = 1e-6
        for j in range(3):
            net.forward(obs)
            one_hot = np.zeros((1, 8))
            one_hot[0, j] = 1.0
            net.zero_grad()
            dobs = net.backward(one_hot, np.zeros(1))
            jvp = float(dobs @ v.T)
            f_plus = net.forward(obs + eps * v)[0][0, j]
            f_minus = net.forward(obs - eps * v)[0][0, j]
            fd = (f_plus - f_minus) / (2 * eps)
            assert jvp == pytest.approx(fd, rel=1e-6, abs=1e-10)


def _fd_check(build_loss, params, eps=1e-5, rel_tol=1e-4):
    """Central-difference check of analytic grads for each parameter array."""
    loss, grads = build_loss()
    for p, g in zip(params, grads):
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        idx = np.linspace(0, flat.size - 1, min(flat.size, 25)).astype(int)
        for i in idx:
            old = flat[i]
            flat[i] = old + eps
            lp, _ = build_loss(no_grad=True)
            flat[i] = old - eps
            lm, _ = build_loss(no_grad=True)
            flat[i] = old
            fd = (lp - lm) / (2 * eps)
            scale = max(abs(fd), abs(gflat[i]), 1e-8)
            assert abs(fd - gflat[i]) / scale < rel_tol, \
                f"grad mismatch at {i}: fd={fd} analytic={gflat[i]}"


class TestGradients:
    def test_linear_primitive(self):
        rng = np.random.default_rng(0)
        lin = Linear(3, 2, rng, dtype=np.float64)
        x = rng.normal(size=(4, 3))
        w = rng.normal(size=(4, 2))   # fixed weighting makes a scalar loss

        def build(no_grad=False):
            y = lin.forward(x)
            loss = float(np.sum(y * w))
            if not no_grad:
                lin.dW[...] = 0.0
                lin.db[...] = 0.0
                lin.backward(w)
            return loss, [lin.dW, lin.db]

        _fd_check(build, [lin.W, lin.b])

    def test_tanh_primitive(self):
        rng = np.random.default_rng(1)
        lin = Linear(3, 3, rng, dtype=np.float64)
        act = Tanh()
        x = rng.normal(size=(5, 3))
        w = rng.normal(size=(5, 3))

        def build(no_grad=False):
            y = act.forward(lin.forward(x))
            loss = float(np.sum(y * w))
            if not no_grad:
                lin.dW[...] = 0.0
                lin.db[...] = 0.0
                lin.backward(act.backward(w))
            return loss, [lin.dW, lin.db]

        _fd_check(build, [lin.W, lin.b])

    def test_toy_net_full_fd(self):
        """Complete central-difference sweep of a ~10-parameter network."""
        rng = np.random.default_rng(2)
        net = Chain(Linear(2, 2, rng, dtype=np.float64), Tanh(),
                    Linear(2, 1, rng, dtype=np.float64))
        x = rng.normal(size=(6, 2))
        target = rng.normal(size=(6, 1))

        def build(no_grad=False):
            y = net.forward(x)
            loss = float(0.5 * np.mean((y - target) ** 2))
            if not no_grad:
                for _, _, g in net.params():
                    g[...] = 0.0
                net.backward((y - target) / y.shape[0])
            return loss, [g for _, _, g in net.params()]

        _fd_check(build, [p for _, p, _ in net.params()])

    def test_policy_loss_gradient_vs_fd(self):
        """End-to-end PPO surrogate + value loss through the real network."""
        cfg = RunConfig().train
        net = PolicyNet(seed=4, dtype=np.float64)
        rng = np.random.default_rng(4)
        obs = _rand_obs(rng, 6)
        actions = rng.normal(size=(6, 8)) * 0.3
        old_lp = log_prob(actions, *_mean_std(net, obs))
        old_lp = old_lp + rng.normal(size=6) * 0.05
        adv = rng.normal(size=6)
        ret = rng.normal(size=6)

        def build(no_grad=False):
            mean, value, log_std = net.forward(obs)
            sigma = np.exp(log_std)
            z = (actions - mean) / sigma
            new_lp = np.sum(-0.5 * z * z - np.log(sigma) - 0.5 * LOG2PI, axis=1)
            ratio = np.exp(new_lp - old_lp)
            surr1 = ratio * adv
            surr2 = np.clip(ratio, 1 - cfg.clip, 1 + cfg.clip) * adv
            pl = -np.mean(np.minimum(surr1, surr2))
            vl = 0.5 * np.mean((value - ret) ** 2)
            loss = float(pl + cfg.value_coef * vl)
            if not no_grad:
                b = len(adv)
                use1 = surr1 <= surr2
                inside = (ratio > 1 - cfg.clip) & (ratio < 1 + cfg.clip)
                dratio = -(adv * np.where(use1, 1.0, inside)) / b
                dlp = dratio * ratio
                dmean = dlp[:, None] * (z / sigma)
                dlogstd = np.sum(dlp[:, None] * (z * z - 1.0), axis=0)
                dvalue = cfg.value_coef * (value - ret) / b
                net.zero_grad()
                net.backward(dmean, dvalue)
                net.dlog_std += dlogstd
            return loss, [g for _, _, g in net.params()]

        _fd_check(build, [p for _, p, _ in net.params()])


def _mean_std(net, obs):
    mean, _, log_std = net.forward(obs)
    return mean, log_std


class TestSampling:
    def test_sigma_zero_limit(self):
        mean = np.array([0.2, -0.4, 0.0, 0.9, -1.0, 0.3, 0.1, 0.5])
        a, _ = sample_action(mean, np.full(8, -40.0), np.random.default_rng(0))
        assert np.allclose(a, mean, atol=1e-12)

    def test_standard_normal_log_prob(self):
        lp = log_prob(np.zeros(8), np.zeros(8), np.zeros(8))
        assert lp == pytest.approx(-4.0 * math.log(2 * math.pi), abs=1e-12)
        assert lp == pytest.approx(-7.3516, abs=1e-4)

    def test_monte_carlo_std(self):
        rng = np.random.default_rng(9)
        sigma = 0.37
        samples = np.array([
            sample_action(np.zeros(8), np.full(8, math.log(sigma)), rng)[0]
            for _ in range(100_000 // 8)])
        assert np.std(samples) == pytest.approx(sigma, rel=0.01)

    def test_log_prob_matches_product_of_densities(self):
        rng = np.random.default_rng(10)
        mean = rng.normal(size=8)
        log_std = rng.normal(size=8) * 0.3
        a = rng.normal(size=8)
        joint = math.exp(log_prob(a, mean, log_std))
        prod = 1.0
        for i in range(8):
            s = math.exp(log_std[i])
            prod *= math.exp(-0.5 * ((a[i] - mean[i]) / s) ** 2) / (
                s * math.sqrt(2 * math.pi))
        assert joint == pytest.approx(prod, rel=1e-12)


class TestGAE:
    def test_td0_single_step(self):
        adv, ret = gae_simple([1.0], [0.5], [False], 0.9, 0.0, bootstrap=2.0)
        assert adv[0] == pytest.approx(1.0 + 0.9 * 2.0 - 0.5)
        assert ret[0] == pytest.approx(adv[0] + 0.5)

    def test_lambda_one_is_monte_carlo(self):
        rewards = np.array([1.0, 0.5, -0.2, 2.0])
        values = np.array([0.3, 0.1, -0.5, 0.9])
        terminals = np.array([False, False, False, True])
        gamma = 0.95
        adv, _ = gae_simple(rewards, values, terminals, gamma, 1.0)
        for t in range(4):
            mc = sum(gamma ** (k - t) * rewards[k] for k in range(t, 4))
            assert adv[t] == pytest.approx(mc - values[t], abs=1e-12)

    def test_matches_brute_force_double_sum(self):
        rng = np.random.default_rng(11)
        T_ = 20
        rewards = rng.normal(size=T_)
        values = rng.normal(size=T_)
        terminals = np.zeros(T_, dtype=bool)
        terminals[[7, 15]] = True
        gamma, lam = 0.995, 0.95
        bootstrap = float(rng.normal())
        adv, ret = gae_simple(rewards, values, terminals, gamma, lam, bootstrap)

        # O(T^2) oracle: adv_t = sum_l (gamma*lam)^l * delta_{t+l} within the
        # episode segment of t
        next_values = np.empty(T_)
        next_values[:-1] = values[1:]
        next_values[-1] = bootstrap
        next_values[:-1][terminals[:-1]] = 0.0
        if terminals[-1]:
            next_values[-1] = 0.0
        deltas = rewards + gamma * next_values - values
        ends = np.flatnonzero(terminals).tolist() + [T_ - 1]
        for t in range(T_):
            end = min(e for e in ends if e >= t)
            expected = sum((gamma * lam) ** (l - t) * deltas[l]
                           for l in range(t, end + 1))
            assert adv[t] == pytest.approx(expected, abs=1e-10)
            assert ret[t] == pytest.approx(expected + values[t], abs=1e-10)

    def test_length_mismatch_raises(self):
        with pytest.raises(InvalidParameterError):
            gae(np.zeros(3), np.zeros(4), np.zeros(3, bool), np.zeros(3),
                0.99, 0.95)


def _make_batch(net, rng, n=64):
    obs = _rand_obs(rng, n).astype(np.float32)
    mean, value, log_std = net.forward(obs)
    sigma = np.exp(log_std.astype(np.float64))
    z = rng.normal(size=(n, 8))
    actions = mean.astype(np.float64) + sigma * z
    logp = np.sum(-0.5 * z * z - np.log(sigma) - 0.5 * LOG2PI, axis=1)
    adv = rng.normal(size=n)
    adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    return {"obs": obs, "actions": actions, "log_probs": logp,
            "advantages": adv, "returns": rng.normal(size=n)}


class TestPPOUpdate:
    def test_zero_lr_keeps_params_and_kl_zero(self):
        cfg = RunConfig().train
        net = PolicyNet(seed=5)
        rng = np.random.default_rng(5)
        batch = _make_batch(net, rng)
        before = net.copy_params()
        opt = Adam(net.params(), lr=0.0)
        stats = ppo_update(net, opt, batch, cfg, np.random.default_rng(1))
        for b, (_, p, _) in zip(before, net.params()):
            assert np.array_equal(b, p)
        assert abs(stats.approx_kl) < 1e-9
        assert not stats.rejected

    def test_zero_advantage_freezes_policy_heads(self):
        cfg = RunConfig().train
        net = PolicyNet(seed=6)
        rng = np.random.default_rng(6)
        batch = _make_batch(net, rng)
        batch["advantages"] = np.zeros_like(batch["advantages"])
        mean_before = net.mean_head.W.copy()
        log_std_before = net.log_std.copy()
        value_before = net.value_head.W.copy()
        opt = Adam(net.params(), lr=1e-3)
        ppo_update(net, opt, batch, cfg, np.random.default_rng(1))
        assert np.array_equal(net.mean_head.W, mean_before)
        assert np.array_equal(net.log_std, log_std_before)
        assert not np.array_equal(net.value_head.W, value_before)

    def test_kl_gate_stops_epochs(self):
        cfg = RunConfig().train
        net = PolicyNet(seed=7)
        rng = np.random.default_rng(7)
        batch = _make_batch(net, rng)
        batch["log_probs"] = batch["log_probs"] - 5.0   # fake a huge shift
        opt = Adam(net.params(), lr=1e-3)
        stats = ppo_update(net, opt, batch, cfg, np.random.default_rng(1))
        assert stats.epochs_run == 1
        assert stats.approx_kl > cfg.kl_stop

    def test_nonfinite_loss_rejects_update(self):
        cfg = RunConfig().train
        net = PolicyNet(seed=8)
        rng = np.random.default_rng(8)
        batch = _make_batch(net, rng)
        batch["advantages"][0] = np.inf
        before = net.copy_params()
        opt = Adam(net.params(), lr=1e-3)
        stats = ppo_update(net, opt, batch, cfg, np.random.default_rng(1))
        assert stats.rejected
        for b, (_, p, _) in zip(before, net.params()):
            assert np.array_equal(b, p)


class TestCheckpoint:
    def test_round_trip_bit_identical(self, tmp_path):
        net = PolicyNet(seed=9)
        opt = Adam(net.params(), lr=1e-3)
        rng = np.random.default_rng(9)
        batch = _make_batch(net, rng)
        ppo_update(net, opt, batch, RunConfig().train, np.random.default_rng(2))
        obs = _rand_obs(rng, 4)
        path = tmp_path / "p.ckpt"
        net.save(path, opt, meta={"step": 1})
        net2, opt2, meta = PolicyNet.load(path, optimizer_lr=1e-3)
        assert meta["step"] == 1
        a = net.forward(obs)
        b = net2.forward(obs)
        assert np.array_equal(a[0], b[0])
        assert np.array_equal(a[1], b[1])
        assert np.array_equal(a[2], b[2])
        assert opt2.t == opt.t
        for x, y in zip(opt.state_arrays(), opt2.state_arrays()):
            assert np.array_equal(x.astype(np.float32), y)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"NOTACKPT" + b"\x00" * 32)
        with pytest.raises(InvalidParameterError):
            PolicyNet.load(path)
