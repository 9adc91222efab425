import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from burrow.control import Mode
from burrow.learn import (Adam, Checkpoint, CheckpointDimensionError, CheckpointFormatError, PolicySpec, PpoConfig,
                          RunningNormalizer, Trainer, TrainSettings, compute_gae, corridor_specs,
                          gaussian_log_prob, init_policy, load_checkpoint, policy_forward, save_checkpoint)
from burrow.learn.checkpoint import decode_checkpoint, encode_checkpoint
from burrow.learn.policy import policy_backward, sample_actions
from burrow.learn.ppo import RolloutBuffer, normalize_advantages, ppo_loss_and_grads, ppo_update
from burrow.sim import SimConfig
from burrow.world import generate_env

import oracles


class TestAdvantages:
    def random_rollout(self, rng, T=17, N=5):
        rewards = rng.normal(size=(T, N))
        values = rng.normal(size=(T, N))
        dones = (rng.random((T, N)) < 0.15).astype(float)
        return rewards, values, dones, rng.normal(size=N)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(0)
        for gamma, lam in [(0.99, 0.95), (0.9, 0.5), (1.0, 1.0), (0.99, 0.0)]:
            r, v, d, b = self.random_rollout(rng)
            adv, ret = compute_gae(r, v, d, b, gamma, lam)
            ref_adv, ref_ret = oracles.discounted_advantages(r, v, d, b, gamma, lam)
            assert np.abs(adv - ref_adv).max() < 1e-10
            assert np.abs(ret - ref_ret).max() < 1e-10

    def test_lambda_one_gives_monte_carlo_returns(self):
        rng = np.random.default_rng(1)
        r, v, d, b = self.random_rollout(rng, 30, 4)
        _, ret = compute_gae(r, v, d, b, 0.97, 1.0)
        assert np.abs(ret - oracles.monte_carlo_returns(r, d, b, 0.97)).max() < 1e-10

    def test_lambda_zero_is_one_step_td(self):
        r = np.array([[1.0], [2.0]])
        v = np.array([[0.5], [0.25]])
        adv, _ = compute_gae(r, v, np.zeros((2, 1)), np.array([4.0]), 0.5, 0.0)
        assert adv[:, 0].tolist() == [1.0 + 0.5 * 0.25 - 0.5, 2.0 + 0.5 * 4.0 - 0.25]

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            compute_gae(np.zeros((3, 2)), np.zeros((3, 1)), np.zeros((3, 2)), np.zeros(2), 0.9, 0.9)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-100, 100), min_size=2, max_size=200))
    def test_normalized_advantages(self, xs):
        x = np.array(xs)
        if x.std() < 1e-3:
            return
        z = normalize_advantages(x)
        assert abs(z.mean()) < 1e-9 and abs(z.std() - 1.0) < 1e-6


class TestPolicy:
    spec = PolicySpec(obs_dim=7, hidden=(16,), value_hidden=(16,))

    def test_zero_initial_mean(self):
        spec = PolicySpec(obs_dim=249)
        params = init_policy(spec, np.random.default_rng(0))
        mean, log_std, value = policy_forward(spec, params, np.random.default_rng(1).normal(size=(8, 249)))
        assert np.all(mean == 0.0) and np.all(log_std == -1.0) and value.shape == (8,)

    def test_log_prob_matches_oracle(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            mean, a = rng.normal(size=(2, 12))
            log_std = rng.uniform(-3, 0.5, 12)
            got = gaussian_log_prob(a, mean, log_std)
            assert got == pytest.approx(oracles.gaussian_log_density(a, mean, np.exp(log_std)), abs=1e-9)

    def test_sampling_moments(self):
        rng = np.random.default_rng(3)
        mean = np.tile(np.linspace(-1, 1, 12), (200_000, 1))
        log_std = np.full_like(mean, math.log(0.3))
        x = sample_actions(mean, log_std, rng)
        assert np.abs(x.mean(axis=0) - mean[0]).max() < 0.005
        assert np.abs(x.std(axis=0) - 0.3).max() < 0.005

    def test_dimension_checked(self):
        params = init_policy(self.spec, np.random.default_rng(0))
        with pytest.raises(ValueError, match="expects 7"):
            policy_forward(self.spec, params, np.zeros(8))

    def test_backward_matches_finite_differences(self):
        rng = np.random.default_rng(4)
        params = init_policy(self.spec, rng, np.float64, final_scale=0.5)
        obs = rng.normal(size=(6, 7))
        w_mean, w_value, w_ls = rng.normal(size=(6, 12)), rng.normal(size=6), rng.normal(size=12)

        def f(p):
            m, ls, v = policy_forward(self.spec, p, obs)
            return float(np.sum(w_mean * m) + np.sum(w_value * v) + np.sum(w_ls * ls[0]))

        grads = policy_backward(self.spec, params, obs, w_mean, w_ls, w_value)
        check_fd(f, params, grads, rng)


def check_fd(f, params, grads, rng, eps=1e-6, samples=12):
    worst = 0.0
    for block, grad in zip(params.blocks(), grads):
        flat = block.reshape(-1)
        for k in rng.choice(flat.size, size=min(samples, flat.size), replace=False):
            old = flat[k]
            flat[k] = old + eps
            up = f(params)
            flat[k] = old - eps
            down = f(params)
            flat[k] = old
            fd = (up - down) / (2 * eps)
            g = grad.reshape(-1)[k]
            worst = max(worst, abs(fd - g) / max(1.0, abs(fd), abs(g)))
    assert worst < 1e-4


class TestPpoLoss:
    spec = PolicySpec(obs_dim=9, hidden=(16,), value_hidden=(16,))

    def batch(self, rng, params, b=32, spread=0.05):
        obs = rng.normal(size=(b, 9))
        mean, log_std, _ = policy_forward(self.spec, params, obs)
        actions = mean + np.exp(log_std) * rng.normal(size=mean.shape)
        # old log-probs near the current ones keep every ratio inside the clip band
        old = gaussian_log_prob(actions, mean, log_std) + rng.uniform(-spread, spread, b)
        return obs, actions, old, rng.normal(size=b), rng.normal(size=b)

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(5)
        params = init_policy(self.spec, rng, np.float64, final_scale=0.5)
        obs, act, old, adv, ret = self.batch(rng, params)
        cfg = PpoConfig()
        _, grads, stats = ppo_loss_and_grads(self.spec, params, obs, act, old, adv, ret, cfg)
        assert stats["clip_fraction"] == 0.0
        check_fd(lambda p: ppo_loss_and_grads(self.spec, p, obs, act, old, adv, ret, cfg)[0], params, grads, rng)

    def test_clipped_ratios_give_zero_policy_gradient(self):
        rng = np.random.default_rng(6)
        params = init_policy(self.spec, rng, np.float64, final_scale=0.5)
        obs, act, old, _, ret = self.batch(rng, params)
        adv = np.abs(rng.normal(size=len(old))) + 0.1
        old = old - 1.0  # every ratio is e > 1.2 with a positive advantage
        cfg = PpoConfig(entropy_coef=0.0, value_coef=0.0)
        _, grads, stats = ppo_loss_and_grads(self.spec, params, obs, act, old, adv, ret, cfg)
        assert stats["clip_fraction"] == 1.0
        assert all(np.all(g == 0) for g in grads)

    def test_gradient_step_lowers_loss(self):
        rng = np.random.default_rng(7)
        params = init_policy(self.spec, rng, np.float64, final_scale=0.5)
        obs, act, old, adv, ret = self.batch(rng, params)
        cfg = PpoConfig()
        before, grads, _ = ppo_loss_and_grads(self.spec, params, obs, act, old, adv, ret, cfg)
        for b, g in zip(params.blocks(), grads):
            b -= 1e-3 * g
        after, _, _ = ppo_loss_and_grads(self.spec, params, obs, act, old, adv, ret, cfg)
        assert after < before

    def test_update_reduces_surrogate_on_fixed_batch(self):
        rng = np.random.default_rng(8)
        spec = self.spec
        params = init_policy(spec, rng, np.float32)
        buf = RolloutBuffer.empty(16, 8, 9)
        for _ in range(16):
            obs = rng.normal(size=(8, 9)).astype(np.float32)
            mean, log_std, value = policy_forward(spec, params, obs)
            a = sample_actions(mean, log_std, rng)
            lp = gaussian_log_prob(a.astype(float), mean.astype(float), log_std.astype(float))
            buf.add(obs, a, lp, value, obs[:, 0].astype(float), np.zeros(8))
        buf.bootstrap = np.zeros(8)
        cfg = PpoConfig(adaptive_kl=False, learning_rate=1e-3)
        adv, ret = compute_gae(buf.rewards, buf.values, buf.dones, buf.bootstrap, cfg.gamma, cfg.lam)
        flat = lambda x: x.reshape(128, -1).squeeze()
        args = (flat(buf.obs), flat(buf.actions), flat(buf.log_probs), normalize_advantages(flat(adv)), flat(ret))
        before = ppo_loss_and_grads(spec, params, *args, cfg)[2]
        opt = Adam(params.blocks(), cfg.learning_rate)
        ppo_update(buf, cfg, spec, params, opt, rng)
        after = ppo_loss_and_grads(spec, params, *args, cfg)[2]
        assert after["policy_loss"] < before["policy_loss"]
        assert after["value_loss"] < before["value_loss"]


class TestOptimAndNormalizer:
    def test_adam_first_step(self):
        p = [np.array([1.0, -2.0, 0.5])]
        opt = Adam(p, lr=0.1)
        opt.step(p, [np.array([3.0, -0.5, 0.0])])
        # bias-corrected first step moves each coordinate by lr * g / (|g| + eps)
        assert p[0] == pytest.approx([0.9, -1.9, 0.5], abs=1e-7)

    def test_normalizer_matches_batch_statistics(self):
        rng = np.random.default_rng(9)
        chunks = [rng.normal(3.0, 2.0, size=(n, 4)) for n in (5, 50, 500, 7)]
        norm = RunningNormalizer(4)
        for c in chunks:
            norm.update(c)
        allx = np.vstack(chunks)
        assert norm.mean == pytest.approx(allx.mean(axis=0), abs=1e-5)
        assert norm.var == pytest.approx(allx.var(axis=0), rel=1e-4)
        z = norm.normalize(np.full((1, 4), 1e6))
        assert np.all(z == 10.0)


class TestCheckpoint:
    def make(self, mode=Mode.HIERARCHICAL, hidden=(16, 8)):
        spec = PolicySpec(obs_dim=mode.obs_dim, hidden=hidden, value_hidden=hidden)
        params = init_policy(spec, np.random.default_rng(0), final_scale=0.3)
        norm = RunningNormalizer(mode.obs_dim)
        norm.update(np.random.default_rng(1).normal(size=(10, mode.obs_dim)))
        return Checkpoint(mode, spec, params, norm)

    def test_round_trip(self, tmp_path):
        ck = self.make(Mode.PARAM_SKILLS)
        save_checkpoint(ck, tmp_path / "p.brsm")
        back = load_checkpoint(tmp_path / "p.brsm", expect_mode="param_skills")
        assert back.mode is Mode.PARAM_SKILLS and back.spec == ck.spec
        for a, b in zip(ck.params.blocks(), back.params.blocks()):
            assert np.array_equal(a.astype(np.float32), b)
        assert np.array_equal(back.normalizer.mean, ck.normalizer.mean.astype(np.float32))
        obs = np.random.default_rng(2).normal(size=(4, 253))
        assert np.array_equal(policy_forward(ck.spec, ck.params, obs)[0], policy_forward(back.spec, back.params, obs)[0])

    def test_bad_magic(self):
        data = bytearray(encode_checkpoint(self.make()))
        data[:4] = b"NOPE"
        with pytest.raises(CheckpointFormatError, match="magic"):
            decode_checkpoint(bytes(data))

    def test_truncation_anywhere(self):
        data = encode_checkpoint(self.make())
        for cut in list(range(0, 200, 7)) + [len(data) - 1, len(data) // 2]:
            with pytest.raises(CheckpointFormatError):
                decode_checkpoint(data[:cut])
        with pytest.raises(CheckpointFormatError, match="trailing"):
            decode_checkpoint(data + b"\0")

    def test_dimension_mismatch_rejected(self, tmp_path):
        ck = self.make(Mode.HIERARCHICAL)
        lying = Checkpoint(Mode.PARAM_SKILLS, ck.spec, ck.params, ck.normalizer)
        with pytest.raises(CheckpointDimensionError, match="249"):
            decode_checkpoint(encode_checkpoint(lying))
        save_checkpoint(ck, tmp_path / "h.brsm")
        with pytest.raises(CheckpointDimensionError):
            load_checkpoint(tmp_path / "h.brsm", expect_mode="param_skills")
        with pytest.raises(CheckpointDimensionError):
            load_checkpoint(tmp_path / "h.brsm", expect_mode="end_to_end")

    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointFormatError):
            load_checkpoint(tmp_path / "none.brsm")


SMALL = dict(sim=SimConfig(horizon=40), ppo=PpoConfig(horizon=8, epochs=2, minibatches=2),
             settings=TrainSettings(total_steps=10_000, hidden=(16,), checkpoint_every=3))


def small_specs():
    return [generate_env(s, d) for s in range(2) for d in ("easy", "hard")]


def blocks_equal(a, b):
    return all(np.array_equal(x, y) for x, y in zip(a.params.blocks(), b.params.blocks()))


class TestTraining:
    def test_same_seed_same_run(self, tmp_path):
        runs = []
        for name, workers in (("a", 1), ("b", 3)):
            t = Trainer("param_skills", small_specs(), tmp_path / name, seed=5, workers=workers, **SMALL)
            res = t.run(max_updates=10)
            runs.append((t, res))
            t.close()
        (ta, ra), (tb, rb) = runs
        assert blocks_equal(ta, tb)
        assert (tmp_path / "a/metrics.csv").read_bytes() == (tmp_path / "b/metrics.csv").read_bytes()
        assert ra.updates == 10 and ra.env_steps == 10 * 8 * 4
        other = Trainer("param_skills", small_specs(), tmp_path / "c", seed=6, **SMALL)
        other.run(max_updates=2)
        assert not blocks_equal(ta, other)

    def test_resume_is_bit_exact(self, tmp_path):
        whole = Trainer("hierarchical", small_specs(), tmp_path / "whole", seed=1, **SMALL)
        whole.run(max_updates=6)
        first = Trainer("hierarchical", small_specs(), tmp_path / "part", seed=1, **SMALL)
        first.run(max_updates=3)
        first.close()
        second = Trainer("hierarchical", small_specs(), tmp_path / "part", seed=1, **SMALL)
        second.load()
        second.run(max_updates=3)
        assert second.update == 6 and blocks_equal(whole, second)
        assert (tmp_path / "whole/metrics.csv").read_bytes() == (tmp_path / "part/metrics.csv").read_bytes()

    def test_mode_mismatch_on_load(self, tmp_path):
        t = Trainer("hierarchical", small_specs(), tmp_path, seed=1, **SMALL)
        t.run(max_updates=1)
        with pytest.raises(ValueError):
            Trainer("end_to_end", small_specs(), tmp_path, seed=1, **SMALL).load()

    def test_curriculum_trace(self, tmp_path):
        settings = TrainSettings(total_steps=10_000, hidden=(16,), curriculum_window=4, curriculum_min_episodes=2)
        t = Trainer("e2e", corridor_specs(2), tmp_path, seed=0, sim=SimConfig(horizon=40),
                    ppo=PpoConfig(horizon=4, epochs=1, minibatches=1), settings=settings)
        # replace the episode outcomes so the success stream is scripted
        script = iter([[], [1, 1], [1], [0, 0], [0, 1, 1], [1, 1], [1, 1], [1, 1], [1, 1], [1, 1], [1, 1]])
        real = t.collect

        def collect():
            buf, _, mean_r = real()
            return buf, [(ok, 0) for ok in next(script)], mean_r

        t.collect = collect
        trace = [t.step_update()["x_g"] for _ in range(11)]
        assert trace == pytest.approx([0.6, 0.8, 0.8, 0.8, 1.0, 1.2, 1.4, 1.6, 1.75, 1.75, 1.75])
        assert all(b >= a for a, b in zip(trace, trace[1:]))


def test_corridor_specs():
    specs = corridor_specs(3, 1.0)
    assert [s.goal_xy for s in specs] == [(-0.75, 0.0)] * 3
    assert all(not s.pyramids() for s in specs)
