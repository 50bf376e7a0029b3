import dataclasses
import math

import numpy as np
import pytest
from oracles import central_difference, max_relative_error
from scipy.stats import norm

from losc.config import Config
from losc.nets import init_layers
from losc.ppo import (
    Adam,
    Batch,
    EpisodeRollout,
    ObsScaler,
    RolloutSet,
    ServoState,
    TrainerConfig,
    clipped_surrogate,
    collect_rollouts,
    compute_returns_advantages,
    discounted_returns,
    gaussian_kl,
    gaussian_log_prob,
    kl_servo,
    make_batch,
    mean_kl,
    policy_mean,
    ppo_update,
    surrogate_objective,
    train,
    value_loss,
)
from losc.nets import NetSpec, init_params


class TestReturns:
    def test_dual_discount_hand_value(self):
        g = discounted_returns([1.0, 1.0, 1.0], [0.0, 0.0, 10.0], 0.95, 0.995)
        assert g[0] == pytest.approx(1 + 0.95 + 0.95**2 + 10 * 0.995**2, abs=1e-12)
        assert g[2] == pytest.approx(11.0)
        assert g[1] == pytest.approx(1 + 0.95 + 10 * 0.995, abs=1e-12)

    def test_streams_are_independent(self):
        rs = np.array([0.5, -0.2, 0.1, 0.0])
        rt = np.array([0.0, 0.0, 0.0, 7.0])
        both = discounted_returns(rs, rt, 0.9, 0.99)
        only_s = discounted_returns(rs, np.zeros(4), 0.9, 0.99)
        only_t = discounted_returns(np.zeros(4), rt, 0.9, 0.99)
        np.testing.assert_allclose(both, only_s + only_t, atol=1e-15)

    def test_advantages_normalized(self):
        rng = np.random.default_rng(0)
        eps = []
        for n in (5, 9, 3):
            eps.append(_episode(rng, n))
        rs = compute_returns_advantages(RolloutSet(eps), 0.95, 0.995)
        adv = np.concatenate([e.advantages for e in rs])
        assert abs(adv.mean()) < 1e-12
        assert adv.std() == pytest.approx(1.0, abs=1e-6)


def _episode(rng, n, obs_dim=8, act_dim=3):
    return EpisodeRollout(
        obs_raw=rng.normal(size=(n, obs_dim)),
        obs=rng.normal(size=(n, obs_dim)),
        actions=rng.normal(size=(n, act_dim)),
        log_probs=rng.normal(size=n) - 3.0,
        values=rng.normal(size=n),
        r_shaping=rng.normal(size=n) * 0.01,
        r_terminal=np.r_[np.zeros(n - 1), rng.uniform(0, 30)],
        dones=np.r_[np.zeros(n - 1, bool), True],
        h_policy0=np.zeros(49),
        h_value0=np.zeros(20),
    )


class TestSurrogate:
    def test_clip_cases(self):
        assert clipped_surrogate(1.5, 1.0, 0.2) == pytest.approx(1.2)
        assert clipped_surrogate(0.5, 1.0, 0.2) == pytest.approx(0.5)
        assert clipped_surrogate(0.5, -1.0, 0.2) == pytest.approx(-0.8)
        assert clipped_surrogate(1.5, -1.0, 0.2) == pytest.approx(-1.5)
        assert clipped_surrogate(1.1, 2.0, 0.2) == pytest.approx(2.2)

    def test_log_prob_matches_scipy(self):
        rng = np.random.default_rng(1)
        a, mu, ls = rng.normal(size=3), rng.normal(size=3), rng.normal(size=3) * 0.3
        expected = norm.logpdf(a, mu, np.exp(ls)).sum()
        assert gaussian_log_prob(a, mu, ls) == pytest.approx(expected, abs=1e-12)

    def test_kl(self):
        mu = np.array([0.1, -0.2, 0.3])
        ls = np.array([-0.5, 0.0, 0.2])
        assert gaussian_kl(mu, ls, mu, ls) == pytest.approx(0.0, abs=1e-15)
        # one-dimensional closed form
        kl = gaussian_kl(np.array([0.0]), np.array([0.0]), np.array([1.0]), np.array([math.log(2.0)]))
        assert kl == pytest.approx(math.log(2.0) + (1 + 1) / 8 - 0.5, abs=1e-14)

    def test_ratio_identity(self):
        rng = np.random.default_rng(2)
        spec = NetSpec()
        pol, _ = init_params(spec, rng)
        eps = RolloutSet([_episode(rng, n) for n in (6, 4)])
        compute_returns_advantages(eps, 0.95, 0.995)
        batch = make_batch(eps)
        mean = policy_mean(pol, batch)
        batch.old_log_probs = gaussian_log_prob(batch.actions, mean, pol["log_std"]) * batch.mask
        J, _, info = surrogate_objective(pol, batch, 0.2)
        expected = (batch.advantages * batch.mask).sum() / batch.n_valid
        assert J == pytest.approx(expected, abs=1e-12)
        assert info["clip_frac"] == 0.0
        assert mean_kl(pol, mean, pol, batch) == pytest.approx(0.0, abs=1e-15)


def tiny_batch(rng, T=7, B=3, n_in=4, n_out=2, h_dim=3):
    mask = np.ones((T, B))
    mask[5:, 1] = 0.0
    return Batch(
        obs=rng.normal(size=(T, B, n_in)),
        actions=rng.normal(size=(T, B, n_out)) * 0.5,
        old_log_probs=rng.normal(size=(T, B)) * 0.3 - 1.5,
        advantages=rng.normal(size=(T, B)),
        returns=rng.normal(size=(T, B)) * 3,
        mask=mask,
        h_policy0=rng.normal(size=(B, h_dim)) * 0.2,
        h_value0=rng.normal(size=(B, h_dim)) * 0.2,
    )


class TestGradients:
    def test_surrogate_gradient(self):
        rng = np.random.default_rng(3)
        pol = init_layers((4, 5, 3, 4, 2), rng)
        pol["log_std"] = np.array([-0.3, 0.2])
        batch = tiny_batch(rng)
        _, g, _ = surrogate_objective(pol, batch, clip_eps=0.2, entropy_coef=0.01)
        num = central_difference(lambda p: surrogate_objective(p, batch, 0.2, 0.01)[0], pol)
        assert max_relative_error(g, num) < 1e-4

    def test_value_gradient(self):
        rng = np.random.default_rng(4)
        val = init_layers((4, 5, 3, 2, 1), rng)
        batch = tiny_batch(rng)
        _, g = value_loss(val, batch)
        num = central_difference(lambda p: value_loss(p, batch)[0], val)
        assert max_relative_error(g, num) < 1e-4


class TestServo:
    cfg = TrainerConfig()

    def test_high_kl_shrinks(self):
        s = kl_servo(0.01, ServoState(0.2, 1e-4), self.cfg)
        assert s.lr_policy == pytest.approx(1e-4 / 1.5)
        assert s.clip_eps == pytest.approx(0.2 / 1.2)

    def test_low_kl_grows(self):
        s = kl_servo(1e-5, ServoState(0.2, 1e-4), self.cfg)
        assert s.lr_policy == pytest.approx(1.5e-4)
        assert s.clip_eps == pytest.approx(0.22)

    def test_in_band_unchanged(self):
        assert kl_servo(1e-3, ServoState(0.2, 1e-4), self.cfg) == ServoState(0.2, 1e-4)

    def test_bounds(self):
        s = ServoState(0.05, 1e-6)
        for _ in range(10):
            s = kl_servo(1.0, s, self.cfg)
        assert s == ServoState(0.05, 1e-6)
        s = ServoState(0.3, 1e-2)
        for _ in range(10):
            s = kl_servo(0.0, s, self.cfg)
        assert s == ServoState(0.3, 1e-2)

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            kl_servo(-1e-3, ServoState(0.2, 1e-4), self.cfg)


class TestObsScaler:
    def test_merge_matches_numpy(self):
        rng = np.random.default_rng(5)
        chunks = [rng.normal(loc=3, scale=2, size=(n, 8)) for n in (10, 1, 57, 200)]
        s = ObsScaler()
        for c in chunks:
            s.update(c)
        allx = np.concatenate(chunks)
        np.testing.assert_allclose(s.mean, allx.mean(axis=0), rtol=1e-12)
        np.testing.assert_allclose(s.var, allx.var(axis=0), rtol=1e-10)

    def test_normalize_and_clip(self):
        s = ObsScaler(clip=3.0)
        s.update(np.array([[0.0] * 8, [2.0] * 8]))
        np.testing.assert_allclose(s.normalize(np.full(8, 1.0)), np.zeros(8))
        np.testing.assert_allclose(s.normalize(np.full(8, 100.0)), np.full(8, 3.0))

    def test_state_roundtrip(self):
        s = ObsScaler()
        s.update(np.random.default_rng(6).normal(size=(30, 8)))
        t = ObsScaler.from_state(s.state())
        np.testing.assert_array_equal(t.mean, s.mean)
        np.testing.assert_array_equal(t.var, s.var)


def test_adam_first_step():
    p = {"w": np.array([1.0, -2.0])}
    opt = Adam(p)
    out = opt.step(p, {"w": np.array([0.5, -3.0])}, lr=0.1)
    np.testing.assert_allclose(out["w"], [0.9, -1.9], rtol=1e-6)
    out = Adam(p).step(p, {"w": np.array([0.5, -3.0])}, lr=0.1, ascent=True)
    np.testing.assert_allclose(out["w"], [1.1, -2.1], rtol=1e-6)


def small_config(**trainer):
    cfg = Config()
    tc = dataclasses.replace(cfg.trainer, episodes_per_rollout=3, scaler_warmup_episodes=2, **trainer)
    return dataclasses.replace(cfg, trainer=tc, guidance=dataclasses.replace(cfg.guidance, law="pn-losc"))


class TestRollouts:
    def test_reproducible_and_consistent(self):
        cfg = small_config()
        pol, val = init_params(NetSpec(), np.random.default_rng(0))
        a = collect_rollouts(pol, val, ObsScaler(), cfg, [11, 12, 13])
        b = collect_rollouts(pol, val, ObsScaler(), cfg, [11, 12, 13])
        for ea, eb in zip(a, b):
            np.testing.assert_array_equal(ea.actions, eb.actions)
            assert ea.miss == eb.miss
            assert len(ea.obs) == len(ea.actions) == len(ea.r_shaping)
            assert ea.dones[-1] and not ea.dones[:-1].any()
            np.testing.assert_array_equal(ea.h_policy0, np.zeros(49))

    def test_episode_independent_of_batchmates(self):
        cfg = small_config()
        pol, val = init_params(NetSpec(), np.random.default_rng(0))
        a = collect_rollouts(pol, val, ObsScaler(), cfg, [21, 22])
        b = collect_rollouts(pol, val, ObsScaler(), cfg, [22])
        # matrix products over different batch sizes may round differently
        np.testing.assert_allclose(a.episodes[1].actions, b.episodes[0].actions, rtol=0, atol=1e-12)

    def test_update_is_finite_and_pure(self):
        cfg = small_config()
        pol, val = init_params(NetSpec(), np.random.default_rng(1))
        ro = collect_rollouts(pol, val, ObsScaler(), cfg, [1, 2, 3])
        compute_returns_advantages(ro, 0.95, 0.995)
        before = {k: v.copy() for k, v in pol.items()}
        new_p, new_v, diag = ppo_update(ro, pol, val, Adam(pol), Adam(val), ServoState(0.2, 5e-5), cfg.trainer)
        for k in before:
            np.testing.assert_array_equal(pol[k], before[k])
        assert all(np.isfinite(v).all() for v in new_p.values())
        assert diag["kl"] >= 0 and 1 <= diag["epochs"] <= cfg.trainer.epochs


def test_train_writes_and_resumes(tmp_path):
    cfg = small_config(checkpoint_every=1)
    res = train(cfg, tmp_path, n_updates=2)
    assert (tmp_path / "history.csv").exists()
    assert res.checkpoint == tmp_path / "checkpoint.npz"
    assert len(res.history) == 2
    res2 = train(cfg, tmp_path, n_updates=1, resume=res.checkpoint)
    assert [r["update"] for r in res2.history] == [0, 1, 2]
    fresh = train(cfg, None, n_updates=3)
    # resuming reproduces the uninterrupted run
    assert res2.history[-1]["reward_mean"] == pytest.approx(fresh.history[-1]["reward_mean"], rel=1e-9)


def test_train_always_uses_curved_los():
    cfg = small_config()
    as_pn = dataclasses.replace(cfg, guidance=dataclasses.replace(cfg.guidance, law="pn"))
    a = train(cfg, None, n_updates=1).history[0]
    b = train(as_pn, None, n_updates=1).history[0]
    assert a == b
