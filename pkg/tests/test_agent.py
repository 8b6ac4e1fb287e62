import math

import numpy as np
import pytest
import torch

from gwnav.rainbow import CheckpointError, RainbowAgent, Transition
from tests.conftest import random_obs, tiny_agent_config


def fill_replay(agent, n=64, seed=0, demo_frac=0.0):
    rng = np.random.default_rng(seed)
    hw = agent.cfg.frame_hw
    for i in range(n):
        agent.replay.push(Transition(
            obs=random_obs(rng, hw), action=int(rng.integers(0, 3)),
            reward=float(rng.uniform(-0.6, 0.0)),
            next_obs=random_obs(rng, hw),
            done=bool(rng.random() < 0.2), is_demo=i < n * demo_frac))


def zeroed_agent(cfg, bias_setter=None):
    """Agent with all-zero network weights (uniform distributions), with an
    optional hand edit applied afterwards."""
    agent = RainbowAgent(cfg, seed=0)
    with torch.no_grad():
        for p in agent.online.parameters():
            p.zero_()
    agent.online.zero_noise()
    if bias_setter:
        bias_setter(agent.online)
    return agent


def test_act_all_zero_weights_ties_break_low(tiny_cfg=None):
    cfg = tiny_agent_config()
    agent = zeroed_agent(cfg)
    obs = random_obs(np.random.default_rng(0), cfg.frame_hw)
    assert agent.act(obs, mode="eval") == 0


def test_act_hand_set_logits_prefer_forward():
    cfg = tiny_agent_config()  # atoms=51, v in [-2, 0]

    def craft(net):
        with torch.no_grad():
            # action 0: mass split on atoms 47/48 -> mean -0.1
            # actions 1, 2: mass on atom 40 -> mean -0.4
            # (large logits so the 48 zero-logit atoms hold no mass after the
            # dueling mean-advantage subtraction)
            bias = net.adv[1].bias_mu.view(cfg.n_actions, cfg.atoms)
            bias[0, 47] = 30.0
            bias[0, 48] = 30.0
            bias[1, 40] = 30.0
            bias[2, 40] = 30.0

    agent = zeroed_agent(cfg, craft)
    obs = random_obs(np.random.default_rng(1), cfg.frame_hw)
    assert agent.act(obs, mode="eval") == 0
    x = torch.from_numpy(obs.stack()).unsqueeze(0)
    q = agent.online.q_values(x)[0]
    assert float(q[0]) == pytest.approx(-0.1, abs=0.02)
    assert float(q[1]) == pytest.approx(-0.4, abs=0.02)


def test_eval_act_deterministic():
    cfg = tiny_agent_config()
    agent = RainbowAgent(cfg, seed=3)
    obs = random_obs(np.random.default_rng(2), cfg.frame_hw)
    a1 = agent.act(obs, mode="eval")
    agent.act(obs, mode="train")  # resamples noise in between
    a2 = agent.act(obs, mode="eval")
    assert a1 == a2


def test_soft_update_scalar_probe():
    cfg = tiny_agent_config()
    agent = RainbowAgent(cfg, seed=0)
    with torch.no_grad():
        for p in agent.online.parameters():
            p.fill_(1.0)
        for p in agent.target.parameters():
            p.zero_()
    agent.soft_update()
    for p in agent.target.parameters():
        assert torch.allclose(p, torch.full_like(p, 0.005))


def test_soft_update_contracts_toward_frozen_online():
    cfg = tiny_agent_config()
    agent = RainbowAgent(cfg, seed=1)
    with torch.no_grad():
        for p in agent.target.parameters():
            p.add_(torch.randn_like(p))

    def dist():
        return math.sqrt(sum(float(((tp - op) ** 2).sum()) for tp, op in
                             zip(agent.target.parameters(),
                                 agent.online.parameters())))

    d0 = dist()
    for _ in range(3):
        agent.soft_update()
        d1 = dist()
        assert d1 < d0
        d0 = d1


def test_train_step_updates_priorities_positive():
    cfg = tiny_agent_config()
    agent = RainbowAgent(cfg, seed=0)
    fill_replay(agent, 64)
    m = agent.train_step()
    assert m is not None
    leaf = agent.replay.tree.values(np.arange(len(agent.replay)))
    assert np.all(leaf > 0)


def test_train_step_noop_below_batch_size():
    cfg = tiny_agent_config()
    agent = RainbowAgent(cfg, seed=0)
    fill_replay(agent, cfg.batch_size - 1)
    assert agent.train_step() is None


def test_loss_toy_case_hand_computed():
    """All-zero conv and heads except a hand-set value bias: the network emits
    one known distribution; CE against the projected target is computed by
    hand with plain floats."""
    cfg = tiny_agent_config(atoms=2, v_min=-2.0, v_max=0.0, n_step=1,
                            gamma=0.5, margin_weight=1.0)

    def craft(net):
        with torch.no_grad():
            net.value[1].bias_mu[0] = 1.0   # logits (1, 0) for every action
    agent = zeroed_agent(cfg, craft)
    agent.online.double()  # the 1e-10 comparison needs full precision
    agent.target = agent.online  # same distribution for the target pass

    rng = np.random.default_rng(0)
    t = Transition(obs=random_obs(rng, cfg.frame_hw), action=1, reward=-0.5,
                   next_obs=random_obs(rng, cfg.frame_hw), done=False,
                   is_demo=False)
    loss, td, _ = agent.compute_loss([t], np.array([1.0], dtype=np.float32))

    e1 = math.exp(1.0)
    p_atom0 = e1 / (e1 + 1.0)            # softmax of logits (1, 0)
    p_atom1 = 1.0 - p_atom0
    # target: q equal for all actions -> a* = 0; same dist projected through
    # r - 0.5, gamma = 0.5, support {-2, 0}: tz in {-1.5, -0.5} -> b in {0.25, 0.75}
    m0 = p_atom0 * 0.75 + p_atom1 * 0.25
    m1 = p_atom0 * 0.25 + p_atom1 * 0.75
    want = -(m0 * math.log(p_atom0) + m1 * math.log(p_atom1))
    assert float(loss) == pytest.approx(want, abs=1e-10)

    q = -2.0 * p_atom0  # mean of the emitted distribution
    want_td = abs(-0.5 + 0.5 * q - q)
    assert td[0] == pytest.approx(want_td, abs=1e-7)


def test_loss_ce_equals_entropy_when_dists_match():
    cfg = tiny_agent_config(atoms=2, v_min=-2.0, v_max=0.0, n_step=1, gamma=1.0)

    def craft(net):
        with torch.no_grad():
            net.value[1].bias_mu[0] = 0.7
    agent = zeroed_agent(cfg, craft)
    agent.target = agent.online
    rng = np.random.default_rng(1)
    # reward 0, gamma 1, not done: the projected target equals the online dist
    t = Transition(obs=random_obs(rng, cfg.frame_hw), action=0, reward=0.0,
                   next_obs=random_obs(rng, cfg.frame_hw), done=False,
                   is_demo=False)
    # make next_obs == obs so both distributions coincide exactly
    t = Transition(t.obs, 0, 0.0, t.obs, False, False)
    loss, _, _ = agent.compute_loss([t], np.array([1.0], dtype=np.float32))
    e = math.exp(0.7)
    p = e / (e + 1.0)
    entropy = -(p * math.log(p) + (1 - p) * math.log(1 - p))
    assert float(loss) == pytest.approx(entropy, abs=1e-7)


def test_margin_contributes_zero_without_demos():
    cfg = tiny_agent_config()
    agent = RainbowAgent(cfg, seed=0)
    fill_replay(agent, 32, demo_frac=0.0)
    batch, idx, w = agent.replay.sample(8)
    _, _, diags = agent.compute_loss(batch, w)
    assert diags["margin"] == 0.0
    assert diags["demo_frac"] == 0.0


def test_gradient_matches_finite_differences():
    cfg = tiny_agent_config(frame_hw=8, conv_spec=((4, 3, 1),), hidden=16,
                            atoms=5, batch_size=4)
    agent = RainbowAgent(cfg, seed=0)
    agent.online.double()
    agent.target.double()
    gen = torch.Generator().manual_seed(0)
    agent.online.reset_noise(gen)
    agent.target.reset_noise(gen)

    rng = np.random.default_rng(0)
    batch = [Transition(random_obs(rng, 8), int(rng.integers(0, 3)),
                        float(rng.uniform(-0.6, 0)), random_obs(rng, 8),
                        bool(rng.random() < 0.3), i % 2 == 0)
             for i in range(4)]
    w = rng.uniform(0.5, 1.0, 4).astype(np.float64)

    def loss_value():
        loss, _, _ = agent.compute_loss(batch, w)
        return loss

    loss = loss_value()
    agent.online.zero_grad()
    loss.backward()

    params = [p for p in agent.online.parameters() if p.grad is not None]
    rng2 = np.random.default_rng(1)
    h = 1e-6
    checked = 0
    for _ in range(40):
        p = params[int(rng2.integers(len(params)))]
        flat = p.data.view(-1)
        j = int(rng2.integers(flat.numel()))
        g = float(p.grad.view(-1)[j])
        old = float(flat[j])
        flat[j] = old + h
        up = float(loss_value())
        flat[j] = old - h
        dn = float(loss_value())
        flat[j] = old
        fd = (up - dn) / (2 * h)
        denom = max(abs(g), abs(fd), 1e-8)
        assert abs(g - fd) / denom < 1e-4, (g, fd)
        checked += 1
    assert checked == 40


# -- checkpoints -------------------------------------------------------------------

def test_checkpoint_roundtrip(tmp_path):
    cfg = tiny_agent_config()
    agent = RainbowAgent(cfg, seed=5)
    fill_replay(agent, 40)
    agent.train_step()
    path = tmp_path / "a.ckpt"
    agent.save_checkpoint(path)
    back = RainbowAgent.load_checkpoint(path, cfg, seed=5)
    obs = random_obs(np.random.default_rng(3), cfg.frame_hw)
    assert back.act(obs, "eval") == agent.act(obs, "eval")
    assert back.train_steps == agent.train_steps


def test_checkpoint_fingerprint_mismatch_rejected(tmp_path):
    cfg = tiny_agent_config()
    agent = RainbowAgent(cfg, seed=5)
    path = tmp_path / "a.ckpt"
    agent.save_checkpoint(path)
    other = tiny_agent_config(gamma=0.95)
    with pytest.raises(CheckpointError, match="fingerprint"):
        RainbowAgent.load_checkpoint(path, other)
    # transfer mode adapts as long as shapes line up
    RainbowAgent.load_checkpoint(path, other, transfer=True)


def test_checkpoint_shape_mismatch_rejected_even_in_transfer(tmp_path):
    cfg = tiny_agent_config()
    agent = RainbowAgent(cfg, seed=5)
    path = tmp_path / "a.ckpt"
    agent.save_checkpoint(path)
    smaller = tiny_agent_config(hidden=16)
    with pytest.raises(CheckpointError, match="shape"):
        RainbowAgent.load_checkpoint(path, smaller, transfer=True)
