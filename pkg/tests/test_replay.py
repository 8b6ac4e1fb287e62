import numpy as np
import pytest

from gwnav.rainbow import NStepAssembler, PrioritizedReplay, SumMinTree, Transition


def tr(i, demo=False, reward=-0.001, done=False):
    return Transition(obs=f"o{i}", action=i % 3, reward=reward,
                      next_obs=f"o{i + 1}", done=done, is_demo=demo)


# -- sum tree ------------------------------------------------------------------

def test_sumtree_total_and_min():
    t = SumMinTree(8)
    t.set(np.array([0, 1, 2]), np.array([1.0, 8.0, 3.0]))
    assert t.total == pytest.approx(12.0)
    assert t.min_value == pytest.approx(1.0)


def test_sumtree_find_maps_prefix_mass():
    t = SumMinTree(4)
    t.set(np.array([0, 1, 2, 3]), np.array([1.0, 2.0, 3.0, 4.0]))
    found = t.find(np.array([0.5, 1.5, 3.5, 9.9]))
    assert list(found) == [0, 1, 2, 3]


# -- prioritized replay -----------------------------------------------------------

def test_sample_probability_follows_priority_alpha_law():
    rep = PrioritizedReplay(capacity=8, alpha=0.4, beta=0.6, seed=1)
    i0 = rep.push(tr(0))
    i1 = rep.push(tr(1))
    rep.update_priorities(np.array([i0, i1]), np.array([1.0, 8.0]))
    want_p1 = 8 ** 0.4 / (1 + 8 ** 0.4)
    counts = np.zeros(2)
    draws = 0
    for _ in range(400):
        _, idx, _ = rep.sample(256)
        counts += np.bincount(idx, minlength=2)
        draws += 256
    freq = counts / draws
    assert abs(freq[1] - want_p1) < 0.01


def test_alpha_zero_uniform_sampling():
    rep = PrioritizedReplay(capacity=8, alpha=0.0, beta=0.6, seed=2)
    i0 = rep.push(tr(0))
    i1 = rep.push(tr(1))
    rep.update_priorities(np.array([i0, i1]), np.array([1.0, 100.0]))
    counts = np.zeros(2)
    for _ in range(200):
        _, idx, _ = rep.sample(128)
        counts += np.bincount(idx, minlength=2)
    freq = counts / counts.sum()
    assert abs(freq[0] - 0.5) < 0.02


def test_new_transitions_get_max_priority():
    rep = PrioritizedReplay(capacity=8, alpha=1.0, beta=1.0, seed=0)
    i0 = rep.push(tr(0))
    rep.update_priorities(np.array([i0]), np.array([5.0]))
    i1 = rep.push(tr(1))
    assert rep.tree.values(np.array([i1]))[0] == pytest.approx(5.0)


def test_importance_weights_hand_case():
    rep = PrioritizedReplay(capacity=4, alpha=1.0, beta=1.0, seed=3)
    i0 = rep.push(tr(0))
    i1 = rep.push(tr(1))
    rep.update_priorities(np.array([i0, i1]), np.array([1.0, 8.0]))
    # P = (1/9, 8/9); w_i = (N P_i)^-1 normalized by the max (= w of item 0)
    _, idx, w = rep.sample(64)
    for i, wi in zip(idx, w):
        assert wi == pytest.approx(1.0 if i == i0 else 0.125, rel=1e-6)


def test_demo_transitions_never_evicted():
    rep = PrioritizedReplay(capacity=16, alpha=0.4, beta=0.6, seed=4)
    for i in range(4):
        rep.push(tr(i, demo=True))
    for i in range(100):
        rep.push(tr(100 + i))
    assert len(rep) == 16
    assert rep.demo_count() == 4
    for i in range(4):
        assert rep.data[i].is_demo
    # ring eviction applies to the online region only
    stored = {rep.data[i].obs for i in range(4, 16)}
    assert stored == {f"o{100 + i}" for i in range(88, 100)}


def test_demo_after_online_rejected():
    rep = PrioritizedReplay(capacity=8, alpha=0.4, beta=0.6, seed=5)
    rep.push(tr(0))
    with pytest.raises(RuntimeError, match="demo"):
        rep.push(tr(1, demo=True))


def test_sample_empty_raises():
    rep = PrioritizedReplay(capacity=8, alpha=0.4, beta=0.6, seed=6)
    with pytest.raises(RuntimeError, match="empty"):
        rep.sample(4)


def test_nonpositive_priorities_rejected():
    rep = PrioritizedReplay(capacity=8, alpha=0.4, beta=0.6, seed=7)
    i0 = rep.push(tr(0))
    with pytest.raises(ValueError):
        rep.update_priorities(np.array([i0]), np.array([0.0]))


# -- n-step assembler -----------------------------------------------------------------

def test_ten_step_episode_yields_ten_transitions():
    asm = NStepAssembler(3, 0.99)
    out = []
    for t in range(10):
        out += asm.push(f"s{t}", t % 3, -0.001, f"s{t + 1}", done=(t == 9))
    assert len(out) == 10
    assert out[0].obs == "s0" and out[0].next_obs == "s3"
    assert not out[0].done
    # flushed tail transitions bootstrap from the final observation and are done
    assert out[-1].obs == "s9" and out[-1].next_obs == "s10" and out[-1].done
    assert out[-2].obs == "s8" and out[-2].next_obs == "s10" and out[-2].done


def test_nstep_reward_is_discounted_sum():
    gamma = 0.9
    asm = NStepAssembler(3, gamma)
    rewards = [1.0, 2.0, 4.0, 8.0]
    out = []
    for t, r in enumerate(rewards):
        out += asm.push(f"s{t}", 0, r, f"s{t + 1}", done=(t == 3))
    # first transition: r0 + g r1 + g^2 r2
    assert out[0].reward == pytest.approx(1 + 0.9 * 2 + 0.81 * 4)
    # flushed: r3 alone for the last
    assert out[-1].reward == pytest.approx(8.0)


def test_nstep_reward_consistency_random():
    rng = np.random.default_rng(0)
    gamma = 0.99
    for trial in range(20):
        n = int(rng.integers(1, 5))
        length = int(rng.integers(1, 12))
        rewards = rng.normal(size=length).tolist()
        asm = NStepAssembler(n, gamma)
        out = []
        for t in range(length):
            out += asm.push(t, 0, rewards[t], t + 1, done=(t == length - 1))
        assert len(out) == length
        for k, tr_ in enumerate(out):
            horizon = min(n, length - k)
            want = sum(gamma ** j * rewards[k + j] for j in range(horizon))
            assert tr_.reward == pytest.approx(want)
            assert tr_.done == (k + n >= length)
