import hashlib
import json
from dataclasses import replace

import numpy as np
import pytest

from gwnav.curriculum import (ExperimentPlan, GenerationPhase, PlanError,
                              bundled_plan_names, generate_initial_transitions,
                              load_plan, run_experiment, transfer_weights,
                              wra_action)
from gwnav.env import NavigationEnv
from gwnav.guidewire import Command
from gwnav.rainbow import RainbowAgent
from tests.conftest import tiny_agent_config


def params_hash(net) -> str:
    h = hashlib.sha256()
    for _, p in sorted(net.state_dict().items()):
        h.update(p.numpy().tobytes())
    return h.hexdigest()


# -- wra -----------------------------------------------------------------------

def test_wra_always_forward_when_certain():
    rng = np.random.default_rng(0)
    assert all(wra_action((1.0, 0.0, 0.0), rng) == Command.FORWARD
               for _ in range(50))


@pytest.mark.parametrize("probs", [(0.4, 0.2, 0.4), (0.6, 0.2, 0.2)])
def test_wra_frequencies_small_sample(probs):
    rng = np.random.default_rng(7)
    counts = np.zeros(3)
    n = 100_000
    for _ in range(n):
        counts[int(wra_action(probs, rng))] += 1
    freq = counts / n
    assert np.all(np.abs(freq - np.asarray(probs)) < 0.01)


# -- plans ----------------------------------------------------------------------

def test_all_seven_bundled_plans_parse():
    names = bundled_plan_names()
    assert sorted(names) == ["d1", "d2", "m1", "m2", "m3", "p1", "p2"]
    models = {load_plan(n).model for n in names}
    assert models == {"P1", "P2", "M1", "M2", "M3", "D1", "D2"}


def test_table_rows_match_plans():
    p1, p2 = load_plan("p1"), load_plan("p2")
    assert p1.use_demos and not p2.use_demos
    assert p1.transition_count == p2.transition_count == 10000
    assert p1.phases[0].wra_probs == (0.4, 0.2, 0.4)
    assert p2.targets == ("prox-main", "prox-side")

    m2, m3 = load_plan("m2"), load_plan("m3")
    assert m2.phases[0].method == "policy" and m2.phases[0].source == "P1"
    assert m2.phases[0].zones == ("proximal", "medial")
    assert m3.phases[0].source == "P2" and m3.phases[0].zones == ("proximal",)
    assert m3.phases[1].method == "wra" and m3.phases[1].zones == ("medial",)

    d1, d2 = load_plan("d1"), load_plan("d2")
    for d in (d1, d2):
        assert d.transition_count == 20000
        assert d.targets == ("dist-main", "med-side", "prox-side")
        assert d.phases[0].source == "M3"
        assert d.phases[1].wra_probs == (0.6, 0.2, 0.2)
    assert not d1.reinit_final_layer and d2.reinit_final_layer


def test_plan_validation_errors():
    with pytest.raises(PlanError, match="probabilities"):
        GenerationPhase("wra", ("proximal",), (0.5, 0.5, 0.5)).validate()
    with pytest.raises(PlanError, match="source"):
        GenerationPhase("policy", ("proximal",)).validate()
    plan = load_plan("p2")
    with pytest.raises(PlanError, match="transition count"):
        replace(plan, transition_count=0).validate()
    with pytest.raises(PlanError, match="re-init"):
        replace(plan, reinit_final_layer=True, transfer_source=None).validate()


def test_plan_roundtrip():
    for name in bundled_plan_names():
        plan = load_plan(name)
        assert ExperimentPlan.from_dict(plan.to_dict()) == plan


# -- transition generation ---------------------------------------------------------

def test_generation_counts_exact_and_no_learning(tree):
    cfg = tiny_agent_config(frame_hw=84)
    agent = RainbowAgent(cfg, seed=0)
    env = NavigationEnv(tree, active_zones=("proximal",))
    plan = replace(load_plan("p2"), transition_count=500)
    h0 = params_hash(agent.online)
    stats = generate_initial_transitions(plan, env, agent, {},
                                         np.random.default_rng(0))
    assert stats["transitions"] == 500
    assert len(agent.replay) == 500
    assert agent.train_steps == 0
    assert params_hash(agent.online) == h0  # no parameter changed


def test_generation_policy_phase_requires_checkpoint(tree):
    cfg = tiny_agent_config(frame_hw=84)
    agent = RainbowAgent(cfg, seed=0)
    env = NavigationEnv(tree, active_zones=("proximal", "medial"))
    plan = replace(load_plan("m3"), transition_count=50)
    with pytest.raises(PlanError, match="checkpoint"):
        generate_initial_transitions(plan, env, agent, {},
                                     np.random.default_rng(0))


def test_generation_switches_method_by_zone(tree, tmp_path):
    cfg = tiny_agent_config(frame_hw=84)
    source = RainbowAgent(cfg, seed=1)
    path = tmp_path / "p2.ckpt"
    source.save_checkpoint(path)
    loaded = RainbowAgent.load_checkpoint(path, cfg, transfer=True)

    calls = {"policy": 0}
    orig_act = loaded.act

    def spy_act(obs, mode="train"):
        calls["policy"] += 1
        assert mode == "eval"
        return orig_act(obs, mode)

    loaded.act = spy_act
    env = NavigationEnv(tree, active_zones=("proximal", "medial"))
    plan = replace(load_plan("m3"), transition_count=400)
    stats = generate_initial_transitions(plan, env, loaded, {"P2": loaded},
                                         np.random.default_rng(3))
    assert stats["transitions"] == 400
    assert calls["policy"] > 0  # the frozen policy acted in the proximal zone


# -- transfer -------------------------------------------------------------------

def test_transfer_without_reinit_is_bit_identical(tmp_path):
    cfg = tiny_agent_config()
    src = RainbowAgent(cfg, seed=4)
    path = tmp_path / "src.ckpt"
    src.save_checkpoint(path)
    dst = transfer_weights(path, cfg, reinit_final=False, seed=9)
    assert params_hash(dst.online) == params_hash(src.online)
    from tests.conftest import random_obs
    obs = random_obs(np.random.default_rng(0), cfg.frame_hw)
    assert dst.act(obs, "eval") == src.act(obs, "eval")


def test_transfer_reinit_changes_only_final_layers(tmp_path):
    cfg = tiny_agent_config()
    src = RainbowAgent(cfg, seed=4)
    path = tmp_path / "src.ckpt"
    src.save_checkpoint(path)
    dst = transfer_weights(path, cfg, reinit_final=True, seed=9)

    def layer_hashes(net):
        out = {}
        for name, p in net.named_parameters():
            out[name] = hashlib.sha256(p.detach().numpy().tobytes()).hexdigest()
        return out

    a, b = layer_hashes(src.online), layer_hashes(dst.online)
    changed = {n for n in a if a[n] != b[n]}
    assert changed
    assert all(n.startswith(("value.1.", "adv.1.")) for n in changed)
    same = {n for n in a if a[n] == b[n]}
    assert any(n.startswith("conv") for n in same)
    # optimizer state reset on transfer
    assert dst.train_steps == 0


# -- experiment runs ----------------------------------------------------------------

def test_run_experiment_smoke_and_outputs(tree, tmp_path):
    plan = replace(load_plan("p2"), transition_count=300, episodes=4)
    out = tmp_path / "run"
    summary = run_experiment(plan, seed=5, out_dir=out, tree=tree,
                             checkpoint_every=2)
    assert (out / "episodes.jsonl").exists()
    assert (out / "metrics.json").exists()
    assert (out / "plan.json").exists()
    assert (out / "config.json").exists()
    assert (out / "checkpoints" / "final.ckpt").exists()
    assert (out / "checkpoints" / "ep00002.ckpt").exists()
    lines = (out / "episodes.jsonl").read_text().splitlines()
    assert len(lines) == 4
    goals = {json.loads(l)["goal"] for l in lines}
    assert goals <= set(plan.targets)
    assert summary["generation"]["transitions"] == 300


def test_run_experiment_rejects_missing_demo_stem(tree, tmp_path):
    plan = replace(load_plan("p1"), transition_count=50, episodes=1)
    with pytest.raises(PlanError, match="demonstrations"):
        run_experiment(plan, seed=0, out_dir=tmp_path / "x", tree=tree)


def test_run_experiment_rejects_invalid_target_zone(tree, tmp_path):
    plan = replace(load_plan("p2"), targets=("dist-main",),
                   transition_count=10, episodes=1)
    with pytest.raises(PlanError, match="invalid for zones"):
        run_experiment(plan, seed=0, out_dir=tmp_path / "y", tree=tree)


def test_run_experiment_missing_source_checkpoint(tree, tmp_path):
    plan = replace(load_plan("m3"), transition_count=10, episodes=1)
    with pytest.raises(PlanError, match="missing source"):
        run_experiment(plan, seed=0, out_dir=tmp_path / "z", tree=tree)
