"""Segment-wise training orchestration: experiment plans, weighted-random-action
bootstrapping, transition generation with frozen policies, transfer learning
with optional final-layer re-initialization, and the 1000-episode protocol."""

from __future__ import annotations

import importlib.resources
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .config import AgentConfig, EnvConfig, SimConfig
from .env import NavigationEnv
from .guidewire import Command
from .metrics import compute_metrics
from .phantom import VesselTree, load_bundled, load_phantom
from .rainbow import NStepAssembler, RainbowAgent

log = logging.getLogger(__name__)


class PlanError(ValueError):
    """Invalid experiment plan."""


@dataclass(frozen=True)
class GenerationPhase:
    """One row of the transition-generation recipe. During generation
    episodes the phase whose zone set contains the wire's current zone
    decides the acting method."""

    method: str                                  # 'wra' | 'policy'
    zones: tuple[str, ...]
    wra_probs: tuple[float, float, float] | None = None
    source: str | None = None                    # model id of the frozen policy

    def validate(self) -> None:
        if self.method not in ("wra", "policy"):
            raise PlanError(f"unknown generation method {self.method!r}")
        if self.method == "wra":
            if self.wra_probs is None or len(self.wra_probs) != 3:
                raise PlanError("wra phase needs 3 command probabilities")
            if any(p < 0 for p in self.wra_probs) or \
                    abs(sum(self.wra_probs) - 1.0) > 1e-9:
                raise PlanError("wra probabilities must be >= 0 and sum to 1")
        if self.method == "policy" and not self.source:
            raise PlanError("policy phase needs a source checkpoint model id")


@dataclass(frozen=True)
class ExperimentPlan:
    experiment: int
    model: str
    zones: tuple[str, ...]
    targets: tuple[str, ...]
    transition_count: int
    phases: tuple[GenerationPhase, ...]
    use_demos: bool = False
    transfer_source: str | None = None
    reinit_final_layer: bool = False
    episodes: int = 1000

    def validate(self) -> None:
        if self.transition_count <= 0:
            raise PlanError("transition count must be > 0")
        if not self.targets:
            raise PlanError("plan needs at least one target")
        if not self.phases:
            raise PlanError("plan needs at least one generation phase")
        for ph in self.phases:
            ph.validate()
        if self.reinit_final_layer and not self.transfer_source:
            raise PlanError("final-layer re-init requires a transfer source")

    def policy_sources(self) -> set[str]:
        out = {ph.source for ph in self.phases if ph.method == "policy"}
        if self.transfer_source:
            out.add(self.transfer_source)
        return out

    @staticmethod
    def from_dict(d: dict) -> "ExperimentPlan":
        gen = d["initial_transitions"]
        phases = tuple(
            GenerationPhase(method=p["method"], zones=tuple(p["zones"]),
                            wra_probs=tuple(p["probs"]) if p.get("probs") else None,
                            source=p.get("source"))
            for p in gen["phases"])
        transfer = d.get("transfer") or {}
        plan = ExperimentPlan(
            experiment=int(d["experiment"]), model=d["model"],
            zones=tuple(d["zones"]), targets=tuple(d["targets"]),
            transition_count=int(gen["count"]), phases=phases,
            use_demos=bool(d.get("demos", False)),
            transfer_source=transfer.get("source"),
            reinit_final_layer=bool(transfer.get("reinit_final_layer", False)),
            episodes=int(d.get("episodes", 1000)))
        plan.validate()
        return plan

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment, "model": self.model,
            "zones": list(self.zones), "targets": list(self.targets),
            "initial_transitions": {
                "count": self.transition_count,
                "phases": [{"method": p.method, "zones": list(p.zones),
                            "probs": list(p.wra_probs) if p.wra_probs else None,
                            "source": p.source} for p in self.phases]},
            "demos": self.use_demos,
            "transfer": ({"source": self.transfer_source,
                          "reinit_final_layer": self.reinit_final_layer}
                         if self.transfer_source else None),
            "episodes": self.episodes}


def load_plan(path_or_name: str | Path) -> ExperimentPlan:
    """Load a plan file; bare names resolve to the bundled Table-1 plans."""
    p = Path(path_or_name)
    if not p.exists():
        res = importlib.resources.files("gwnav") / "plans" / f"{str(path_or_name).lower()}.json"
        p = Path(str(res))
        if not p.exists():
            raise PlanError(f"no plan file or bundled plan named {path_or_name!r}")
    return ExperimentPlan.from_dict(json.loads(p.read_text()))


def bundled_plan_names() -> list[str]:
    res = importlib.resources.files("gwnav") / "plans"
    return sorted(p.stem for p in Path(str(res)).glob("*.json"))


# -- weighted random action -----------------------------------------------------

def wra_action(probs, rng: np.random.Generator) -> Command:
    """Sample FORWARD/BACKWARD/ROTATE with the given probabilities."""
    u = rng.random()
    if u < probs[0]:
        return Command.FORWARD
    if u < probs[0] + probs[1]:
        return Command.BACKWARD
    return Command.ROTATE


# -- transition generation -------------------------------------------------------

def generate_initial_transitions(plan: ExperimentPlan, env: NavigationEnv,
                                 agent: RainbowAgent,
                                 sources: dict[str, RainbowAgent],
                                 rng: np.random.Generator) -> dict:
    """Fill the replay with exactly `plan.transition_count` transitions, acting
    by WRA or by a frozen transferred policy depending on the wire's current
    zone. No gradient step happens here."""
    for ph in plan.phases:
        if ph.method == "policy" and ph.source not in sources:
            raise PlanError(f"generation phase needs missing checkpoint {ph.source!r}")
    asm = NStepAssembler(agent.cfg.n_step, agent.cfg.gamma)
    pushed = 0
    episodes = 0
    while pushed < plan.transition_count:
        goal = plan.targets[rng.integers(len(plan.targets))]
        ep_seed = int(rng.integers(2 ** 31))
        obs = env.reset(goal, ep_seed)
        asm.reset()
        episodes += 1
        while not env.done and pushed < plan.transition_count:
            zone = env.current_zone()
            phase = next((p for p in plan.phases if zone in p.zones),
                         plan.phases[-1])
            if phase.method == "wra":
                cmd = wra_action(phase.wra_probs, rng)
            else:
                cmd = Command(sources[phase.source].act(obs, mode="eval"))
            res = env.step(cmd)
            for tr in asm.push(obs, int(cmd), res.reward, res.observation, res.done):
                agent.replay.push(tr)
                pushed += 1
                if pushed >= plan.transition_count:
                    break
            obs = res.observation
    return {"transitions": pushed, "episodes": episodes}


# -- transfer ----------------------------------------------------------------------

def transfer_weights(source_checkpoint: str | Path, cfg: AgentConfig,
                     reinit_final: bool, seed: int = 0) -> RainbowAgent:
    """Agent initialized from a source checkpoint: all parameters copied, the
    optimizer state reset; with `reinit_final`, the final linear layer of both
    dueling heads is re-drawn from the initialization scheme."""
    agent = RainbowAgent.load_checkpoint(source_checkpoint, cfg, seed=seed,
                                         transfer=True)
    if reinit_final:
        agent.online.reinit_final(seed ^ 0xF1A1)
        for name, layer in agent.online.final_layers().items():
            tgt = dict(agent.target.final_layers())[name]
            tgt.load_state_dict(layer.state_dict())
    return agent


# -- experiment protocol --------------------------------------------------------------

@dataclass
class RunPaths:
    root: Path
    episodes: Path = field(init=False)
    metrics: Path = field(init=False)
    checkpoints: Path = field(init=False)

    def __post_init__(self):
        self.root = Path(self.root)
        self.episodes = self.root / "episodes.jsonl"
        self.metrics = self.root / "metrics.json"
        self.checkpoints = self.root / "checkpoints"


def run_experiment(plan: ExperimentPlan, seed: int, out_dir: str | Path,
                   tree: VesselTree | None = None,
                   source_paths: dict[str, Path] | None = None,
                   demo_stem: str | Path | None = None,
                   agent_cfg: AgentConfig | None = None,
                   env_cfg: EnvConfig | None = None,
                   sim_cfg: SimConfig | None = None,
                   checkpoint_every: int = 100,
                   phantom_path: str | Path | None = None) -> dict:
    """Execute one Table-1 experiment row end to end.

    Writes out/<run>/{plan.json, config.json, episodes.jsonl, metrics.json,
    checkpoints/}. Deterministic for identical (plan, seed, inputs); aborts
    preserve the episode log written so far.
    """
    from .dqfd import ingest_demos, pretrain, read_demoset

    plan.validate()
    agent_cfg = agent_cfg or AgentConfig()
    env_cfg = env_cfg or EnvConfig()
    sim_cfg = sim_cfg or SimConfig()
    if tree is None:
        tree = load_phantom(phantom_path) if phantom_path else load_bundled()
    paths = RunPaths(Path(out_dir))
    paths.root.mkdir(parents=True, exist_ok=True)
    paths.checkpoints.mkdir(exist_ok=True)
    (paths.root / "plan.json").write_text(
        json.dumps(plan.to_dict(), indent=2, sort_keys=True))
    (paths.root / "config.json").write_text(json.dumps(
        {"agent": asdict(agent_cfg), "env": asdict(env_cfg), "sim": asdict(sim_cfg),
         "seed": seed, "phantom": tree.name}, indent=2, sort_keys=True, default=list))

    ss = np.random.SeedSequence(seed)
    agent_seed, gen_seed, train_seed = (int(s) for s in ss.generate_state(3))

    env = NavigationEnv(tree, active_zones=plan.zones, env_cfg=env_cfg,
                        sim_cfg=sim_cfg)
    for t in plan.targets:
        if t not in env.valid_goals():
            raise PlanError(f"plan target {t!r} invalid for zones {plan.zones}")

    source_paths = source_paths or {}
    missing = plan.policy_sources() - set(source_paths)
    if missing:
        raise PlanError(f"missing source checkpoints for {sorted(missing)}")
    sources = {mid: RainbowAgent.load_checkpoint(p, agent_cfg, seed=agent_seed,
                                                 transfer=True)
               for mid, p in source_paths.items() if mid in plan.policy_sources()}

    if plan.transfer_source:
        agent = transfer_weights(source_paths[plan.transfer_source], agent_cfg,
                                 plan.reinit_final_layer, seed=agent_seed)
    else:
        agent = RainbowAgent(agent_cfg, seed=agent_seed)

    summary = {"model": plan.model, "seed": seed}
    if plan.use_demos:
        if demo_stem is None:
            raise PlanError(f"plan {plan.model} requires demonstrations "
                            f"(pass a demo file stem)")
        demos = read_demoset(demo_stem, targets=())
        n_demo = ingest_demos(demos, agent.replay, agent_cfg,
                              expected_hw=env_cfg.window)
        pretrain(agent, agent_cfg.demo_pretrain_steps)
        summary["demo_transitions"] = n_demo
        log.info("%s: ingested %d demo transitions from %d episodes, "
                 "pre-trained %d steps", plan.model, n_demo,
                 len(demos.episodes), agent_cfg.demo_pretrain_steps)

    gen_rng = np.random.Generator(np.random.PCG64(gen_seed))
    gen_stats = generate_initial_transitions(plan, env, agent, sources, gen_rng)
    summary["generation"] = gen_stats
    log.info("%s: generated %d initial transitions over %d episodes",
             plan.model, gen_stats["transitions"], gen_stats["episodes"])

    train_rng = np.random.Generator(np.random.PCG64(train_seed))
    asm = NStepAssembler(agent_cfg.n_step, agent_cfg.gamma)
    records = []
    global_step = 0
    recent = []
    with open(paths.episodes, "w") as ep_file:
        try:
            for ep in range(plan.episodes):
                goal = plan.targets[train_rng.integers(len(plan.targets))]
                ep_seed = int(train_rng.integers(2 ** 31))
                obs = env.reset(goal, ep_seed)
                asm.reset()
                while not env.done:
                    cmd = Command(agent.act(obs, mode="train"))
                    res = env.step(cmd)
                    for tr in asm.push(obs, int(cmd), res.reward,
                                       res.observation, res.done):
                        agent.replay.push(tr)
                    obs = res.observation
                    global_step += 1
                    if global_step % agent_cfg.update_frequency == 0:
                        agent.train_step()
                rec = env.record()
                records.append(rec)
                ep_file.write(rec.to_json() + "\n")
                recent.append(1 if rec.outcome == "success" else 0)
                if len(recent) > 100:
                    recent.pop(0)
                if (ep + 1) % checkpoint_every == 0:
                    agent.save_checkpoint(paths.checkpoints / f"ep{ep + 1:05d}.ckpt")
                    log.info("%s seed %d ep %d: rolling100 success %.2f "
                             "steps %d", plan.model, seed, ep + 1,
                             float(np.mean(recent)), rec.step_count)
        finally:
            ep_file.flush()

    agent.save_checkpoint(paths.checkpoints / "final.ckpt")
    report = compute_metrics(records, latency_s=env_cfg.command_latency_s)
    paths.metrics.write_text(report.to_json())
    summary["train_steps"] = agent.train_steps
    summary["reached_95"] = report.reached_95
    summary["reached_99"] = report.reached_99
    summary["final_checkpoint"] = str(paths.checkpoints / "final.ckpt")
    return summary
