"""Rainbow agent: distributional double-Q learning with noisy exploration,
prioritized replay, n-step targets, soft target updates and the DQfD
large-margin term for demonstration samples."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from ..config import AgentConfig, agent_config_from_dict
from .network import RainbowQNetwork
from .replay import PrioritizedReplay, Transition

CHECKPOINT_VERSION = 1


class CheckpointError(RuntimeError):
    """Version/fingerprint mismatch or incompatible shapes on load."""


def project_distribution(next_probs: torch.Tensor, rewards: torch.Tensor,
                         dones: torch.Tensor, gamma_n: float,
                         v_min: float, v_max: float) -> torch.Tensor:
    """Categorical Bellman projection onto the fixed atom support.

    Shifts the support by `rewards + gamma_n * z` (terminal rows collapse to
    the reward), clips to [v_min, v_max], and splits each atom's mass linearly
    between the two neighboring atoms. Rows sum to 1 exactly up to fp error.
    """
    batch, n_atoms = next_probs.shape
    dtype = next_probs.dtype
    dz = (v_max - v_min) / (n_atoms - 1)
    z = torch.linspace(v_min, v_max, n_atoms, dtype=dtype)
    keep = (1.0 - dones.to(dtype)).unsqueeze(1)
    tz = (rewards.to(dtype).unsqueeze(1) + gamma_n * keep * z).clamp_(v_min, v_max)
    b = (tz - v_min) / dz
    low = b.floor()
    high = b.ceil()
    eq = low == high
    mass_low = next_probs * torch.where(eq, torch.ones_like(b), high - b)
    mass_high = next_probs * torch.where(eq, torch.zeros_like(b), b - low)
    out = torch.zeros_like(next_probs)
    out.scatter_add_(1, low.long(), mass_low)
    out.scatter_add_(1, high.long(), mass_high)
    return out


class RainbowAgent:
    def __init__(self, cfg: AgentConfig, seed: int = 0):
        torch.set_flush_denormal(True)  # denormals cripple CPU throughput
        self.cfg = cfg
        with torch.random.fork_rng():
            torch.manual_seed(seed)
            self.online = RainbowQNetwork(cfg)
            self.target = RainbowQNetwork(cfg)
        self.target.load_state_dict(self.online.state_dict())
        for p in self.target.parameters():
            p.requires_grad_(False)
        self.noise_gen = torch.Generator().manual_seed(seed ^ 0x5EED)
        self.optimizer = self._make_optimizer()
        self.replay = PrioritizedReplay(cfg.buffer_size, cfg.per_alpha,
                                        cfg.per_beta, seed=seed ^ 0xB0FF)
        self.train_steps = 0

    def _make_optimizer(self):
        kwargs = dict(lr=self.cfg.lr, weight_decay=self.cfg.weight_decay)
        dtype = next(self.online.parameters()).dtype
        if dtype == torch.float32:
            kwargs["fused"] = True
        return torch.optim.AdamW(self.online.parameters(), **kwargs)

    # -- acting -----------------------------------------------------------------
    def act(self, obs, mode: str = "train") -> int:
        """Greedy action under the current value distributions. Train mode
        resamples the parameter noise; eval mode pins it at zero. Ties break
        to the lowest action index."""
        if mode == "train":
            self.online.reset_noise(self.noise_gen)
        else:
            self.online.zero_noise()
        x = torch.from_numpy(obs.stack()).unsqueeze(0)
        with torch.inference_mode():
            q = self.online.q_values(x)[0].numpy()
        return int(np.argmax(q))

    # -- losses --------------------------------------------------------------------
    @staticmethod
    def _batch_obs(observations, dtype) -> torch.Tensor:
        u8 = np.stack([np.stack(o.frames) for o in observations])
        return torch.from_numpy(u8).to(dtype).div_(255.0)

    def compute_loss(self, transitions: list[Transition], weights: np.ndarray):
        """Weighted Rainbow loss (+ margin term on demo rows).

        Returns (loss, per-sample |TD error| as numpy, diagnostics dict).
        """
        cfg = self.cfg
        dev_dtype = next(self.online.parameters()).dtype
        obs = self._batch_obs([t.obs for t in transitions], dev_dtype)
        next_obs = self._batch_obs([t.next_obs for t in transitions], dev_dtype)
        actions = torch.tensor([t.action for t in transitions], dtype=torch.long)
        rewards = torch.tensor([t.reward for t in transitions], dtype=dev_dtype)
        dones = torch.tensor([float(t.done) for t in transitions], dtype=dev_dtype)
        has_demo = any(t.is_demo for t in transitions)
        w = torch.tensor(weights, dtype=dev_dtype)
        rows = torch.arange(len(transitions))
        gamma_n = cfg.gamma ** cfg.n_step

        log_p = self.online.log_dist(obs)                      # (B, A, K)
        log_p_a = log_p[rows, actions]
        with torch.no_grad():
            a_star = self.online.q_values(next_obs).argmax(dim=1)
            p_next = self.target.dist(next_obs)[rows, a_star]
            m = project_distribution(p_next, rewards, dones, gamma_n,
                                     cfg.v_min, cfg.v_max)
        ce = -(m * log_p_a).sum(dim=1)

        margin_total = 0.0
        per_sample = ce
        if has_demo:
            demo = torch.tensor([float(t.is_demo) for t in transitions],
                                dtype=dev_dtype)
            q_all = (log_p.exp() * self.online.support).sum(dim=-1)   # (B, A)
            not_taken = 1.0 - F.one_hot(actions, cfg.n_actions).to(dev_dtype)
            margin = (q_all + cfg.demo_margin * not_taken).max(dim=1).values \
                - q_all[rows, actions]
            margin = margin * demo
            margin_total = float(margin.detach().sum())
            per_sample = ce + cfg.margin_weight * margin
        loss = (w * per_sample).mean()

        with torch.no_grad():
            q_taken = (log_p_a.exp() * self.online.support).sum(dim=-1)
            q_next_star = (p_next * self.online.support).sum(dim=-1)
            td = rewards + gamma_n * (1.0 - dones) * q_next_star - q_taken
            td_abs = td.abs().numpy()
        diags = {"ce": float(ce.detach().mean()), "margin": margin_total,
                 "demo_frac": float(np.mean([t.is_demo for t in transitions]))}
        return loss, td_abs, diags

    def margin_loss_on(self, transitions: list[Transition]) -> float:
        """Mean large-margin loss of a batch under zero-noise weights."""
        cfg = self.cfg
        self.online.zero_noise()
        dev_dtype = next(self.online.parameters()).dtype
        obs = torch.from_numpy(np.stack([t.obs.stack() for t in transitions])) \
            .to(dev_dtype)
        actions = torch.tensor([t.action for t in transitions], dtype=torch.long)
        with torch.inference_mode():
            q_all = self.online.q_values(obs)
        rows = torch.arange(len(transitions))
        not_taken = 1.0 - F.one_hot(actions, cfg.n_actions).to(q_all.dtype)
        margin = (q_all + cfg.demo_margin * not_taken).max(dim=1).values \
            - q_all[rows, actions]
        return float(margin.mean())

    # -- optimization -------------------------------------------------------------
    def train_step(self) -> dict | None:
        """One gradient step on a prioritized batch; updates priorities and
        soft-updates the target network. No-op while the buffer is small."""
        cfg = self.cfg
        if len(self.replay) < cfg.batch_size:
            return None
        self.online.reset_noise(self.noise_gen)
        self.target.reset_noise(self.noise_gen)
        batch, idx, weights = self.replay.sample(cfg.batch_size)
        loss, td_abs, diags = self.compute_loss(batch, weights)
        self.optimizer.zero_grad(set_to_none=True)
        loss.backward()
        grad_norm = torch.nn.utils.clip_grad_norm_(self.online.parameters(),
                                                   cfg.grad_clip)
        self.optimizer.step()

        bonus = np.where([t.is_demo for t in batch],
                         cfg.demo_priority_bonus, cfg.priority_floor)
        self.replay.update_priorities(idx, td_abs + bonus)
        self.soft_update()
        self.train_steps += 1
        return {"loss": float(loss.detach()), "mean_td": float(td_abs.mean()),
                "grad_norm": float(grad_norm), **diags}

    def soft_update(self) -> None:
        tau = self.cfg.target_soft_tau
        with torch.no_grad():
            for tp, op in zip(self.target.parameters(), self.online.parameters()):
                tp.mul_(1.0 - tau).add_(op, alpha=tau)

    # -- persistence -------------------------------------------------------------
    def save_checkpoint(self, path: str | Path) -> None:
        from dataclasses import asdict
        torch.save({"version": CHECKPOINT_VERSION,
                    "fingerprint": self.cfg.fingerprint(),
                    "config": asdict(self.cfg),
                    "online": self.online.state_dict(),
                    "target": self.target.state_dict(),
                    "optimizer": self.optimizer.state_dict(),
                    "train_steps": self.train_steps}, path)

    @staticmethod
    def load_checkpoint(path: str | Path, cfg: AgentConfig, seed: int = 0,
                        transfer: bool = False) -> "RainbowAgent":
        """Restore an agent. Outside transfer mode the config fingerprint must
        match exactly; transfer mode only requires compatible shapes and
        resets the optimizer state."""
        blob = torch.load(path, map_location="cpu", weights_only=False)
        if blob.get("version") != CHECKPOINT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {blob.get('version')}")
        if not transfer and blob["fingerprint"] != cfg.fingerprint():
            raise CheckpointError(
                "config fingerprint mismatch (pass transfer=True to adapt weights)")
        agent = RainbowAgent(cfg, seed=seed)
        try:
            agent.online.load_state_dict(blob["online"])
            agent.target.load_state_dict(blob["target"])
        except RuntimeError as exc:
            raise CheckpointError(f"incompatible parameter shapes: {exc}")
        if not transfer:
            agent.optimizer.load_state_dict(blob["optimizer"])
            agent.train_steps = blob["train_steps"]
        return agent

    @staticmethod
    def peek_config(path: str | Path) -> AgentConfig:
        blob = torch.load(path, map_location="cpu", weights_only=False)
        return agent_config_from_dict(blob["config"])
