"""Configuration objects shared across the simulator and the agent."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields


@dataclass(frozen=True)
class FrictionConfig:
    """Parameters of the slack/transmission model (config keys ``sim.friction.*``).

    The friction load at arc position s is
        L(s) = curvature_coef * kappa(s) + stenosis_coef * severity(s) + catheter extra,
    the per-command transmission is T = 1 / (1 + L) with a bounded multiplicative
    noise term, and a FORWARD stalls outright (T = 0) with probability
    min(stall_max, stall_coef * L).
    """

    curvature_coef: float = 14.0
    stenosis_coef: float = 1.2
    stall_coef: float = 0.25
    stall_max: float = 0.6
    noise_mag: float = 0.25          # relative transmission noise, scaled by min(L, 1)
    rotation_loss: float = 0.5       # max fractional loss of rotation transmission
    catheter_load: float = 1.1       # extra load inside the catheter exit region
    catheter_len_px: float = 20.0


@dataclass(frozen=True)
class SimConfig:
    """Guidewire kinematics (config keys ``sim.*``)."""

    mm_per_px: float = 0.1
    advance_mm: float = 0.4          # roller displacement per FORWARD/BACKWARD
    rotate_step_deg: float = 33.0    # roller rotation per ROTATE
    max_roller_angle_deg: float = 396.0
    tip_pre_angle_deg: float = 50.0  # cant of the pre-angled tip
    tip_len_px: float = 8.0          # rendered/probed tip whisker length
    init_insertion_px: float = 8.0   # tip arc position right after reset
    min_insertion_px: float = 8.0    # BACKWARD clamps here
    friction: FrictionConfig = field(default_factory=FrictionConfig)


@dataclass(frozen=True)
class EnvConfig:
    """Episode protocol, rewards and rendering."""

    field_size: int = 480
    window: int = 84
    frame_stack: int = 4
    step_cap: int = 500
    step_reward: float = -0.001
    terminal_reward: float = -0.5
    goal_radius_px: float = 6.0
    subgoal_radius_px: float = 6.0
    terminal_radius_px: float = 6.0
    subgoal_spacing_px: float = 20.0
    terminal_entrance_px: float = 16.0  # trigger depth into an untargeted branch
    marker_dot_px: int = 3
    wire_thickness_px: int = 2
    command_latency_s: float = 0.11     # simulated operating time per command
    # grayscale palette, [0, 1]; frames are quantized to uint8 levels
    intensity_goal: float = 1.0
    intensity_subgoal: float = 0.7
    intensity_lumen: float = 0.5
    intensity_wall: float = 0.15
    intensity_wire: float = 0.0


@dataclass(frozen=True)
class AgentConfig:
    """Rainbow/DQfD hyper-parameters."""

    batch_size: int = 32
    buffer_size: int = 100_000
    gamma: float = 0.99
    update_frequency: int = 4
    target_soft_tau: float = 0.005
    grad_clip: float = 10.0
    n_step: int = 3
    per_alpha: float = 0.4
    per_beta: float = 0.6
    atoms: int = 51
    v_min: float = -2.0
    v_max: float = 0.0
    noisy_sigma: float = 0.5
    lr: float = 1e-4
    weight_decay: float = 1e-5
    optimizer: str = "adamw"          # decoupled weight decay
    demo_pretrain_steps: int = 1000
    demo_margin: float = 0.8
    margin_weight: float = 1.0        # weight of the large-margin term
    demo_priority_bonus: float = 0.1  # added to |TD| for demo samples
    priority_floor: float = 1e-3      # added to |TD| for non-demo samples
    n_actions: int = 3
    frame_stack: int = 4
    frame_hw: int = 84
    hidden: int = 512
    conv_spec: tuple = ((32, 8, 4), (64, 4, 2), (64, 3, 1))

    def __post_init__(self):
        if not self.v_min < self.v_max:
            raise ValueError("v_min must be < v_max")
        if self.atoms < 2:
            raise ValueError("atoms must be >= 2")
        for name in ("lr", "target_soft_tau", "gamma", "per_alpha", "per_beta"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")

    def fingerprint(self) -> str:
        """Stable hash of the full config, embedded in checkpoints."""
        blob = json.dumps(asdict(self), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _from_dict(cls, d: dict):
    names = {f.name for f in fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**d)


def agent_config_from_dict(d: dict) -> AgentConfig:
    d = dict(d)
    if "conv_spec" in d:
        d["conv_spec"] = tuple(tuple(layer) for layer in d["conv_spec"])
    return _from_dict(AgentConfig, d)


def sim_config_from_dict(d: dict) -> SimConfig:
    d = dict(d)
    if "friction" in d:
        d["friction"] = _from_dict(FrictionConfig, d["friction"])
    return _from_dict(SimConfig, d)


def env_config_from_dict(d: dict) -> EnvConfig:
    return _from_dict(EnvConfig, d)
