"""Post-hoc evaluation metrics over an episode log."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .env import EpisodeRecord

ROLLING_WINDOW = 100


def _stats(values) -> dict:
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        return {"n": 0, "mean": None, "sd": None}
    sd = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return {"n": int(arr.size), "mean": float(arr.mean()), "sd": sd}


@dataclass
class MetricsReport:
    episodes: int
    success_flags: list[int]
    rolling_success: list[float]        # trailing-window rate, defined from episode `window`
    reached_95: int | None              # 1-based episode ordinal, None if never reached
    reached_99: int | None
    steps: dict                         # first_100 / last_100 / last_500 -> {n, mean, sd}
    time_s: dict
    per_target: dict
    window: int
    command_latency_s: float

    def to_json(self) -> str:
        d = {"episodes": self.episodes,
             "success_flags": self.success_flags,
             "rolling_success": [round(x, 6) for x in self.rolling_success],
             "reached_95": self.reached_95,
             "reached_99": self.reached_99,
             "steps": _round_tree(self.steps),
             "time_s": _round_tree(self.time_s),
             "per_target": _round_tree(self.per_target),
             "window": self.window,
             "command_latency_s": self.command_latency_s}
        return json.dumps(d, sort_keys=True, separators=(",", ":"))


def _round_tree(node):
    if isinstance(node, dict):
        return {k: _round_tree(v) for k, v in node.items()}
    if isinstance(node, float):
        return round(node, 6)
    return node


def compute_metrics(records: list[EpisodeRecord], window: int = ROLLING_WINDOW,
                    latency_s: float = 0.11) -> MetricsReport:
    """Pure function of the episode log.

    The trailing success-rate window is only defined once `window` episodes
    exist; the <95%/<99% thresholds report the first 1-based episode ordinal
    at which the trailing rate reaches the mark (so an all-success log reaches
    them at episode `window`, not earlier).
    """
    if not records:
        raise ValueError("empty episode log")
    flags = [1 if r.outcome == "success" else 0 for r in records]
    steps = [r.step_count for r in records]
    times = [r.step_count * latency_s for r in records]

    rolling = []
    reached_95 = None
    reached_99 = None
    cum = np.cumsum([0] + flags)
    for i in range(window, len(flags) + 1):
        rate = (cum[i] - cum[i - window]) / window
        rolling.append(float(rate))
        if reached_95 is None and rate >= 0.95:
            reached_95 = i
        if reached_99 is None and rate >= 0.99:
            reached_99 = i

    def window_stats(values):
        return {"first_100": _stats(values[:100]),
                "last_100": _stats(values[-100:]),
                "last_500": _stats(values[-500:])}

    per_target: dict = {}
    for r, f, s, t in zip(records, flags, steps, times):
        d = per_target.setdefault(r.goal, {"episodes": 0, "successes": 0,
                                           "steps": [], "time_s": []})
        d["episodes"] += 1
        d["successes"] += f
        d["steps"].append(s)
        d["time_s"].append(t)
    for goal, d in per_target.items():
        d["success_rate"] = d["successes"] / d["episodes"]
        d["steps"] = _stats(d["steps"])
        d["time_s"] = _stats(d["time_s"])

    return MetricsReport(episodes=len(records), success_flags=flags,
                         rolling_success=rolling, reached_95=reached_95,
                         reached_99=reached_99, steps=window_stats(steps),
                         time_s=window_stats(times), per_target=per_target,
                         window=window, command_latency_s=latency_s)
