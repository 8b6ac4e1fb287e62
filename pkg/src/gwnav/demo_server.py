"""Demonstration-recording service speaking `demoproto/1` over a websocket.

One live environment backs the whole service (single physical setup
semantics): the first connection that completes the hello handshake owns the
session; concurrent connections receive a `busy` error. See docs/demoproto.md
for the bit-exact message schema.
"""

from __future__ import annotations

import base64
import logging
from pathlib import Path

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from .config import EnvConfig, SimConfig
from .dqfd import append_demo, demo_paths
from .env import EpisodeRecord, NavigationEnv
from .guidewire import Command
from .phantom import VesselTree

PROTOCOL = "demoproto/1"

log = logging.getLogger(__name__)


class DemoService:
    def __init__(self, tree: VesselTree, active_zones, demo_stem: str | Path,
                 env_cfg: EnvConfig | None = None, sim_cfg: SimConfig | None = None,
                 per_target: int = 10, seed: int = 0):
        self.env = NavigationEnv(tree, active_zones, env_cfg, sim_cfg)
        self.demo_stem = Path(demo_stem)
        self.per_target = per_target
        self.rng = np.random.Generator(np.random.PCG64(seed))
        self.owner: object | None = None
        self.episode_frames: list[np.ndarray] = []
        self.ep_active = False
        self.progress = {t: 0 for t in self.env.valid_goals()}
        self._load_progress()

    def _load_progress(self) -> None:
        jpath, _ = demo_paths(self.demo_stem)
        if jpath.exists():
            with open(jpath) as f:
                for line in f:
                    if line.strip():
                        rec = EpisodeRecord.from_json(line)
                        if rec.goal in self.progress:
                            self.progress[rec.goal] += 1

    # -- message handlers: each returns one reply dict ------------------------
    def hello(self, conn, msg: dict) -> dict:
        if msg.get("protocol") != PROTOCOL:
            return {"type": "error", "code": "version_mismatch",
                    "message": f"server speaks {PROTOCOL}"}
        if self.owner is not None and self.owner is not conn:
            return {"type": "error", "code": "busy",
                    "message": "another session is active"}
        self.owner = conn
        return {"type": "hello", "protocol": PROTOCOL,
                "phantom": self.env.tree.name,
                "field": list(self.env.tree.field_size),
                "targets": self.env.valid_goals(),
                "per_target": self.per_target,
                "progress": dict(self.progress)}

    def _require_owner(self, conn) -> dict | None:
        if self.owner is not conn:
            return {"type": "error", "code": "busy",
                    "message": "session not owned by this connection"}
        return None

    def start_episode(self, conn, msg: dict) -> dict:
        err = self._require_owner(conn)
        if err:
            return err
        target = msg.get("target")
        if target not in self.env.valid_goals():
            return {"type": "error", "code": "protocol",
                    "message": f"unknown target {target!r}"}
        seed = int(msg.get("seed", self.rng.integers(2 ** 31)))
        self.env.reset(target, seed)
        self.episode_frames = [self.env.last_crop_u8()]
        self.ep_active = True
        return self._state_msg(reward=0.0)

    def command(self, conn, msg: dict) -> dict:
        err = self._require_owner(conn)
        if err:
            return err
        if not self.ep_active or self.env.done:
            return {"type": "error", "code": "protocol",
                    "message": "no episode in progress"}
        kind = msg.get("kind")
        if kind not in Command.__members__:
            return {"type": "error", "code": "protocol",
                    "message": f"unknown command kind {kind!r}"}
        res = self.env.step(Command[kind])
        self.episode_frames.append(self.env.last_crop_u8())
        return self._state_msg(reward=res.reward)

    def episode_end_msg(self) -> dict:
        rec = self.env.record()
        return {"type": "episode_end", "outcome": rec.outcome,
                "steps": rec.step_count,
                "total_reward": round(rec.total_reward, 6),
                "can_save": rec.outcome == "success"}

    def save(self, conn, msg: dict) -> dict:
        err = self._require_owner(conn)
        if err:
            return err
        if not self.ep_active or not self.env.done:
            return {"type": "error", "code": "protocol",
                    "message": "nothing to save"}
        rec = self.env.record()
        if rec.outcome != "success":
            return {"type": "error", "code": "protocol",
                    "message": "only successful episodes can be saved"}
        idx = append_demo(self.demo_stem, rec, np.stack(self.episode_frames))
        self.progress[rec.goal] = self.progress.get(rec.goal, 0) + 1
        self.ep_active = False
        return {"type": "save", "saved": True, "index": idx,
                "seed": rec.seed, "target": rec.goal,
                "progress": dict(self.progress)}

    def discard(self, conn, msg: dict) -> dict:
        err = self._require_owner(conn)
        if err:
            return err
        self.ep_active = False
        return {"type": "discard", "discarded": True}

    def release(self, conn) -> None:
        if self.owner is conn:
            self.owner = None
            self.ep_active = False  # disconnect discards the live episode

    def _state_msg(self, reward: float) -> dict:
        frame = self.env.full_frame_u8()
        rec = self.env.record()
        return {"type": "state",
                "frame": {"b64": base64.b64encode(frame.tobytes()).decode(),
                          "width": int(frame.shape[1]),
                          "height": int(frame.shape[0])},
                "focus": list(self.env.focus_window_rect()),
                "target": rec.goal,
                "step": rec.step_count,
                "reward": reward,
                "total_reward": round(rec.total_reward, 6),
                "done": self.env.done,
                "outcome": self.env.outcome}

    def handle(self, conn, msg) -> list[dict]:
        """Dispatch one inbound message to its replies (state + episode_end
        when the episode just finished)."""
        if not isinstance(msg, dict) or "type" not in msg:
            return [{"type": "error", "code": "bad_message",
                     "message": "messages must be JSON objects with a 'type'"}]
        kind = msg["type"]
        handlers = {"hello": self.hello, "start_episode": self.start_episode,
                    "command": self.command, "save": self.save,
                    "discard": self.discard}
        if kind not in handlers:
            return [{"type": "error", "code": "bad_message",
                     "message": f"unknown message type {kind!r}"}]
        reply = handlers[kind](conn, msg)
        out = [reply]
        if reply.get("type") == "state" and reply.get("done"):
            out.append(self.episode_end_msg())
        return out


def create_app(service: DemoService) -> FastAPI:
    app = FastAPI()
    app.state.service = service

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket):
        await ws.accept()
        try:
            while True:
                try:
                    msg = await ws.receive_json()
                except WebSocketDisconnect:
                    raise
                except Exception:
                    await ws.send_json({"type": "error", "code": "bad_message",
                                        "message": "not valid JSON"})
                    continue
                for reply in service.handle(ws, msg):
                    await ws.send_json(reply)
        except WebSocketDisconnect:
            pass
        finally:
            service.release(ws)

    return app


def serve_demo_session(port: int, tree: VesselTree, active_zones,
                       demo_stem: str | Path, env_cfg=None, sim_cfg=None,
                       per_target: int = 10, seed: int = 0,
                       host: str = "127.0.0.1") -> None:
    """Run the recording service until interrupted."""
    import uvicorn
    service = DemoService(tree, active_zones, demo_stem, env_cfg, sim_cfg,
                          per_target=per_target, seed=seed)
    app = create_app(service)
    uvicorn.run(app, host=host, port=port, log_level="warning")
