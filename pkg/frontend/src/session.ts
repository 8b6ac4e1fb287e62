// Session state machine for one recording connection.
//
// The client never simulates: every rendered view derives from the latest
// server `state` message. Input obeys the one-in-flight contract: between a
// `command` being sent and its `state` reply arriving, further key presses
// are ignored, so sent(commands) - received(states) is always 0 or 1.

import { commandForKey } from "./keymap.js";
import {
  ClientMsg,
  PROTOCOL,
  decodeFrame,
  parseServerMsg,
  protocolMatches,
} from "./protocol.js";

export interface Socket {
  send(data: string): void;
  close(): void;
}

export type Phase =
  | "connecting"
  | "choosing" // handshake done, operator picks a target
  | "steering" // episode active, input accepted
  | "awaiting_state" // command in flight, input locked
  | "episode_done"
  | "busy"
  | "version_mismatch"
  | "closed";

export interface SessionView {
  frame: { bytes: Uint8Array; width: number; height: number } | null;
  focus: [number, number, number, number] | null;
  target: string | null;
  step: number;
  totalReward: number;
  outcome: string;
  phase: Phase;
  targets: string[];
  progress: Record<string, number>;
  perTarget: number;
  canSave: boolean;
  lastError: string | null;
}

export interface SessionEvents {
  onChange?: (view: SessionView) => void;
  decodeFrames?: boolean; // default true; tests may keep raw b64 only
}

export class SessionController {
  readonly view: SessionView = {
    frame: null,
    focus: null,
    target: null,
    step: 0,
    totalReward: 0,
    outcome: "ongoing",
    phase: "connecting",
    targets: [],
    progress: {},
    perTarget: 10,
    canSave: false,
    lastError: null,
  };

  sentCommands = 0;
  receivedStates = 0;

  private socket: Socket;
  private events: SessionEvents;

  constructor(socket: Socket, events: SessionEvents = {}) {
    this.socket = socket;
    this.events = events;
  }

  hello(): void {
    this.send({ type: "hello", protocol: PROTOCOL });
  }

  startEpisode(target: string, seed?: number): void {
    if (this.view.phase !== "choosing" && this.view.phase !== "episode_done") {
      return;
    }
    this.view.target = target;
    this.view.phase = "awaiting_state";
    this.send(
      seed === undefined
        ? { type: "start_episode", target }
        : { type: "start_episode", target, seed },
    );
  }

  /** Returns true when the key produced a command; presses while a command
   * is in flight (or outside an episode) are ignored. */
  keyCommand(key: string): boolean {
    const kind = commandForKey(key);
    if (kind === null) return false;
    if (this.view.phase !== "steering") return false;
    if (this.sentCommands - this.receivedStates !== 0) return false;
    this.sentCommands++;
    this.view.phase = "awaiting_state";
    this.send({ type: "command", kind });
    this.notify();
    return true;
  }

  save(): void {
    if (this.view.phase === "episode_done" && this.view.canSave) {
      this.send({ type: "save" });
    }
  }

  discard(): void {
    if (this.view.phase === "episode_done") {
      this.send({ type: "discard" });
      this.view.phase = "choosing";
      this.notify();
    }
  }

  handleMessage(data: string): void {
    const msg = parseServerMsg(data);
    switch (msg.type) {
      case "hello":
        if (!protocolMatches(msg)) {
          this.view.phase = "version_mismatch";
          this.view.lastError = `server speaks ${msg.protocol}, client ${PROTOCOL}`;
          break;
        }
        this.view.targets = msg.targets;
        this.view.progress = msg.progress;
        this.view.perTarget = msg.per_target;
        this.view.phase = "choosing";
        break;
      case "state": {
        if (this.view.phase === "awaiting_state" && this.sentCommands > this.receivedStates) {
          this.receivedStates++;
        }
        if (this.events.decodeFrames !== false) {
          this.view.frame = {
            bytes: decodeFrame(msg.frame),
            width: msg.frame.width,
            height: msg.frame.height,
          };
        }
        this.view.focus = msg.focus;
        this.view.target = msg.target;
        this.view.step = msg.step;
        this.view.totalReward = msg.total_reward;
        this.view.outcome = msg.outcome;
        this.view.phase = msg.done ? "episode_done" : "steering";
        break;
      }
      case "episode_end":
        this.view.phase = "episode_done";
        this.view.outcome = msg.outcome;
        this.view.canSave = msg.can_save;
        break;
      case "save":
        if (msg.saved) {
          this.view.progress = msg.progress;
          this.view.canSave = false;
          this.view.phase = "choosing";
        }
        break;
      case "discard":
        this.view.phase = "choosing";
        break;
      case "error":
        this.view.lastError = msg.message;
        if (msg.code === "busy") this.view.phase = "busy";
        if (msg.code === "version_mismatch") this.view.phase = "version_mismatch";
        // a command rejected by the server ends its flight
        if (this.sentCommands > this.receivedStates) this.receivedStates++;
        if (this.view.phase === "awaiting_state") this.view.phase = "steering";
        break;
    }
    this.notify();
  }

  handleClose(): void {
    this.view.phase = "closed";
    this.notify();
  }

  /** Count of targets recorded to completion (progress >= per-target quota). */
  completedTargets(): string[] {
    return this.view.targets.filter(
      (t) => (this.view.progress[t] ?? 0) >= this.view.perTarget,
    );
  }

  inFlight(): number {
    return this.sentCommands - this.receivedStates;
  }

  private send(msg: ClientMsg): void {
    this.socket.send(JSON.stringify(msg));
  }

  private notify(): void {
    this.events.onChange?.(this.view);
  }
}
