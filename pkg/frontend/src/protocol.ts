// demoproto/1 message schema (mirrors docs/demoproto.md in the backend repo).

export const PROTOCOL = "demoproto/1";

export type CommandKind = "FORWARD" | "BACKWARD" | "ROTATE";

export type ClientMsg =
  | { type: "hello"; protocol: string }
  | { type: "start_episode"; target: string; seed?: number }
  | { type: "command"; kind: CommandKind }
  | { type: "save" }
  | { type: "discard" };

export interface FramePayload {
  b64: string;
  width: number;
  height: number;
}

export type ServerMsg =
  | {
      type: "hello";
      protocol: string;
      phantom: string;
      field: [number, number];
      targets: string[];
      per_target: number;
      progress: Record<string, number>;
    }
  | {
      type: "state";
      frame: FramePayload;
      focus: [number, number, number, number];
      target: string;
      step: number;
      reward: number;
      total_reward: number;
      done: boolean;
      outcome: string;
    }
  | {
      type: "episode_end";
      outcome: string;
      steps: number;
      total_reward: number;
      can_save: boolean;
    }
  | { type: "save"; saved: boolean; index: number; seed: number; target: string; progress: Record<string, number> }
  | { type: "discard"; discarded: boolean }
  | { type: "error"; code: string; message: string };

export function parseServerMsg(data: string): ServerMsg {
  const msg = JSON.parse(data);
  if (!msg || typeof msg.type !== "string") {
    throw new Error("malformed server message");
  }
  return msg as ServerMsg;
}

/** Protocol identifiers must match exactly; anything else is a hard stop. */
export function protocolMatches(reply: { protocol?: string }): boolean {
  return reply.protocol === PROTOCOL;
}

/** Base64 grayscale bitmap -> byte array (browser and node). */
export function decodeFrame(frame: FramePayload): Uint8Array {
  const bin = atob(frame.b64);
  if (bin.length !== frame.width * frame.height) {
    throw new Error(
      `frame payload is ${bin.length} bytes, expected ${frame.width * frame.height}`,
    );
  }
  const out = new Uint8Array(bin.length);
  for (let i = 0; i < bin.length; i++) out[i] = bin.charCodeAt(i);
  return out;
}
