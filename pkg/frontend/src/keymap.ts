import type { CommandKind } from "./protocol.js";

// One-handed defaults; rebindable from the UI.
export const DEFAULT_KEYMAP: Record<string, CommandKind> = {
  ArrowUp: "FORWARD",
  ArrowDown: "BACKWARD",
  " ": "ROTATE",
};

export function commandForKey(
  key: string,
  keymap: Record<string, CommandKind> = DEFAULT_KEYMAP,
): CommandKind | null {
  return keymap[key] ?? null;
}
