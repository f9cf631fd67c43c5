import type { Verdict } from "./types.js";

export type ShortcutAction = { kind: "verdict"; verdict: Verdict } | { kind: "replay" };

export type KeyEventLike = {
  key: string;
  altKey: boolean;
  ctrlKey: boolean;
  metaKey: boolean;
};

/** y = correct, n = incorrect, r = replay the clip. Modifier combos pass through. */
export function resolveShortcut(event: KeyEventLike): ShortcutAction | null {
  if (event.altKey || event.ctrlKey || event.metaKey) return null;
  switch (event.key.toLowerCase()) {
    case "y":
      return { kind: "verdict", verdict: "correct" };
    case "n":
      return { kind: "verdict", verdict: "incorrect" };
    case "r":
      return { kind: "replay" };
    default:
      return null;
  }
}
