import { describe, expect, it } from "vitest";

import { resolveShortcut } from "../src/shortcuts.js";

const key = (k: string, mods: Partial<{ altKey: boolean; ctrlKey: boolean; metaKey: boolean }> = {}) => ({
  key: k,
  altKey: false,
  ctrlKey: false,
  metaKey: false,
  ...mods,
});

describe("review shortcuts", () => {
  it("maps y/n to verdicts", () => {
    expect(resolveShortcut(key("y"))).toEqual({ kind: "verdict", verdict: "correct" });
    expect(resolveShortcut(key("Y"))).toEqual({ kind: "verdict", verdict: "correct" });
    expect(resolveShortcut(key("n"))).toEqual({ kind: "verdict", verdict: "incorrect" });
  });

  it("maps r to replay", () => {
    expect(resolveShortcut(key("r"))).toEqual({ kind: "replay" });
  });

  it("ignores other keys and modifier combos", () => {
    expect(resolveShortcut(key("x"))).toBeNull();
    expect(resolveShortcut(key("y", { ctrlKey: true }))).toBeNull();
    expect(resolveShortcut(key("n", { metaKey: true }))).toBeNull();
  });
});
