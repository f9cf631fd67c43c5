export type Verdict = "correct" | "incorrect";

export type ReviewTask = {
  task_id: string;
  class_id: string;
  clip_id: string;
  media_url: string;
};

export type ClassStats = {
  class_id: string;
  total: number;
  decided: number;
  correct: number;
  fraction: number;
  retained: boolean | null;
};

export type RoundProgress = {
  complete: boolean;
  classes: ClassStats[];
};

export type PendingVerdict = {
  taskId: string;
  verdict: Verdict;
  reviewer: string;
};

/** The subset of window.localStorage the session needs; tests supply a map. */
export type KeyValueStore = {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
  removeItem(key: string): void;
};
