/** Polling loop for validation runs: 1s interval with multiplicative
 * backoff, stopping on the first terminal status. The sleep function is
 * injectable so tests can run the schedule without waiting.
 */

import type { ApiClient } from "./api";
import type { RunStatusJson } from "./types";

export const TERMINAL_STATUSES: ReadonlySet<string> = new Set(["done", "failed"]);

export interface PollOptions {
  intervalMs?: number;
  backoff?: number;
  maxIntervalMs?: number;
  maxPolls?: number;
  sleep?: (ms: number) => Promise<void>;
  onUpdate?: (run: RunStatusJson) => void;
}

const defaultSleep = (ms: number) => new Promise<void>((resolve) => setTimeout(resolve, ms));

export async function pollRun(
  api: ApiClient,
  runId: string,
  options: PollOptions = {},
): Promise<RunStatusJson> {
  const {
    intervalMs = 1000,
    backoff = 1.5,
    maxIntervalMs = 10_000,
    maxPolls = 600,
    sleep = defaultSleep,
    onUpdate,
  } = options;
  let delay = intervalMs;
  for (let polls = 1; ; polls++) {
    const run = await api.getRun(runId);
    onUpdate?.(run);
    if (TERMINAL_STATUSES.has(run.status)) {
      return run;
    }
    if (polls >= maxPolls) {
      throw new Error(`run ${runId} still ${run.status} after ${polls} polls`);
    }
    await sleep(delay);
    delay = Math.min(delay * backoff, maxIntervalMs);
  }
}
