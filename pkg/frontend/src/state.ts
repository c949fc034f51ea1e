/** Console state: the editable scenario draft and its submission rules.
 *
 * Draft fields hold strings exactly as typed; conversion to the service's
 * JSON shape happens only at submission, after validation. Weight sliders
 * are numeric and always renormalized to sum to 1.
 */

import type { RosterRowJson, ScenarioJson, WeightsJson } from "./types";

export const WEIGHT_KEYS = ["energy", "consistency", "completeness"] as const;
export type WeightKey = (typeof WEIGHT_KEYS)[number];

export const DATASET_TYPES = [
  "Sensor",
  "Simulated",
  "Image",
  "ECG",
  "Device",
  "Synthetic",
] as const;

export interface RosterDraftRow {
  node_id: string;
  power_watts: string;
  location: string;
  data_volume: string;
  consistency: string;
  completeness: string;
}

export interface DatasetDraft {
  name: string;
  type: string;
  train_size: string;
  classes: string;
  sequence_length: string;
  class_separation: string;
  test_size: string;
}

export interface ScenarioDraft {
  name: string;
  dataset: DatasetDraft;
  roster: RosterDraftRow[];
  weights: WeightsJson;
  accuracy_threshold: string;
  seed: string;
  /** Advanced blocks are carried through untouched so a fetched scenario
   * resubmits exactly as stored. */
  fl?: Record<string, number>;
  energy?: Record<string, number>;
}

export interface DraftIssue {
  field: string;
  message: string;
}

export class DraftError extends Error {
  constructor(readonly issues: DraftIssue[]) {
    super(issues.map((i) => `${i.field}: ${i.message}`).join("; "));
    this.name = "DraftError";
  }
}

/** Move one slider and rescale the others so the total stays exactly 1. */
export function renormalizeWeights(
  weights: WeightsJson,
  changed: WeightKey,
  value: number,
): WeightsJson {
  const pinned = Math.min(Math.max(value, 0), 1);
  const others = WEIGHT_KEYS.filter((k) => k !== changed);
  const remainder = 1 - pinned;
  const currentOthers = others.reduce((sum, k) => sum + weights[k], 0);
  const next = { ...weights, [changed]: pinned };
  for (const key of others) {
    next[key] = currentOthers > 0 ? (weights[key] / currentOthers) * remainder : remainder / others.length;
  }
  return next;
}

export function emptyRosterRow(): RosterDraftRow {
  return {
    node_id: "",
    power_watts: "",
    location: "",
    data_volume: "",
    consistency: "",
    completeness: "",
  };
}

export function newDraft(): ScenarioDraft {
  return {
    name: "",
    dataset: {
      name: "",
      type: DATASET_TYPES[0],
      train_size: "",
      classes: "",
      sequence_length: "",
      class_separation: "1.0",
      test_size: "",
    },
    roster: [emptyRosterRow()],
    weights: { energy: 0.7, consistency: 0.2, completeness: 0.1 },
    accuracy_threshold: "0.85",
    seed: "0",
  };
}

/** Populate the editor from a scenario fetched from the service. */
export function draftFromScenario(scenario: ScenarioJson): ScenarioDraft {
  const draft: ScenarioDraft = {
    name: scenario.name,
    dataset: {
      name: scenario.dataset.name,
      type: scenario.dataset.type,
      train_size: String(scenario.dataset.train_size),
      classes: String(scenario.dataset.classes),
      sequence_length: String(scenario.dataset.sequence_length),
      class_separation: String(scenario.dataset.class_separation),
      test_size: String(scenario.dataset.test_size),
    },
    roster: scenario.roster.map((row) => ({
      node_id: row.node_id,
      power_watts: String(row.power_watts),
      location: row.location,
      data_volume: String(row.data_volume),
      consistency: String(row.consistency),
      completeness: String(row.completeness),
    })),
    weights: { ...scenario.weights },
    accuracy_threshold: String(scenario.accuracy_threshold),
    seed: String(scenario.seed),
  };
  if (scenario.fl) draft.fl = { ...scenario.fl };
  if (scenario.energy) draft.energy = { ...scenario.energy };
  return draft;
}

function parseNumber(raw: string): number | undefined {
  const trimmed = raw.trim();
  if (trimmed === "") return undefined;
  const value = Number(trimmed);
  return Number.isFinite(value) ? value : undefined;
}

function parsePositiveInt(raw: string): number | undefined {
  const value = parseNumber(raw);
  return value !== undefined && Number.isInteger(value) && value >= 1 ? value : undefined;
}

function checkFraction(
  issues: DraftIssue[],
  field: string,
  label: string,
  raw: string,
): void {
  const value = parseNumber(raw);
  if (value === undefined || value < 0 || value > 1) {
    issues.push({ field, message: `${label} must be a number in [0, 1]` });
  }
}

/** Check the draft against the roster schema and scenario rules the service
 * enforces, so bad input is blocked inline instead of bouncing off a 400. */
export function validateDraft(draft: ScenarioDraft): DraftIssue[] {
  const issues: DraftIssue[] = [];
  if (draft.name.trim() === "") {
    issues.push({ field: "name", message: "scenario name is required" });
  }

  const ds = draft.dataset;
  if (ds.name.trim() === "") {
    issues.push({ field: "dataset.name", message: "dataset name is required" });
  }
  if (!(DATASET_TYPES as readonly string[]).includes(ds.type)) {
    issues.push({
      field: "dataset.type",
      message: `type must be one of ${DATASET_TYPES.join(", ")}`,
    });
  }
  for (const [key, label] of [
    ["train_size", "train size"],
    ["classes", "class count"],
    ["sequence_length", "sequence length"],
    ["test_size", "test size"],
  ] as const) {
    if (parsePositiveInt(ds[key]) === undefined) {
      issues.push({ field: `dataset.${key}`, message: `${label} must be a positive integer` });
    }
  }
  const separation = parseNumber(ds.class_separation);
  if (separation === undefined || separation <= 0) {
    issues.push({
      field: "dataset.class_separation",
      message: "class separation must be a positive number",
    });
  }

  if (draft.roster.length === 0) {
    issues.push({ field: "roster", message: "at least one node is required" });
  }
  const seen = new Set<string>();
  draft.roster.forEach((row, index) => {
    const where = `roster[${index}]`;
    const nodeId = row.node_id.trim();
    if (nodeId === "") {
      issues.push({ field: `${where}.node_id`, message: "node_id is required" });
    } else if (seen.has(nodeId)) {
      issues.push({ field: `${where}.node_id`, message: `duplicate node_id ${nodeId}` });
    } else {
      seen.add(nodeId);
    }
    const power = parseNumber(row.power_watts);
    if (power === undefined || power <= 0) {
      issues.push({ field: `${where}.power_watts`, message: "power_watts must be > 0" });
    }
    if (row.location.trim() === "") {
      issues.push({ field: `${where}.location`, message: "location is required" });
    }
    checkFraction(issues, `${where}.data_volume`, "data_volume", row.data_volume);
    checkFraction(issues, `${where}.consistency`, "consistency", row.consistency);
    checkFraction(issues, `${where}.completeness`, "completeness", row.completeness);
  });

  const threshold = parseNumber(draft.accuracy_threshold);
  if (threshold === undefined || threshold <= 0 || threshold >= 1) {
    issues.push({
      field: "accuracy_threshold",
      message: "accuracy threshold must lie strictly between 0 and 1",
    });
  }
  if (parseNumber(draft.seed) === undefined || !Number.isInteger(Number(draft.seed))) {
    issues.push({ field: "seed", message: "seed must be an integer" });
  }

  const weightSum = WEIGHT_KEYS.reduce((sum, k) => sum + draft.weights[k], 0);
  if (WEIGHT_KEYS.some((k) => draft.weights[k] < 0) || Math.abs(weightSum - 1) > 1e-9) {
    issues.push({ field: "weights", message: "weights must be non-negative and sum to 1" });
  }
  return issues;
}

/** Convert a valid draft to the service's scenario JSON; throws DraftError
 * with the full issue list otherwise. */
export function draftToScenario(draft: ScenarioDraft): ScenarioJson {
  const issues = validateDraft(draft);
  if (issues.length > 0) {
    throw new DraftError(issues);
  }
  const roster: RosterRowJson[] = draft.roster.map((row) => ({
    node_id: row.node_id.trim(),
    power_watts: Number(row.power_watts),
    location: row.location.trim(),
    data_volume: Number(row.data_volume),
    consistency: Number(row.consistency),
    completeness: Number(row.completeness),
  }));
  const scenario: ScenarioJson = {
    name: draft.name.trim(),
    dataset: {
      name: draft.dataset.name.trim(),
      type: draft.dataset.type,
      train_size: Number(draft.dataset.train_size),
      classes: Number(draft.dataset.classes),
      sequence_length: Number(draft.dataset.sequence_length),
      class_separation: Number(draft.dataset.class_separation),
      test_size: Number(draft.dataset.test_size),
    },
    roster,
    weights: { ...draft.weights },
    accuracy_threshold: Number(draft.accuracy_threshold),
    seed: Number(draft.seed),
  };
  if (draft.fl) scenario.fl = { ...draft.fl };
  if (draft.energy) scenario.energy = { ...draft.energy };
  return scenario;
}
