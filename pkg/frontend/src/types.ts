/** Wire types for the recommendation service HTTP API.
 *
 * The console displays these payloads as-is: every number on screen comes
 * from the service, never from client-side computation.
 */

export type MethodName = "Baseline" | "NS" | "MSR" | "SR";

export const METHOD_ORDER: readonly MethodName[] = ["Baseline", "NS", "MSR", "SR"];

export type RunLifecycleStatus = "queued" | "running" | "done" | "failed";

export interface RosterRowJson {
  node_id: string;
  power_watts: number;
  location: string;
  data_volume: number;
  consistency: number;
  completeness: number;
}

export interface DatasetJson {
  name: string;
  type: string;
  train_size: number;
  classes: number;
  sequence_length: number;
  class_separation: number;
  test_size: number;
}

export interface WeightsJson {
  energy: number;
  consistency: number;
  completeness: number;
}

export interface ScenarioJson {
  name: string;
  dataset: DatasetJson;
  roster: RosterRowJson[];
  weights: WeightsJson;
  accuracy_threshold: number;
  seed: number;
  fl?: Record<string, number>;
  energy?: Record<string, number>;
}

export interface AllocationJson {
  node_id: string;
  allocated_volume_fraction: number;
  use_clean_only: boolean;
}

export interface RecommendationJson {
  method: MethodName;
  selected: AllocationJson[];
  n_hat: number;
  v_n: number;
  v_target: number;
  e_effective: number;
  predicted_kg: number;
  shortfall_flag: boolean;
}

export interface RankedNodeJson {
  node_id: string;
  score: number;
  co2_rate: number;
}

export interface RecommendationSetJson {
  threshold: number;
  predicted_volume: number;
  ranking: RankedNodeJson[];
  methods: Record<string, RecommendationJson>;
  warnings: string[];
}

export interface MethodRepJson {
  method: MethodName;
  rep: number;
  accuracy: number;
  rounds: number;
  kwh: number;
  kg: number;
  threshold_met: boolean;
}

export interface MethodSummaryJson {
  method: MethodName;
  mean_accuracy: number;
  mean_kg: number;
  threshold_rate: number;
  reps: MethodRepJson[];
}

export interface ValidationResultJson {
  scenario: string;
  threshold: number;
  recommendations: RecommendationSetJson;
  methods: MethodSummaryJson[];
}

export interface RunStatusJson {
  run_id: string;
  scenario_id: string;
  reps: number;
  status: RunLifecycleStatus;
  submitted_at: string;
  result?: ValidationResultJson;
  error?: string;
}

export interface ScenarioRefJson {
  id: string;
  name: string;
}

export interface LedgerJson {
  total_kg: number;
  total_kwh: number;
  by_purpose: Record<string, number>;
  entries: number;
}
