/** Browser entry point: wires the editor state, API client, and renderers
 * into the page. All domain numbers come from the service; this file only
 * moves strings between inputs, payloads, and containers.
 */

import { ApiClient, ApiError } from "./api";
import { pollRun } from "./poll";
import { rosterFromCsv, rosterToCsv } from "./csv";
import {
  DATASET_TYPES,
  DraftError,
  type ScenarioDraft,
  type WeightKey,
  draftFromScenario,
  draftToScenario,
  emptyRosterRow,
  newDraft,
  renormalizeWeights,
  validateDraft,
} from "./state";
import {
  methodSelectionIds,
  renderBundledPicker,
  renderIssues,
  renderLedger,
  renderRecommendationView,
  renderRosterTable,
  renderRunStatus,
  renderScenarioForm,
  renderValidationView,
  renderWeightSliders,
} from "./views";
import type { RecommendationSetJson } from "./types";

const query = new URLSearchParams(window.location.search);
const apiBase = query.get("api") ?? `${window.location.protocol}//${window.location.hostname}:8000`;
const api = new ApiClient(apiBase);

let draft: ScenarioDraft = newDraft();
let scenarioId: string | null = null;
let lastRecommendation: RecommendationSetJson | null = null;

function el<T extends HTMLElement>(id: string): T {
  const found = document.getElementById(id);
  if (!found) throw new Error(`missing element #${id}`);
  return found as T;
}

function setStatus(message: string, isError = false): void {
  const status = el<HTMLElement>("status");
  status.textContent = message;
  status.className = isError ? "status error" : "status";
}

function renderForm(): void {
  el("scenario-form").innerHTML = renderScenarioForm(draft, DATASET_TYPES);
  renderRoster();
  el("weights").innerHTML = renderWeightSliders(draft.weights);
}

function renderRoster(): void {
  const selected = lastRecommendation ? methodSelectionIds(lastRecommendation, "NS") : new Set<string>();
  el("roster").innerHTML = renderRosterTable(draft.roster, selected);
}

function markDirty(): void {
  // Any edit invalidates the stored scenario; the next recommend/validate
  // click re-submits the draft first.
  scenarioId = null;
}

async function submitDraft(): Promise<string> {
  const issues = validateDraft(draft);
  el("issues").innerHTML = renderIssues(issues);
  if (issues.length > 0) {
    throw new DraftError(issues);
  }
  const id = await api.createScenario(draftToScenario(draft));
  scenarioId = id;
  setStatus(`scenario stored as ${id}`);
  return id;
}

async function ensureScenario(): Promise<string> {
  return scenarioId ?? submitDraft();
}

async function refreshLedger(): Promise<void> {
  try {
    el("ledger").innerHTML = renderLedger(await api.getLedger());
  } catch {
    // The ledger is a footer nicety; leave it empty until the service has one.
  }
}

function reportError(error: unknown): void {
  if (error instanceof DraftError) {
    setStatus("fix the highlighted fields before submitting", true);
  } else if (error instanceof ApiError) {
    setStatus(`service error (${error.status}): ${error.message}`, true);
  } else {
    setStatus(String(error), true);
  }
}

async function recommend(): Promise<void> {
  try {
    const id = await ensureScenario();
    lastRecommendation = await api.recommend(id);
    el("recommendation").innerHTML = renderRecommendationView(lastRecommendation);
    renderRoster();
    setStatus(`recommendation ready for scenario ${id}`);
  } catch (error) {
    reportError(error);
  }
}

async function watchRun(runId: string): Promise<void> {
  const run = await pollRun(api, runId, {
    onUpdate: (update) => {
      el("run-status").innerHTML = renderRunStatus(update);
    },
  });
  if (run.status === "done" && run.result) {
    el("validation").innerHTML = renderValidationView(run.result);
    setStatus(`validation run ${runId} finished`);
  } else {
    setStatus(`validation run ${runId} failed: ${run.error ?? "unknown error"}`, true);
  }
  await refreshLedger();
}

async function validate(): Promise<void> {
  try {
    const id = await ensureScenario();
    const reps = Number(el<HTMLInputElement>("reps").value) || 8;
    const runId = await api.startValidation(id, reps);
    window.location.hash = `run=${encodeURIComponent(runId)}`;
    setStatus(`validation run ${runId} launched`);
    await watchRun(runId);
  } catch (error) {
    reportError(error);
  }
}

function bindFormEvents(): void {
  el("scenario-form").addEventListener("input", (event) => {
    const input = event.target as HTMLInputElement | HTMLSelectElement;
    const field = input.dataset.field;
    if (!field) return;
    markDirty();
    if (field.startsWith("dataset.")) {
      const key = field.slice("dataset.".length) as keyof ScenarioDraft["dataset"];
      draft.dataset[key] = input.value;
    } else if (field === "name" || field === "accuracy_threshold" || field === "seed") {
      draft[field] = input.value;
    }
  });

  el("roster").addEventListener("input", (event) => {
    const input = event.target as HTMLInputElement;
    const row = Number(input.dataset.row);
    const field = input.dataset.field as keyof ReturnType<typeof emptyRosterRow> | undefined;
    if (!field || Number.isNaN(row) || !draft.roster[row]) return;
    markDirty();
    draft.roster[row]![field] = input.value;
  });

  el("roster").addEventListener("click", (event) => {
    const button = event.target as HTMLElement;
    const index = button.dataset.removeRow;
    if (index === undefined) return;
    markDirty();
    draft.roster.splice(Number(index), 1);
    renderRoster();
  });

  el("add-row").addEventListener("click", () => {
    markDirty();
    draft.roster.push(emptyRosterRow());
    renderRoster();
  });

  el("weights").addEventListener("input", (event) => {
    const input = event.target as HTMLInputElement;
    const key = input.dataset.weight as WeightKey | undefined;
    if (!key) return;
    markDirty();
    draft.weights = renormalizeWeights(draft.weights, key, Number(input.value));
    el("weights").innerHTML = renderWeightSliders(draft.weights);
  });
}

function bindCsvEvents(): void {
  el("export-csv").addEventListener("click", () => {
    const blob = new Blob([rosterToCsv(draft.roster)], { type: "text/csv" });
    const anchor = document.createElement("a");
    anchor.href = URL.createObjectURL(blob);
    anchor.download = "roster.csv";
    anchor.click();
    URL.revokeObjectURL(anchor.href);
  });

  el<HTMLInputElement>("import-csv").addEventListener("change", async (event) => {
    const input = event.target as HTMLInputElement;
    const file = input.files?.[0];
    if (!file) return;
    try {
      draft.roster = rosterFromCsv(await file.text());
      markDirty();
      renderRoster();
      setStatus(`imported ${draft.roster.length} nodes from ${file.name}`);
    } catch (error) {
      setStatus(String(error), true);
    }
    input.value = "";
  });
}

async function loadBundledList(): Promise<void> {
  try {
    const names = await api.listBundled();
    el("bundled").innerHTML = renderBundledPicker(names);
    el("bundled-load").addEventListener("click", async () => {
      const name = el<HTMLSelectElement>("bundled-select").value;
      try {
        draft = draftFromScenario(await api.getBundledScenario(name));
        lastRecommendation = null;
        markDirty();
        renderForm();
        setStatus(`loaded bundled scenario ${name}`);
      } catch (error) {
        reportError(error);
      }
    });
  } catch (error) {
    reportError(error);
  }
}

async function init(): Promise<void> {
  el("api-base").textContent = apiBase;
  renderForm();
  bindFormEvents();
  bindCsvEvents();
  el("submit-scenario").addEventListener("click", () => submitDraft().catch(reportError));
  el("recommend").addEventListener("click", recommend);
  el("validate").addEventListener("click", validate);
  await loadBundledList();
  await refreshLedger();

  const bookmark = window.location.hash.match(/^#run=(.+)$/);
  if (bookmark && bookmark[1]) {
    await watchRun(decodeURIComponent(bookmark[1])).catch(reportError);
  }
}

init().catch((error) => setStatus(String(error), true));
