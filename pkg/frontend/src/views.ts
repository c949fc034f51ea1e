/** Pure HTML/SVG renderers for every console view.
 *
 * Each function maps service payloads (plus editor state) to markup with no
 * DOM dependency, so tests can assert on the exact output. Raw payload
 * numbers are carried in data-* attributes; human labels only round for
 * display. The only client-side arithmetic is coordinate scaling.
 */

import type { DraftIssue, RosterDraftRow, ScenarioDraft } from "./state";
import { WEIGHT_KEYS } from "./state";
import type {
  LedgerJson,
  WeightsJson,
  MethodName,
  RecommendationJson,
  RecommendationSetJson,
  RunStatusJson,
  ValidationResultJson,
} from "./types";
import { METHOD_ORDER } from "./types";

export function escapeHtml(value: string): string {
  return value
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

/** Round for reading; the exact value stays in data attributes. */
function fmt(value: number): string {
  if (Number.isInteger(value)) return String(value);
  return String(Number(value.toPrecision(4)));
}

function orderedMethods(methods: Record<string, RecommendationJson>): RecommendationJson[] {
  const known = METHOD_ORDER.filter((name) => name in methods).map((name) => methods[name]!);
  const extra = Object.keys(methods)
    .filter((name) => !(METHOD_ORDER as readonly string[]).includes(name))
    .sort()
    .map((name) => methods[name]!);
  return [...known, ...extra];
}

export function renderBundledPicker(names: string[]): string {
  const options = names
    .map((name) => `<option value="${escapeHtml(name)}">${escapeHtml(name)}</option>`)
    .join("");
  return `<select id="bundled-select">${options}</select>
<button id="bundled-load" type="button">Load bundled</button>`;
}

function textInput(field: string, value: string, size = 10): string {
  return `<input data-field="${escapeHtml(field)}" value="${escapeHtml(value)}" size="${size}">`;
}

export function renderScenarioForm(draft: ScenarioDraft, datasetTypes: readonly string[]): string {
  const ds = draft.dataset;
  const typeOptions = datasetTypes
    .map(
      (t) =>
        `<option value="${escapeHtml(t)}"${t === ds.type ? " selected" : ""}>${escapeHtml(t)}</option>`,
    )
    .join("");
  return `<div class="form-grid">
  <label>Scenario name ${textInput("name", draft.name, 24)}</label>
  <label>Dataset name ${textInput("dataset.name", ds.name, 18)}</label>
  <label>Type <select data-field="dataset.type">${typeOptions}</select></label>
  <label>Train samples ${textInput("dataset.train_size", ds.train_size, 8)}</label>
  <label>Classes ${textInput("dataset.classes", ds.classes, 4)}</label>
  <label>Sequence length ${textInput("dataset.sequence_length", ds.sequence_length, 6)}</label>
  <label>Class separation ${textInput("dataset.class_separation", ds.class_separation, 6)}</label>
  <label>Test samples ${textInput("dataset.test_size", ds.test_size, 8)}</label>
  <label>Accuracy threshold ${textInput("accuracy_threshold", draft.accuracy_threshold, 6)}</label>
  <label>Seed ${textInput("seed", draft.seed, 6)}</label>
</div>`;
}

export function renderRosterTable(
  rows: RosterDraftRow[],
  selected: ReadonlySet<string> = new Set(),
): string {
  const header = `<tr>
  <th>node_id</th><th>power (W)</th><th>location</th>
  <th>data volume</th><th>consistency</th><th>completeness</th><th></th>
</tr>`;
  const body = rows
    .map((row, index) => {
      const classes = selected.has(row.node_id) ? "roster-row selected" : "roster-row";
      const cell = (field: keyof RosterDraftRow, size: number) =>
        `<td><input data-row="${index}" data-field="${field}" value="${escapeHtml(row[field])}" size="${size}"></td>`;
      return `<tr class="${classes}" data-node-id="${escapeHtml(row.node_id)}">
  ${cell("node_id", 6)}${cell("power_watts", 6)}${cell("location", 10)}
  ${cell("data_volume", 6)}${cell("consistency", 6)}${cell("completeness", 6)}
  <td><button type="button" data-remove-row="${index}" title="remove node">x</button></td>
</tr>`;
    })
    .join("\n");
  return `<table class="roster"><thead>${header}</thead><tbody>${body}</tbody></table>`;
}

export function renderWeightSliders(weights: WeightsJson): string {
  const rows = WEIGHT_KEYS.map((key) => {
    const value = weights[key];
    return `<label class="weight-row">w_${key}
  <input type="range" min="0" max="1" step="0.01" data-weight="${key}" value="${String(value)}">
  <output data-weight-value="${key}">${value.toFixed(2)}</output>
</label>`;
  }).join("\n");
  const total = WEIGHT_KEYS.reduce((sum, key) => sum + weights[key], 0);
  return `<div class="weights">
${rows}
<p class="weight-sum">sum = <span data-weight-sum>${total.toFixed(2)}</span></p>
</div>`;
}

export function renderIssues(issues: DraftIssue[]): string {
  if (issues.length === 0) return "";
  const items = issues
    .map(
      (issue) =>
        `<li class="issue" data-issue-field="${escapeHtml(issue.field)}">${escapeHtml(issue.field)}: ${escapeHtml(issue.message)}</li>`,
    )
    .join("");
  return `<ul class="issues">${items}</ul>`;
}

function renderAllocations(rec: RecommendationJson): string {
  const rows = rec.selected
    .map(
      (a) => `<tr class="allocation" data-node-id="${escapeHtml(a.node_id)}">
  <td>${escapeHtml(a.node_id)}</td>
  <td data-volume="${String(a.allocated_volume_fraction)}">${fmt(a.allocated_volume_fraction)}</td>
  <td>${a.use_clean_only ? "clean data only" : "all data"}</td>
</tr>`,
    )
    .join("");
  return `<table class="allocations">
<thead><tr><th>node</th><th>allocated volume</th><th>data</th></tr></thead>
<tbody>${rows}</tbody></table>`;
}

export function renderRecommendationView(rec: RecommendationSetJson): string {
  const methods = orderedMethods(rec.methods);
  const maxKg = Math.max(...methods.map((m) => m.predicted_kg), 0);
  const bars = methods
    .map((m) => {
      const width = maxKg > 0 ? (m.predicted_kg / maxKg) * 100 : 0;
      return `<div class="bar-row">
  <span class="bar-label">${escapeHtml(m.method)}</span>
  <div class="bar" data-method="${escapeHtml(m.method)}" data-kg="${String(m.predicted_kg)}"
       style="width: ${width.toFixed(2)}%" title="${String(m.predicted_kg)} kg CO2e"></div>
  <span class="bar-value">${fmt(m.predicted_kg)} kg CO2e</span>
</div>`;
    })
    .join("\n");

  const details = methods
    .map(
      (m) => `<details class="method-detail" data-method="${escapeHtml(m.method)}">
<summary>${escapeHtml(m.method)}: ${m.selected.length} nodes,
  N&#770;=${m.n_hat}, V_n=${fmt(m.v_n)}, V=${fmt(m.v_target)}, E=${fmt(m.e_effective)}${
    m.shortfall_flag ? ', <span class="shortfall">volume shortfall</span>' : ""
  }</summary>
${renderAllocations(m)}
</details>`,
    )
    .join("\n");

  const ranking = rec.ranking
    .map(
      (r, i) => `<tr class="ranked-node" data-node-id="${escapeHtml(r.node_id)}">
  <td>${i + 1}</td><td>${escapeHtml(r.node_id)}</td>
  <td data-score="${String(r.score)}">${fmt(r.score)}</td>
  <td data-co2-rate="${String(r.co2_rate)}">${fmt(r.co2_rate)}</td>
</tr>`,
    )
    .join("");

  const warnings = rec.warnings
    .map((w) => `<p class="warning">${escapeHtml(w)}</p>`)
    .join("");

  return `<div class="recommendation">
<p>Predicted volume fraction for threshold
  <span data-threshold="${String(rec.threshold)}">${fmt(rec.threshold)}</span>:
  <strong data-predicted-volume="${String(rec.predicted_volume)}">${fmt(rec.predicted_volume)}</strong></p>
${warnings}
<h3>Predicted emissions</h3>
<div class="bars">${bars}</div>
<h3>Methods</h3>
${details}
<h3>Node ranking</h3>
<table class="ranking">
<thead><tr><th>#</th><th>node</th><th>score</th><th>kg CO2e / h</th></tr></thead>
<tbody>${ranking}</tbody></table>
</div>`;
}

const CHART = {
  width: 520,
  height: 260,
  left: 44,
  right: 12,
  top: 12,
  bottom: 32,
};

function accuracyY(accuracy: number): number {
  const plotHeight = CHART.height - CHART.top - CHART.bottom;
  return CHART.top + (1 - accuracy) * plotHeight;
}

export function renderValidationChart(result: ValidationResultJson): string {
  const plotWidth = CHART.width - CHART.left - CHART.right;
  const columnWidth = plotWidth / Math.max(result.methods.length, 1);

  const gridlines = [0, 0.25, 0.5, 0.75, 1]
    .map((tick) => {
      const y = accuracyY(tick);
      return `<line class="grid" x1="${CHART.left}" x2="${CHART.width - CHART.right}" y1="${y.toFixed(1)}" y2="${y.toFixed(1)}"></line>
<text class="tick" x="${CHART.left - 6}" y="${(y + 3).toFixed(1)}" text-anchor="end">${tick}</text>`;
    })
    .join("\n");

  const points = result.methods
    .map((summary, column) => {
      const x0 = CHART.left + column * columnWidth;
      const reps = summary.reps;
      const circles = reps
        .map((rep, index) => {
          const spread = reps.length > 1 ? index / (reps.length - 1) : 0.5;
          const cx = x0 + columnWidth * (0.2 + 0.6 * spread);
          const cy = accuracyY(rep.accuracy);
          return `<circle class="rep-point ${rep.threshold_met ? "hit" : "miss"}"
  data-method="${escapeHtml(summary.method)}" data-rep="${rep.rep}"
  data-accuracy="${String(rep.accuracy)}" data-kg="${String(rep.kg)}"
  cx="${cx.toFixed(1)}" cy="${cy.toFixed(1)}" r="4">
  <title>${escapeHtml(summary.method)} rep ${rep.rep}: accuracy ${String(rep.accuracy)}</title>
</circle>`;
        })
        .join("\n");
      const label = `<text class="method-label" x="${(x0 + columnWidth / 2).toFixed(1)}"
  y="${CHART.height - 10}" text-anchor="middle">${escapeHtml(summary.method)}</text>`;
      return circles + "\n" + label;
    })
    .join("\n");

  const thresholdY = accuracyY(result.threshold).toFixed(1);
  const thresholdLine = `<line class="threshold-line" data-threshold="${String(result.threshold)}"
  x1="${CHART.left}" x2="${CHART.width - CHART.right}" y1="${thresholdY}" y2="${thresholdY}"></line>
<text class="threshold-label" x="${CHART.width - CHART.right}" y="${(Number(thresholdY) - 4).toFixed(1)}"
  text-anchor="end">threshold ${fmt(result.threshold)}</text>`;

  return `<svg class="validation-chart" viewBox="0 0 ${CHART.width} ${CHART.height}" role="img"
  aria-label="accuracy per repetition and method">
${gridlines}
${points}
${thresholdLine}
</svg>`;
}

export function renderValidationSummary(result: ValidationResultJson): string {
  const maxKg = Math.max(...result.methods.map((m) => m.mean_kg), 0);
  const rows = result.methods
    .map((m) => {
      const width = maxKg > 0 ? (m.mean_kg / maxKg) * 100 : 0;
      return `<tr class="method-summary" data-method="${escapeHtml(m.method)}">
  <td>${escapeHtml(m.method)}</td>
  <td data-mean-accuracy="${String(m.mean_accuracy)}">${fmt(m.mean_accuracy)}</td>
  <td data-threshold-rate="${String(m.threshold_rate)}">${fmt(m.threshold_rate)}</td>
  <td class="kg-cell" data-mean-kg="${String(m.mean_kg)}">
    <div class="bar" style="width: ${width.toFixed(2)}%"></div> ${fmt(m.mean_kg)} kg
  </td>
</tr>`;
    })
    .join("");
  return `<table class="validation-summary">
<thead><tr><th>method</th><th>mean accuracy</th><th>threshold rate</th><th>mean emissions</th></tr></thead>
<tbody>${rows}</tbody></table>`;
}

export function renderValidationView(result: ValidationResultJson): string {
  return `<div class="validation">
<h3>${escapeHtml(result.scenario)}</h3>
${renderValidationChart(result)}
${renderValidationSummary(result)}
</div>`;
}

export function renderRunStatus(run: RunStatusJson): string {
  const error = run.error ? ` <span class="run-error">${escapeHtml(run.error)}</span>` : "";
  return `<p class="run-status" data-run-id="${escapeHtml(run.run_id)}" data-status="${escapeHtml(run.status)}">
run <a href="#run=${encodeURIComponent(run.run_id)}">${escapeHtml(run.run_id)}</a>:
<strong>${escapeHtml(run.status)}</strong> (${run.reps} reps, submitted ${escapeHtml(run.submitted_at)})${error}
</p>`;
}

export function renderLedger(ledger: LedgerJson): string {
  const purposes = Object.entries(ledger.by_purpose)
    .map(
      ([purpose, kg]) =>
        `<li>${escapeHtml(purpose)}: <span data-purpose-kg="${escapeHtml(purpose)}">${fmt(kg)}</span> kg</li>`,
    )
    .join("");
  return `<div class="ledger">
<p>Lifecycle emissions ledger: <strong data-total-kg="${String(ledger.total_kg)}">${fmt(ledger.total_kg)}</strong> kg CO2e,
<span data-total-kwh="${String(ledger.total_kwh)}">${fmt(ledger.total_kwh)}</span> kWh
over ${ledger.entries} entries.</p>
<ul>${purposes}</ul>
</div>`;
}

export function methodSelectionIds(
  rec: RecommendationSetJson,
  method: MethodName = "NS",
): Set<string> {
  const entry = rec.methods[method];
  return new Set(entry ? entry.selected.map((a) => a.node_id) : []);
}
