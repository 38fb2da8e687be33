// DOM rendering. The whole console re-renders from the view model on each
// change; interaction is wired once in main.ts through data-action
// attributes, so no listeners are attached here.

import {
  historyDownload,
  labelControlsEnabled,
  submitEnabled,
  SPARK_HEIGHT,
  SPARK_WIDTH,
} from "./viewmodel.js";
import type { ConsoleViewModel, MetricsPanel, QueryCard, CurvePoint } from "./viewmodel.js";

function esc(value: unknown): string {
  return String(value)
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function fmt(value: number, digits = 4): string {
  return Number.isFinite(value) ? value.toPrecision(digits) : String(value);
}

// Session configuration form

const FORM_FIELDS: Array<{ name: string; label: string; placeholder: string }> = [
  { name: "batch_size", label: "Batch size", placeholder: "service default" },
  { name: "budget", label: "Label budget", placeholder: "service default" },
  { name: "initial_labels", label: "Initial labels", placeholder: "service default" },
  { name: "seed", label: "Seed", placeholder: "service default" },
  { name: "delta", label: "Confidence threshold", placeholder: "service default" },
  { name: "gamma", label: "RBF gamma", placeholder: "service default" },
  { name: "alpha", label: "Spreading alpha", placeholder: "service default" },
  { name: "embed_dim", label: "Embedding dim", placeholder: "service default" },
  { name: "perplexity", label: "Perplexity", placeholder: "service default" },
  { name: "tsne_iters", label: "Embedding iterations", placeholder: "service default" },
];

function renderConfigForm(vm: ConsoleViewModel): string {
  const inputs = FORM_FIELDS.map((f) => {
    const error = vm.fieldErrors[f.name];
    return `
      <label class="form-field">
        <span>${esc(f.label)}</span>
        <input id="field-${f.name}" name="${f.name}" placeholder="${esc(f.placeholder)}">
        ${error ? `<span class="field-error" data-field="${f.name}">${esc(error)}</span>` : ""}
      </label>`;
  }).join("");
  const sourceError = vm.fieldErrors["embed_source"];
  const gateError = vm.fieldErrors["gate_oracle_labels"];
  return `
    <section class="config">
      <h2>New labeling session</h2>
      <form id="session-form">
        <div class="form-grid">
          ${inputs}
          <label class="form-field">
            <span>Embedding source</span>
            <select id="field-embed_source" name="embed_source">
              <option value="">service default</option>
              <option value="label-distribution">label-distribution</option>
              <option value="raw-features">raw-features</option>
            </select>
            ${sourceError ? `<span class="field-error" data-field="embed_source">${esc(sourceError)}</span>` : ""}
          </label>
          <label class="form-field form-check">
            <input type="checkbox" id="field-gate_oracle_labels" name="gate_oracle_labels">
            <span>Gate my answers by model confidence</span>
            ${gateError ? `<span class="field-error" data-field="gate_oracle_labels">${esc(gateError)}</span>` : ""}
          </label>
        </div>
        <button type="submit" data-action="start">Start session</button>
      </form>
    </section>`;
}

// Query cards

function renderFRow(card: QueryCard): string {
  const bars = card.fRow
    .map((bar) => {
      const width = (bar.fraction * 100).toFixed(2);
      const tags = `${bar.isBest ? " best" : ""}${bar.isSecond ? " second" : ""}`;
      return `
        <div class="frow-line">
          <span class="frow-class">${esc(bar.className)}</span>
          <div class="frow-track">
            <div class="frow-bar${tags}" style="width: ${width}%"></div>
          </div>
          <code class="frow-value" title="${esc(bar.served)}">${esc(bar.served)}</code>
        </div>`;
    })
    .join("");
  return `<div class="frow" data-role="frow">${bars}</div>`;
}

function renderFeatureTable(card: QueryCard): string {
  const cells = card.features
    .map((v, i) => `<td title="feature ${i}">${esc(fmt(v, 3))}</td>`)
    .join("");
  return `<table class="feature-table"><tr>${cells}</tr></table>`;
}

function renderCard(card: QueryCard, controlsOn: boolean, classNames: string[]): string {
  const buttons = classNames
    .map((name, classId) => {
      const selected = card.answer === classId ? " selected" : "";
      return `<button data-action="label" data-index="${card.index}" data-label="${classId}"
        class="label-btn${selected}" ${controlsOn ? "" : "disabled"}>${esc(name)}</button>`;
    })
    .join("");
  const abstainSelected = card.answer === "abstain" ? " selected" : "";
  return `
    <article class="query-card" data-index="${card.index}" data-answer="${card.answer === null ? "" : card.answer}">
      <header>
        <span class="card-id">sample ${card.index}</span>
        <span class="card-cluster">cluster ${card.cluster}</span>
      </header>
      <div class="card-body">
        <svg class="sparkline" viewBox="0 0 ${SPARK_WIDTH} ${SPARK_HEIGHT}" width="${SPARK_WIDTH}" height="${SPARK_HEIGHT}">
          <polyline points="${card.sparkline}" fill="none" />
        </svg>
        ${renderFeatureTable(card)}
        <dl class="card-scores">
          <dt>SKL score</dt><dd data-role="skl" data-raw="${card.sklScore}">${esc(fmt(card.sklScore))}</dd>
          <dt>BVSB ratio</dt><dd data-role="bvsb" data-raw="${card.bvsbRatio}">${esc(fmt(card.bvsbRatio))}</dd>
        </dl>
        ${renderFRow(card)}
      </div>
      <footer class="label-controls">
        ${buttons}
        <button data-action="abstain" data-index="${card.index}"
          class="label-btn abstain${abstainSelected}" ${controlsOn ? "" : "disabled"}>abstain</button>
      </footer>
    </article>`;
}

// Metrics panel

function curvePath(points: CurvePoint[], width: number, height: number, budget: number): string {
  if (points.length === 0) {
    return "";
  }
  const maxX = Math.max(budget, ...points.map((p) => p.labeledCount));
  return points
    .map((p) => {
      const x = maxX === 0 ? 0 : (p.labeledCount / maxX) * (width - 8) + 4;
      const y = height - 4 - p.value * (height - 8);
      return `${x.toFixed(1)},${y.toFixed(1)}`;
    })
    .join(" ");
}

function renderMetricsPanel(panel: MetricsPanel): string {
  const width = 280;
  const height = 120;
  const total = curvePath(panel.totalCurve, width, height, panel.budget);
  const average = curvePath(panel.averageCurve, width, height, panel.budget);
  const latest = panel.latest;
  const recallBars = panel.perClassRecall
    .map(
      (r) => `
      <div class="recall-line">
        <span class="recall-class">${esc(r.className)} (n=${r.support})</span>
        <div class="recall-track"><div class="recall-bar" style="width: ${(r.recall * 100).toFixed(1)}%"></div></div>
        <span class="recall-value">${esc(fmt(r.recall, 3))}</span>
      </div>`,
    )
    .join("");
  return `
    <section class="metrics-panel" data-role="metrics">
      <h3>Accuracy over labeled count</h3>
      <svg class="curves" viewBox="0 0 ${width} ${height}" width="${width}" height="${height}">
        <polyline class="curve-total" points="${total}" fill="none" />
        <polyline class="curve-average" points="${average}" fill="none" />
      </svg>
      <div class="legend">
        <span class="legend-total">total accuracy${latest ? ` ${esc(fmt(latest.total_accuracy))}` : ""}</span>
        <span class="legend-average">average accuracy${latest ? ` ${esc(fmt(latest.average_accuracy))}` : ""}</span>
      </div>
      <h3>Per-class recall</h3>
      ${recallBars}
    </section>`;
}

// Top-level screens

function renderSessionBar(vm: ConsoleViewModel): string {
  const s = vm.session;
  if (!s) {
    return "";
  }
  const pct = s.budget > 0 ? Math.min((s.labeledCount / s.budget) * 100, 100) : 0;
  return `
    <section class="session-bar" data-labeled="${s.labeledCount}">
      <span class="session-id">session ${esc(s.sessionId)}</span>
      <span class="session-status">${esc(vm.phase)}</span>
      <div class="budget-track"><div class="budget-bar" style="width: ${pct.toFixed(1)}%"></div></div>
      <span class="budget-text">${s.labeledCount} / ${s.budget} labeled</span>
    </section>`;
}

function renderLabeling(vm: ConsoleViewModel): string {
  const controlsOn = labelControlsEnabled(vm);
  const classNames = vm.session?.classNames ?? [];
  const cards = vm.cards.map((c) => renderCard(c, controlsOn, classNames)).join("");
  const note = vm.phase === "computing" ? `<p class="computing-note">updating the model, hold on</p>` : "";
  return `
    ${renderSessionBar(vm)}
    ${note}
    <section class="cards">${cards}</section>
    <div class="submit-row">
      <button data-action="submit" class="submit-btn" ${submitEnabled(vm) ? "" : "disabled"}>
        Submit batch
      </button>
    </div>
    ${vm.metrics ? renderMetricsPanel(vm.metrics) : ""}`;
}

function renderFinished(vm: ConsoleViewModel): string {
  let download = "";
  if (vm.history) {
    const artifact = historyDownload(vm.history);
    const href = `data:application/json;charset=utf-8,${encodeURIComponent(artifact.text)}`;
    download = `<a data-action="download" class="download-link" download="${esc(artifact.filename)}"
      href="${href}">Download run history</a>`;
  }
  const s = vm.session;
  return `
    ${renderSessionBar(vm)}
    <section class="finished" data-role="finished">
      <h2>Run finished</h2>
      <p>${s ? `${s.labeledCount} of ${s.budget} labels spent.` : ""}</p>
      ${download}
      <button data-action="new-session">Start another session</button>
    </section>
    ${vm.metrics ? renderMetricsPanel(vm.metrics) : ""}`;
}

export function renderConsole(vm: ConsoleViewModel): string {
  let body: string;
  switch (vm.phase) {
    case "configuring":
      body = renderConfigForm(vm);
      break;
    case "finished":
      body = renderFinished(vm);
      break;
    case "failed":
      body = `${renderSessionBar(vm)}<section class="failed"><h2>Run failed</h2></section>`;
      break;
    default:
      body = renderLabeling(vm);
  }
  const banner = vm.banner ? `<div class="banner" data-role="banner">${esc(vm.banner)}</div>` : "";
  return `
    <div class="console" data-phase="${vm.phase}">
      <header class="masthead"><h1>Labeling console</h1></header>
      ${banner}
      ${body}
    </div>`;
}

export function render(vm: ConsoleViewModel, root: HTMLElement): void {
  root.innerHTML = renderConsole(vm);
}
