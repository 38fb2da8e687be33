// Pure projections from service payloads to what the console draws. All
// model quantities (F rows, SKL scores, BVSB ratios, accuracies) arrive
// precomputed; this layer only reshapes them for display and never runs
// any model math of its own.

import type {
  HistoryRow,
  MetricReport,
  MetricsResponse,
  QueryPayload,
  SessionDescriptor,
} from "./api.js";

export type Phase =
  | "configuring"
  | "awaiting-labels"
  | "computing"
  | "finished"
  | "failed";

export type Answer = number | "abstain" | null;

// One bar of a query's F-row chart. `served` is the exact decimal string
// from the service; `fraction` only sizes the bar.
export interface FRowBar {
  classId: number;
  className: string;
  served: string;
  fraction: number;
  isBest: boolean;
  isSecond: boolean;
}

export interface QueryCard {
  index: number;
  cluster: number;
  sklScore: number;
  bvsbRatio: number;
  features: number[];
  sparkline: string; // SVG polyline points
  fRow: FRowBar[];
  answer: Answer;
}

export interface CurvePoint {
  labeledCount: number;
  value: number;
}

export interface RecallBar {
  classId: number;
  className: string;
  recall: number;
  support: number;
}

export interface MetricsPanel {
  labeledCount: number;
  budget: number;
  totalCurve: CurvePoint[];
  averageCurve: CurvePoint[];
  perClassRecall: RecallBar[];
  latest: MetricReport | null;
}

export interface SessionSummary {
  sessionId: string;
  labeledCount: number;
  budget: number;
  batchSize: number;
  nClasses: number;
  classNames: string[];
}

export interface ConsoleViewModel {
  phase: Phase;
  session: SessionSummary | null;
  cards: QueryCard[];
  metrics: MetricsPanel | null;
  history: MetricsResponse | null;
  banner: string | null;
  fieldErrors: Record<string, string>;
  submitting: boolean;
}

export const SPARK_WIDTH = 120;
export const SPARK_HEIGHT = 28;
export const FEATURE_PREVIEW = 8;

// Config fields the session form exposes; used to route validation
// messages back to the field that caused them.
export const CONFIG_FIELDS = [
  "batch_size",
  "budget",
  "initial_labels",
  "seed",
  "delta",
  "gamma",
  "alpha",
  "embed_dim",
  "embed_source",
  "perplexity",
  "tsne_iters",
  "gate_oracle_labels",
] as const;

export function initialViewModel(): ConsoleViewModel {
  return {
    phase: "configuring",
    session: null,
    cards: [],
    metrics: null,
    history: null,
    banner: null,
    fieldErrors: {},
    submitting: false,
  };
}

export function classNamesFor(nClasses: number, names: string[] | null): string[] {
  if (names && names.length === nClasses) {
    return names.slice();
  }
  return Array.from({ length: nClasses }, (_, i) => `class ${i}`);
}

export function sessionSummary(descriptor: SessionDescriptor): SessionSummary {
  return {
    sessionId: descriptor.session_id,
    labeledCount: descriptor.labeled_count,
    budget: descriptor.budget,
    batchSize: descriptor.batch_size,
    nClasses: descriptor.n_classes,
    classNames: classNamesFor(descriptor.n_classes, descriptor.class_names),
  };
}

// Polyline points for the first few feature values, scaled to the card
// sparkline box. A constant row draws as a midline.
export function sparklinePoints(
  features: number[],
  width = SPARK_WIDTH,
  height = SPARK_HEIGHT,
): string {
  const values = features.slice(0, FEATURE_PREVIEW);
  if (values.length === 0) {
    return "";
  }
  if (values.length === 1) {
    return `0,${height / 2} ${width},${height / 2}`;
  }
  const lo = Math.min(...values);
  const hi = Math.max(...values);
  const span = hi - lo;
  const step = width / (values.length - 1);
  return values
    .map((v, i) => {
      const y = span === 0 ? height / 2 : height - 2 - ((v - lo) / span) * (height - 4);
      return `${(i * step).toFixed(1)},${y.toFixed(1)}`;
    })
    .join(" ");
}

// Bars for a served F row. The decimal strings pass through verbatim;
// parsing happens only to size the bar geometry.
export function fRowBars(query: QueryPayload, classNames: string[]): FRowBar[] {
  return query.f_row.map((served, classId) => {
    const parsed = Number(served);
    const fraction = Number.isFinite(parsed) ? Math.min(Math.max(parsed, 0), 1) : 0;
    return {
      classId,
      className: classNames[classId] ?? `class ${classId}`,
      served,
      fraction,
      isBest: classId === query.best_class,
      isSecond: classId === query.second_class,
    };
  });
}

export function buildCards(queries: QueryPayload[], classNames: string[]): QueryCard[] {
  return queries.map((q) => ({
    index: q.index,
    cluster: q.cluster,
    sklScore: q.skl_score,
    bvsbRatio: q.bvsb_ratio,
    features: q.features.slice(0, FEATURE_PREVIEW),
    sparkline: sparklinePoints(q.features),
    fRow: fRowBars(q, classNames),
    answer: null,
  }));
}

export function allAnswered(cards: QueryCard[]): boolean {
  return cards.length > 0 && cards.every((c) => c.answer !== null);
}

export function labelControlsEnabled(vm: ConsoleViewModel): boolean {
  return vm.phase === "awaiting-labels" && !vm.submitting;
}

export function submitEnabled(vm: ConsoleViewModel): boolean {
  return labelControlsEnabled(vm) && allAnswered(vm.cards);
}

function curve(
  history: HistoryRow[],
  pick: (row: HistoryRow) => number | null,
): CurvePoint[] {
  const points: CurvePoint[] = [];
  for (const row of history) {
    const value = pick(row);
    if (value !== null && Number.isFinite(value)) {
      points.push({ labeledCount: row.labeled_count, value });
    }
  }
  return points;
}

export function buildMetricsPanel(
  metrics: MetricsResponse,
  classNames: string[],
): MetricsPanel {
  const latest = metrics.metrics;
  return {
    labeledCount: metrics.labeled_count,
    budget: metrics.budget,
    totalCurve: curve(metrics.history, (r) => r.total_accuracy),
    averageCurve: curve(metrics.history, (r) => r.average_accuracy),
    perClassRecall: (latest?.per_class ?? []).map((m) => ({
      classId: m.class_id,
      className: classNames[m.class_id] ?? `class ${m.class_id}`,
      recall: m.recall,
      support: m.support,
    })),
    latest,
  };
}

// Map a rejected session request onto form fields. FastAPI validation
// errors carry a location list; service-side config checks return plain
// messages that start with the offending field name.
export function fieldErrorsFrom(detail: unknown): Record<string, string> {
  const errors: Record<string, string> = {};
  if (Array.isArray(detail)) {
    for (const entry of detail) {
      if (entry && typeof entry === "object" && "loc" in entry && "msg" in entry) {
        const loc = (entry as { loc: unknown[] }).loc;
        const field = String(loc[loc.length - 1]);
        errors[field] = String((entry as { msg: unknown }).msg);
      }
    }
    return errors;
  }
  if (typeof detail === "string") {
    const message = detail.replace(/^label_budget\b/, "budget");
    for (const field of CONFIG_FIELDS) {
      if (message.startsWith(field)) {
        errors[field] = message;
        return errors;
      }
    }
  }
  return errors;
}

// The finished screen offers the raw run record for download; the text is
// the metrics response as served, pretty-printed.
export function historyDownload(metrics: MetricsResponse): { filename: string; text: string } {
  return {
    filename: `run-history-${metrics.session_id}.json`,
    text: JSON.stringify(metrics, null, 2),
  };
}
