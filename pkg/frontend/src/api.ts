// Typed client for the labeling service HTTP API. Every payload shape here
// mirrors what the service sends; the console never derives these values.

export interface PerClassMetric {
  class_id: number;
  precision: number;
  recall: number;
  support: number;
  auc: number | null;
}

export interface MetricReport {
  labeled_count: number;
  n_evaluated: number;
  total_accuracy: number;
  average_accuracy: number;
  per_class: PerClassMetric[];
}

export interface SessionDescriptor {
  session_id: string;
  status: string;
  labeled_count: number;
  budget: number;
  batch_size: number;
  pending_count: number;
  n_classes: number;
  class_names: string[] | null;
  metrics: MetricReport | null;
}

// One pending query as frozen by the service. f_row entries are decimal
// strings so the exact served probabilities survive the round trip.
export interface QueryPayload {
  index: number;
  features: number[];
  cluster: number;
  skl_score: number;
  bvsb_ratio: number;
  best_class: number;
  second_class: number;
  f_row: string[];
}

export interface QueriesResponse {
  session_id: string;
  status: string;
  queries: QueryPayload[];
}

export interface LabelItem {
  index: number;
  label: number | null; // null means abstain
}

export interface SubmitResponse {
  session_id: string;
  status: string;
  token?: string;
  iteration?: number;
  labeled_count?: number;
  accepted?: number;
  rejected?: number;
  pending_count?: number;
  metrics?: MetricReport | null;
  error?: string;
}

export interface HistoryRow {
  iteration: number;
  labeled_count: number;
  accepted: number;
  total_accuracy: number | null;
  average_accuracy: number | null;
}

export interface MetricsResponse {
  session_id: string;
  status: string;
  iteration: number;
  labeled_count: number;
  budget: number;
  metrics: MetricReport | null;
  history: HistoryRow[];
  error: string | null;
}

export interface SessionRequest {
  batch_size?: number;
  delta?: number;
  budget?: number;
  seed?: number;
  initial_labels?: number;
  gamma?: number;
  alpha?: number;
  embed_dim?: number;
  embed_source?: string;
  perplexity?: number;
  tsne_iters?: number;
  gate_oracle_labels?: boolean;
  async_compute?: boolean;
}

// Validation failures carry either a plain message (service-side config
// checks) or a FastAPI field list; both are kept for field mapping.
export class ApiError extends Error {
  readonly status: number;
  readonly detail: unknown;

  constructor(status: number, detail: unknown) {
    super(typeof detail === "string" ? detail : JSON.stringify(detail));
    this.name = "ApiError";
    this.status = status;
    this.detail = detail;
  }
}

async function parseError(res: Response): Promise<ApiError> {
  let detail: unknown = res.statusText;
  try {
    const body = await res.json();
    if (body && typeof body === "object" && "detail" in body) {
      detail = (body as { detail: unknown }).detail;
    }
  } catch {
    // non-JSON error body, keep the status text
  }
  return new ApiError(res.status, detail);
}

export class ServiceClient {
  readonly base: string;
  private readonly fetchFn: typeof fetch;

  constructor(base = "", fetchFn: typeof fetch = (...args) => fetch(...args)) {
    this.base = base.replace(/\/$/, "");
    this.fetchFn = fetchFn;
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const res = await this.fetchFn(this.base + path, init);
    if (!res.ok) {
      throw await parseError(res);
    }
    return (await res.json()) as T;
  }

  healthz(): Promise<{ status: string }> {
    return this.request("/healthz");
  }

  createSession(body: SessionRequest): Promise<SessionDescriptor> {
    return this.request("/sessions", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  queries(sessionId: string): Promise<QueriesResponse> {
    return this.request(`/sessions/${sessionId}/queries`);
  }

  submitLabels(sessionId: string, token: string, labels: LabelItem[]): Promise<SubmitResponse> {
    return this.request(`/sessions/${sessionId}/labels`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ token, labels }),
    });
  }

  metrics(sessionId: string): Promise<MetricsResponse> {
    return this.request(`/sessions/${sessionId}/metrics`);
  }
}
