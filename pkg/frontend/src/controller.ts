// Session lifecycle and the submission queue. One idempotency token is
// drawn per proposed batch and reused across every retry of that batch,
// so a replayed or double-clicked submit can never label twice.

import { ApiError, ServiceClient } from "./api.js";
import type { LabelItem, MetricsResponse, SessionRequest, SubmitResponse } from "./api.js";
import {
  buildCards,
  buildMetricsPanel,
  fieldErrorsFrom,
  initialViewModel,
  sessionSummary,
  submitEnabled,
} from "./viewmodel.js";
import type { Answer, ConsoleViewModel } from "./viewmodel.js";

export const SESSION_STORAGE_KEY = "rals-console-session";

export interface ControllerOptions {
  storage?: Pick<Storage, "getItem" | "setItem" | "removeItem">;
  sleep?: (ms: number) => Promise<void>;
  newToken?: () => string;
  maxSubmitAttempts?: number;
  pollIntervalMs?: number;
}

const defaultSleep = (ms: number) => new Promise<void>((resolve) => setTimeout(resolve, ms));

function defaultToken(): string {
  if (typeof crypto !== "undefined" && "randomUUID" in crypto) {
    return crypto.randomUUID();
  }
  return `tok-${Date.now()}-${Math.random().toString(16).slice(2)}`;
}

export class ConsoleController {
  vm: ConsoleViewModel;
  readonly client: ServiceClient;
  private readonly storage: ControllerOptions["storage"];
  private readonly sleep: (ms: number) => Promise<void>;
  private readonly newToken: () => string;
  private readonly maxSubmitAttempts: number;
  private readonly pollIntervalMs: number;
  private listeners: Array<(vm: ConsoleViewModel) => void> = [];
  private batchToken: string | null = null;
  private inflight = false;

  constructor(client: ServiceClient, options: ControllerOptions = {}) {
    this.client = client;
    this.vm = initialViewModel();
    this.storage = options.storage;
    this.sleep = options.sleep ?? defaultSleep;
    this.newToken = options.newToken ?? defaultToken;
    this.maxSubmitAttempts = options.maxSubmitAttempts ?? 20;
    this.pollIntervalMs = options.pollIntervalMs ?? 500;
  }

  onChange(listener: (vm: ConsoleViewModel) => void): void {
    this.listeners.push(listener);
  }

  private update(patch: Partial<ConsoleViewModel>): void {
    this.vm = { ...this.vm, ...patch };
    for (const listener of this.listeners) {
      listener(this.vm);
    }
  }

  get lastBatchToken(): string | null {
    return this.batchToken;
  }

  // Start a session from the config form. Field-level validation errors
  // land next to the input that caused them; the form stays up.
  async startSession(request: SessionRequest): Promise<void> {
    this.update({ banner: null, fieldErrors: {} });
    let descriptor;
    try {
      descriptor = await this.client.createSession(request);
    } catch (err) {
      if (err instanceof ApiError) {
        const fieldErrors = fieldErrorsFrom(err.detail);
        const banner = Object.keys(fieldErrors).length > 0 ? null : `session rejected: ${err.message}`;
        this.update({ fieldErrors, banner });
        return;
      }
      this.update({ banner: "service unreachable, check that it is running" });
      return;
    }
    const session = sessionSummary(descriptor);
    this.storage?.setItem(SESSION_STORAGE_KEY, session.sessionId);
    this.update({ session, phase: "computing", cards: [] });
    if (descriptor.status === "awaiting-labels") {
      await this.loadQueries();
    } else {
      await this.finish();
    }
    await this.refreshMetrics();
  }

  // A page reload re-enters the running session from storage: metrics give
  // the status, and the frozen batch is re-read as served.
  async restore(): Promise<boolean> {
    const sessionId = this.storage?.getItem(SESSION_STORAGE_KEY);
    if (!sessionId) {
      return false;
    }
    let metrics: MetricsResponse;
    try {
      metrics = await this.client.metrics(sessionId);
    } catch {
      this.storage?.removeItem(SESSION_STORAGE_KEY);
      return false;
    }
    this.update({
      session: {
        sessionId,
        labeledCount: metrics.labeled_count,
        budget: metrics.budget,
        batchSize: 0,
        nClasses: metrics.metrics?.per_class.length ?? 0,
        classNames: (metrics.metrics?.per_class ?? []).map((m) => `class ${m.class_id}`),
      },
      phase: "computing",
    });
    if (metrics.status === "awaiting-labels") {
      await this.loadQueries();
    } else if (metrics.status === "computing") {
      await this.pollWhileComputing();
    } else {
      await this.finish();
    }
    await this.refreshMetrics();
    return true;
  }

  answer(index: number, answer: Answer): void {
    if (this.vm.phase !== "awaiting-labels" || this.vm.submitting) {
      return;
    }
    const cards = this.vm.cards.map((c) => (c.index === index ? { ...c, answer } : c));
    this.update({ cards });
  }

  // Submit the answered batch. Re-entry while a submit is in flight is a
  // no-op, and network failures requeue the same token until the service
  // acknowledges it.
  async submitBatch(): Promise<void> {
    if (this.inflight || !submitEnabled(this.vm)) {
      return;
    }
    const session = this.vm.session;
    const token = this.batchToken;
    if (!session || !token) {
      return;
    }
    const labels: LabelItem[] = this.vm.cards.map((c) => ({
      index: c.index,
      label: c.answer === "abstain" ? null : (c.answer as number),
    }));
    this.inflight = true;
    this.update({ submitting: true, phase: "computing", banner: null });
    try {
      let attempt = 0;
      for (;;) {
        try {
          const response = await this.client.submitLabels(session.sessionId, token, labels);
          await this.afterSubmit(response);
          return;
        } catch (err) {
          if (err instanceof ApiError) {
            await this.handleSubmitRejection(err);
            return;
          }
          attempt += 1;
          if (attempt >= this.maxSubmitAttempts) {
            this.update({
              submitting: false,
              phase: "awaiting-labels",
              banner: "submission failed after repeated attempts, labels kept locally",
            });
            return;
          }
          this.update({
            banner: `connection lost, resubmitting batch (attempt ${attempt + 1})`,
          });
          await this.sleep(Math.min(250 * 2 ** (attempt - 1), 4000));
        }
      }
    } finally {
      this.inflight = false;
    }
  }

  private async handleSubmitRejection(err: ApiError): Promise<void> {
    if (err.status === 409) {
      // Another submission already advanced the session; resync.
      await this.resync();
      return;
    }
    this.update({
      submitting: false,
      phase: "awaiting-labels",
      banner: `submission rejected: ${err.message}`,
    });
  }

  private async afterSubmit(response: SubmitResponse): Promise<void> {
    if (response.error) {
      this.update({ submitting: false, phase: "failed", banner: response.error });
      return;
    }
    let status = response.status;
    if (status === "computing") {
      status = await this.pollWhileComputing();
    }
    if (status === "awaiting-labels") {
      await this.loadQueries();
    } else {
      await this.finish();
    }
    await this.refreshMetrics();
  }

  private async pollWhileComputing(): Promise<string> {
    const session = this.vm.session;
    if (!session) {
      return "failed";
    }
    for (;;) {
      const metrics = await this.client.metrics(session.sessionId);
      if (metrics.status !== "computing") {
        if (metrics.error) {
          this.update({ submitting: false, phase: "failed", banner: metrics.error });
        }
        return metrics.status;
      }
      await this.sleep(this.pollIntervalMs);
    }
  }

  private async resync(): Promise<void> {
    const session = this.vm.session;
    if (!session) {
      return;
    }
    const metrics = await this.client.metrics(session.sessionId);
    if (metrics.status === "awaiting-labels") {
      await this.loadQueries();
    } else if (metrics.status === "finished") {
      await this.finish();
    }
    await this.refreshMetrics();
  }

  private async loadQueries(): Promise<void> {
    const session = this.vm.session;
    if (!session) {
      return;
    }
    const response = await this.client.queries(session.sessionId);
    this.batchToken = this.newToken();
    this.update({
      cards: buildCards(response.queries, session.classNames),
      phase: "awaiting-labels",
      submitting: false,
    });
  }

  private async finish(): Promise<void> {
    this.update({ cards: [], phase: "finished", submitting: false });
  }

  async refreshMetrics(): Promise<void> {
    const session = this.vm.session;
    if (!session) {
      return;
    }
    const metrics = await this.client.metrics(session.sessionId);
    this.update({
      history: metrics,
      metrics: buildMetricsPanel(metrics, session.classNames),
      session: { ...session, labeledCount: metrics.labeled_count },
    });
  }

  reset(): void {
    this.storage?.removeItem(SESSION_STORAGE_KEY);
    this.batchToken = null;
    this.update(initialViewModel());
  }
}
