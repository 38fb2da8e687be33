// Console bootstrap: builds the controller, renders on every state change
// and wires all interaction through one delegated listener so re-renders
// never drop handlers.

import { ServiceClient } from "./api.js";
import type { SessionRequest } from "./api.js";
import { ConsoleController } from "./controller.js";
import { render } from "./render.js";

const NUMBER_FIELDS = [
  "batch_size",
  "budget",
  "initial_labels",
  "seed",
  "delta",
  "gamma",
  "alpha",
  "embed_dim",
  "perplexity",
  "tsne_iters",
] as const;

const INTEGER_FIELDS = new Set([
  "batch_size",
  "budget",
  "initial_labels",
  "seed",
  "embed_dim",
  "tsne_iters",
]);

// Blank inputs are omitted so the service applies its own defaults.
export function collectSessionRequest(root: ParentNode): SessionRequest {
  const request: SessionRequest = {};
  for (const name of NUMBER_FIELDS) {
    const input = root.querySelector<HTMLInputElement>(`#field-${name}`);
    const raw = input?.value.trim();
    if (!raw) {
      continue;
    }
    const value = INTEGER_FIELDS.has(name) ? parseInt(raw, 10) : parseFloat(raw);
    if (!Number.isNaN(value)) {
      (request as Record<string, number>)[name] = value;
    }
  }
  const source = root.querySelector<HTMLSelectElement>("#field-embed_source");
  if (source && source.value) {
    request.embed_source = source.value;
  }
  const gate = root.querySelector<HTMLInputElement>("#field-gate_oracle_labels");
  if (gate?.checked) {
    request.gate_oracle_labels = true;
  }
  return request;
}

export function bootstrap(root: HTMLElement, base = ""): ConsoleController {
  const controller = new ConsoleController(new ServiceClient(base), {
    storage: typeof localStorage !== "undefined" ? localStorage : undefined,
  });
  controller.onChange((vm) => render(vm, root));
  render(controller.vm, root);

  root.addEventListener("click", (event) => {
    const target = (event.target as HTMLElement).closest<HTMLElement>("[data-action]");
    if (!target) {
      return;
    }
    const action = target.dataset.action;
    if (action === "start") {
      event.preventDefault();
      void controller.startSession(collectSessionRequest(root));
    } else if (action === "label") {
      controller.answer(Number(target.dataset.index), Number(target.dataset.label));
    } else if (action === "abstain") {
      controller.answer(Number(target.dataset.index), "abstain");
    } else if (action === "submit") {
      void controller.submitBatch();
    } else if (action === "new-session") {
      controller.reset();
    }
    // the download anchor keeps its default behavior
  });

  // submitting the form with the keyboard goes through the same path
  root.addEventListener("submit", (event) => {
    event.preventDefault();
    void controller.startSession(collectSessionRequest(root));
  });

  void controller.restore();
  return controller;
}

// Auto-start when loaded as the page module; tests call bootstrap directly.
if (typeof document !== "undefined") {
  const root = document.getElementById("console-root");
  if (root) {
    bootstrap(root);
  }
}
