import { GatewayClient } from "./api.js";
import { GateController } from "./controller.js";
import { SessionStore } from "./store.js";
import { PlanEditRequest } from "./types.js";
import {
  renderBoard,
  renderConnection,
  renderSessionDetail,
} from "./view.js";

/** Browser shell: render from store state, translate DOM events into
 * controller calls.  No optimistic updates: the screen changes only after
 * the gateway confirms (via response refresh or the event stream). */

const params = new URLSearchParams(window.location.search);
const gatewayUrl = params.get("gw") ?? "http://127.0.0.1:8787";

const client = new GatewayClient(gatewayUrl);
const store = new SessionStore(client);
const controller = new GateController(client, store);

let selectedId: string | null = null;

const boardEl = document.getElementById("board")!;
const detailEl = document.getElementById("detail")!;
const bannerEl = document.getElementById("banner")!;

function render(): void {
  bannerEl.innerHTML = renderConnection(store.connection, store.connectionDetail);
  boardEl.innerHTML = renderBoard(store.summaries, selectedId);
  const resource = selectedId ? store.resources.get(selectedId) : undefined;
  detailEl.innerHTML = resource
    ? renderSessionDetail(resource, client.artifactUrl(resource.id), `${gatewayUrl}/sessions/${resource.id}/ledger`)
    : `<div class="empty-state">Select a session.</div>`;
}

store.subscribe(render);

function collectPlanEdits(): PlanEditRequest[] {
  const edits: PlanEditRequest[] = [];
  detailEl.querySelectorAll<HTMLTableRowElement>(".plan-gate tr[data-subtask]").forEach((row) => {
    const target = row.dataset.subtask!;
    const payload: Record<string, unknown> = {};
    const color = row.querySelector<HTMLInputElement>('input[data-field="color"]');
    if (color && color.value && color.value !== color.defaultValue) payload.color = color.value;
    const size = row.querySelector<HTMLInputElement>('input[data-field="size"]');
    if (size && size.value !== size.defaultValue) payload.size = Number(size.value);
    const anchor = row.querySelector<HTMLSelectElement>('select[data-field="position"]');
    if (anchor && anchor.value) payload.position = anchor.value;
    if (Object.keys(payload).length > 0) {
      edits.push({ op: "set_attribute", target, payload });
    }
  });
  return edits;
}

async function dispatch(action: string, element: HTMLElement): Promise<void> {
  switch (action) {
    case "select-session": {
      selectedId = element.dataset.id ?? null;
      if (selectedId) {
        await store.refreshSession(selectedId);
        store.watch(selectedId);
      }
      render();
      break;
    }
    case "create-session": {
      const prompt = (document.getElementById("prompt") as HTMLInputElement).value.trim();
      const mode = (document.getElementById("mode") as HTMLSelectElement).value;
      if (!prompt) return;
      const resource = await controller.createSession(prompt, { mode, eta: 0.3 });
      selectedId = resource.id;
      await store.refreshBoard();
      break;
    }
    case "save-plan":
      if (selectedId) await controller.savePlanEdits(selectedId, collectPlanEdits());
      break;
    case "approve-plan":
      if (selectedId) await controller.approvePlan(selectedId);
      break;
    case "override-accept":
      if (selectedId) await controller.overrideReview(selectedId, "accept");
      break;
    case "override-retry":
      if (selectedId) await controller.overrideReview(selectedId, "retry");
      break;
    case "step":
      if (selectedId) await controller.step(selectedId);
      break;
    case "run":
      if (selectedId) await controller.runToGate(selectedId);
      break;
    case "abort":
      if (selectedId) await controller.abort(selectedId);
      break;
  }
}

document.addEventListener("click", (raw) => {
  const target = (raw.target as HTMLElement).closest<HTMLElement>("[data-action]");
  if (!target) return;
  const action = target.dataset.action!;
  void dispatch(action, target).catch((err) => {
    bannerEl.innerHTML = `<div class="banner banner-error" role="alert">${String(err)}</div>`;
  });
});

document.addEventListener("input", (raw) => {
  // Live size label next to the slider.
  const input = raw.target as HTMLInputElement;
  if (input.dataset?.field === "size") {
    const label = input.parentElement?.querySelector(".size-label");
    if (label) label.textContent = input.value;
  }
});

void (async () => {
  try {
    await client.health();
    await store.refreshBoard();
  } catch (err) {
    bannerEl.innerHTML = `<div class="banner banner-error" role="alert">gateway unreachable at ${gatewayUrl}: ${String(err)}</div>`;
  }
  render();
})();
