import { AttemptView, ConnectionState, PlanSubtask, SessionResource, SessionSummary } from "./types.js";

/** Pure HTML renderers.  Everything on screen is a function of gateway
 * state; no renderer mutates anything.  Gate controls are emitted only in
 * their matching await states, so "disabled in the wrong state" holds by
 * construction. */

export const ANCHORS = [
  "upper-left", "upper-center", "upper-right",
  "center-left", "center", "center-right",
  "lower-left", "lower-center", "lower-right",
] as const;

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function stateBadge(stateLabel: string): string {
  const state = stateLabel.split(":")[0] ?? stateLabel;
  const tone =
    state === "done" ? "ok" :
    state === "failed" ? "bad" :
    state.startsWith("await") ? "gate" : "busy";
  return `<span class="badge badge-${tone}" data-state="${escapeHtml(state)}">${escapeHtml(stateLabel)}</span>`;
}

export function renderConnection(state: ConnectionState, detail = ""): string {
  if (state === "open") return "";
  const text = state === "retrying" ? `stream lost, retrying… ${escapeHtml(detail)}` : state;
  return `<div class="banner banner-${state}" role="status">${text}</div>`;
}

export function renderBoard(summaries: SessionSummary[], selectedId: string | null): string {
  if (summaries.length === 0) {
    return `<div class="empty-state">No sessions yet. Create one above to get started.</div>`;
  }
  const rows = summaries
    .map((s) => {
      const selected = s.id === selectedId ? " selected" : "";
      return (
        `<li class="session-row${selected}" data-action="select-session" data-id="${escapeHtml(s.id)}">` +
        `<code>${escapeHtml(s.id)}</code> ${stateBadge(s.state_label)}` +
        `<span class="meta">rev ${s.revision} · ${s.events} events</span></li>`
      );
    })
    .join("");
  return `<ul class="session-board">${rows}</ul>`;
}

function constraintSummary(subtask: PlanSubtask): string {
  const c = subtask.constraints as Record<string, unknown>;
  if (subtask.kind === "element") {
    const color = (c.color as number[]) ?? [0, 0, 0];
    return `${c.kind} · rgb(${color.join(",")}) · size ${c.size} · at (${(c.position as number[]).join(", ")})`;
  }
  if (subtask.kind === "background") return `style ${c.style}`;
  return "draw order";
}

function colorHex(rgb: number[]): string {
  return "#" + rgb.map((v) => v.toString(16).padStart(2, "0")).join("").toUpperCase();
}

/** Editable decomposition table; rendered only at the plan-approval gate. */
export function renderPlanGate(resource: SessionResource): string {
  const editable = resource.state === "await_plan_approval";
  const rows = resource.plan.subtasks
    .map((st) => {
      const c = st.constraints as Record<string, unknown>;
      if (st.kind !== "element" || !editable) {
        return (
          `<tr data-subtask="${escapeHtml(st.id)}"><td><code>${escapeHtml(st.id)}</code></td>` +
          `<td>${st.kind}</td><td colspan="3">${escapeHtml(constraintSummary(st))}</td></tr>`
        );
      }
      const color = colorHex(c.color as number[]);
      const size = c.size as number;
      const anchors = ANCHORS.map(
        (a) => `<option value="${a}">${a}</option>`,
      ).join("");
      return (
        `<tr data-subtask="${escapeHtml(st.id)}"><td><code>${escapeHtml(st.id)}</code></td>` +
        `<td>${escapeHtml(String(c.kind))}</td>` +
        `<td><input type="color" data-field="color" value="${color}"></td>` +
        `<td><input type="range" data-field="size" min="0.05" max="1" step="0.01" value="${size}">` +
        `<span class="size-label">${size}</span></td>` +
        `<td><select data-field="position"><option value="">(keep)</option>${anchors}</select></td></tr>`
      );
    })
    .join("");
  const controls = editable
    ? `<div class="gate-controls">
         <button data-action="save-plan">Save edits</button>
         <button data-action="approve-plan" class="primary">Approve plan</button>
       </div>`
    : "";
  return (
    `<section class="plan-gate" data-editable="${editable}">` +
    `<h3>Plan <span class="meta">revision ${resource.plan.revision}</span></h3>` +
    `<table><thead><tr><th>subtask</th><th>kind</th><th>color</th><th>size</th><th>anchor</th></tr></thead>` +
    `<tbody>${rows}</tbody></table>${controls}</section>`
  );
}

function attemptCard(attempt: AttemptView, acceptedNumber: number | undefined, tau: number): string {
  const score = attempt.score ? attempt.score.value : null;
  const chosen = attempt.number === acceptedNumber ? " chosen" : "";
  const verdict = score === null ? "" : score >= tau ? "pass" : "fail";
  return (
    `<div class="attempt${chosen}" data-attempt="${attempt.number}">` +
    `<span>#${attempt.number}</span>` +
    `<span class="score score-${verdict}">${score === null ? "…" : score.toFixed(3)}</span></div>`
  );
}

/** Attempt gallery plus override actions; actions only while awaiting. */
export function renderReviewGate(resource: SessionResource): string {
  const awaiting = resource.state === "await_review_decision" && resource.current !== null;
  const tau = Number(resource.config.tau ?? 0.7);
  const sections = Object.entries(resource.attempts)
    .map(([sid, attempts]) => {
      const cards = attempts.map((a) => attemptCard(a, resource.accepted[sid], tau)).join("");
      const live = awaiting && sid === resource.current ? " live" : "";
      return `<div class="subtask-gallery${live}" data-subtask="${escapeHtml(sid)}">` +
        `<h4><code>${escapeHtml(sid)}</code> vs τ=${tau}</h4><div class="attempts">${cards}</div></div>`;
    })
    .join("");
  const controls = awaiting
    ? `<div class="gate-controls">
         <button data-action="override-accept" class="primary">Accept best</button>
         <button data-action="override-retry">Retry</button>
       </div>`
    : "";
  return `<section class="review-gate" data-awaiting="${awaiting}">` +
    `<h3>Attempts</h3>${sections || '<div class="empty-state">none yet</div>'}${controls}</section>`;
}

export function renderArtifact(resource: SessionResource, artifactUrl: string): string {
  if (resource.state !== "done") return "";
  return (
    `<section class="artifact"><h3>Artifact</h3>` +
    `<img alt="final artifact" src="${escapeHtml(artifactUrl)}">` +
    `<dl><dt>payload</dt><dd><code>${escapeHtml(resource.payload_hex ?? "")}</code></dd>` +
    `<dt>PSNR</dt><dd>${resource.psnr?.toFixed(2)} dB</dd></dl></section>`
  );
}

export function renderLedgerSummary(resource: SessionResource, ledgerUrl: string): string {
  const last = resource.events[resource.events.length - 1];
  return (
    `<section class="ledger"><h3>Provenance</h3>` +
    `<span class="meta">${last ? last.ledger_to : 0} records</span> ` +
    `<a href="${escapeHtml(ledgerUrl)}" download="${escapeHtml(resource.id)}.provlog">download .provlog</a>` +
    `</section>`
  );
}

export function renderEventLog(resource: SessionResource): string {
  const items = resource.events
    .slice(-12)
    .map(
      (ev) =>
        `<li><span class="meta">#${ev.seq}</span> ${escapeHtml(ev.state_before)} → ` +
        `${escapeHtml(ev.state_after)} <em>${escapeHtml(ev.summary)}</em></li>`,
    )
    .join("");
  return `<section class="events"><h3>Events</h3><ol>${items}</ol></section>`;
}

export function renderSessionDetail(resource: SessionResource, artifactUrl: string, ledgerUrl: string): string {
  const stepper =
    resource.state === "done" || resource.state === "failed"
      ? ""
      : `<button data-action="step" ${resource.state.startsWith("await") ? "disabled" : ""}>Step</button>
         <button data-action="run">Run to gate</button>
         <button data-action="abort" class="danger">Abort</button>`;
  return (
    `<article class="session-detail" data-id="${escapeHtml(resource.id)}">` +
    `<header><h2><code>${escapeHtml(resource.id)}</code> ${stateBadge(resource.state_label)}</h2>` +
    `<p class="prompt">${escapeHtml(resource.prompt)}</p>${stepper}</header>` +
    renderPlanGate(resource) +
    renderReviewGate(resource) +
    renderArtifact(resource, artifactUrl) +
    renderLedgerSummary(resource, ledgerUrl) +
    renderEventLog(resource) +
    `</article>`
  );
}
