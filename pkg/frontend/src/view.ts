/**
 * Pure HTML renderers for the chat view and privacy panel.
 *
 * Agent answers always surface the analyzed period as a badge so users can
 * check the interpretation against their intent; refusals get distinct
 * styling; a pending clarification renders inline above the reply box.
 */
import type { ChatTurn } from "./types.js";
import type { SessionState } from "./state.js";
import { lastAnswer } from "./state.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function renderTurn(turn: ChatTurn): string {
  if (turn.role === "user") {
    return `<div class="turn user"><p>${escapeHtml(turn.text)}</p></div>`;
  }
  if (turn.role === "clarification") {
    return (
      `<div class="turn clarification">` +
      `<span class="tag">needs one detail</span>` +
      `<p>${escapeHtml(turn.text)}</p>` +
      `<p class="hint">reply below to continue</p></div>`
    );
  }
  const classes = turn.isRefusal ? "turn agent refusal" : "turn agent";
  const badge = turn.citedPeriod
    ? `<span class="badge period" title="period analyzed">${escapeHtml(turn.citedPeriod)}</span>`
    : "";
  const refusalTag = turn.isRefusal
    ? `<span class="tag refusal-tag">not answerable from CGM data</span>`
    : "";
  const chart = turn.trendRef
    ? `<div class="turn-chart" data-trend-ref="${escapeHtml(turn.trendRef)}"></div>`
    : "";
  return (
    `<div class="${classes}">${refusalTag}${badge}` +
    `<p>${escapeHtml(turn.text)}</p>${chart}</div>`
  );
}

export function renderConversation(state: SessionState): string {
  const turns = state.turns.map(renderTurn).join("");
  const pending = state.pendingClarification
    ? `<div class="pending-note">awaiting your reply to the question above</div>`
    : "";
  const offline = state.offline
    ? `<div class="banner offline">local service unreachable; retry when it is back</div>`
    : "";
  return `${offline}<div class="conversation">${turns}</div>${pending}`;
}

/**
 * Provenance for the latest answer: which tools ran locally, and that
 * nothing but function calls and aggregates left the device.
 */
export function renderPrivacyPanel(
  state: SessionState,
  auditedUrls: string[],
): string {
  const answer = lastAnswer(state);
  const external = auditedUrls.filter((u) => !u.startsWith("/api/"));
  const networkLine =
    external.length === 0
      ? `<p class="ok">all ${auditedUrls.length} requests stayed on the local service API</p>`
      : `<p class="alert">non-local requests detected: ${escapeHtml(external.join(", "))}</p>`;
  if (answer === null) {
    return `<div class="privacy-panel"><h3>privacy</h3>${networkLine}<p>no answers yet</p></div>`;
  }
  const tools = answer.trace?.tools ?? [];
  const rows =
    tools.length === 0
      ? `<li class="none">no tools executed (query refused before analysis)</li>`
      : tools.map((t) => `<li><code>${escapeHtml(t)}</code></li>`).join("");
  return (
    `<div class="privacy-panel"><h3>privacy</h3>` +
    `${networkLine}` +
    `<p>tool calls behind the latest answer (raw readings stayed local):</p>` +
    `<ul class="tool-list">${rows}</ul></div>`
  );
}
