/** Wiring: DOM events -> api/state -> rendered HTML. */
import { ApiClient, assertLocalOnly } from "./api.js";
import { buildTrendChart } from "./chart.js";
import {
  applyReply,
  beginMessage,
  failMessage,
  initialState,
  sessionStarted,
  type SessionState,
} from "./state.js";
import { renderConversation, renderPrivacyPanel } from "./view.js";

const api = new ApiClient((url, init) => fetch(url, init));
let state: SessionState = initialState();

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function redraw(): void {
  el("conversation-root").innerHTML = renderConversation(state);
  el("privacy-root").innerHTML = renderPrivacyPanel(state, api.audit.urls);
  assertLocalOnly(api.audit);
  const input = el<HTMLInputElement>("message-input");
  input.placeholder = state.pendingClarification
    ? "answer the clarification question..."
    : "ask about your glucose data...";
  el<HTMLButtonElement>("send-button").disabled =
    state.inFlight || state.sessionId === null;
  const root = el("conversation-root");
  root.scrollTop = root.scrollHeight;
}

async function loadSubjects(): Promise<void> {
  const health = await api.health();
  const select = el<HTMLSelectElement>("subject-select");
  select.innerHTML = health.subjects
    .map((s) => `<option value="${s}">${s}</option>`)
    .join("");
  el("toolbar-note").textContent =
    `local service ok - ${health.tool_count} analysis tools registered`;
}

async function startSession(): Promise<void> {
  const subject = el<HTMLSelectElement>("subject-select").value;
  if (!subject) return;
  const sessionId = await api.createSession(subject);
  state = sessionStarted(state, sessionId, subject);
  redraw();
}

async function send(): Promise<void> {
  const input = el<HTMLInputElement>("message-input");
  const text = input.value.trim();
  const sessionId = state.sessionId;
  if (!text || state.inFlight || sessionId === null) return;
  const begun = beginMessage(state, text, state.pendingClarification !== null);
  state = begun.state;
  input.value = "";
  redraw();
  try {
    const reply = await api.sendMessage(
      sessionId,
      text,
      begun.isClarificationReply,
    );
    state = applyReply(state, reply);
  } catch {
    state = failMessage(state, true);
  }
  redraw();
}

async function loadTrend(): Promise<void> {
  if (!state.subjectId) return;
  const dates = el<HTMLInputElement>("trend-dates").value.trim();
  if (!dates) return;
  try {
    const profile = await api.trend(state.subjectId, dates, 30);
    el("trend-root").innerHTML = buildTrendChart(profile.bins);
  } catch {
    el("trend-root").innerHTML =
      `<p class="alert">could not load the trend for ${dates}</p>`;
  }
  redraw();
}

window.addEventListener("DOMContentLoaded", () => {
  void loadSubjects();
  el("start-button").addEventListener("click", () => void startSession());
  el("send-button").addEventListener("click", () => void send());
  el<HTMLInputElement>("message-input").addEventListener("keydown", (event) => {
    if ((event as KeyboardEvent).key === "Enter") void send();
  });
  el("trend-button").addEventListener("click", () => void loadTrend());
});
