/**
 * Session state machine.
 *
 * One in-flight message per session (matching the service contract). A
 * clarification turn is always followed by either the user's reply, which
 * resumes the pending question, or a cancellation when the user asks
 * something new instead.
 */
import type { ChatTurn, MessageReply } from "./types.js";

export interface SessionState {
  sessionId: string | null;
  subjectId: string | null;
  turns: ChatTurn[];
  pendingClarification: string | null;
  inFlight: boolean;
  offline: boolean;
}

export function initialState(): SessionState {
  return {
    sessionId: null,
    subjectId: null,
    turns: [],
    pendingClarification: null,
    inFlight: false,
    offline: false,
  };
}

export function sessionStarted(
  state: SessionState,
  sessionId: string,
  subjectId: string,
): SessionState {
  return { ...initialState(), sessionId, subjectId };
}

/**
 * Optimistically append the user's turn. Returns the next state plus
 * whether this message answers the pending clarification.
 */
export function beginMessage(
  state: SessionState,
  text: string,
  asClarificationReply: boolean,
): { state: SessionState; isClarificationReply: boolean } {
  if (state.inFlight) {
    throw new Error("a message is already in flight for this session");
  }
  const isReply = asClarificationReply && state.pendingClarification !== null;
  const turns = [...state.turns, { role: "user", text } as ChatTurn];
  return {
    state: {
      ...state,
      turns,
      inFlight: true,
      // a new, non-reply message cancels any pending clarification
      pendingClarification: isReply ? state.pendingClarification : null,
    },
    isClarificationReply: isReply,
  };
}

export function applyReply(state: SessionState, reply: MessageReply): SessionState {
  if (reply.type === "clarification") {
    const turn: ChatTurn = { role: "clarification", text: reply.question };
    return {
      ...state,
      turns: [...state.turns, turn],
      pendingClarification: reply.question,
      inFlight: false,
      offline: false,
    };
  }
  const turn: ChatTurn = {
    role: "agent",
    text: reply.response.text,
    citedPeriod: reply.response.cited_period,
    isRefusal: reply.response.is_refusal,
    trace: reply.trace,
  };
  return {
    ...state,
    turns: [...state.turns, turn],
    pendingClarification: null,
    inFlight: false,
    offline: false,
  };
}

export function failMessage(state: SessionState, offline: boolean): SessionState {
  return { ...state, inFlight: false, offline };
}

/** The most recent agent turn, if any (drives the privacy panel). */
export function lastAnswer(state: SessionState): ChatTurn | null {
  for (let i = state.turns.length - 1; i >= 0; i--) {
    if (state.turns[i].role === "agent") {
      return state.turns[i];
    }
  }
  return null;
}
