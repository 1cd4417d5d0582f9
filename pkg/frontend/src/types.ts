/** Wire types mirroring the local service API, plus the chat turn model. */

export interface TraceSummary {
  tools: string[];
  latency_seconds: number;
  backend_calls: number;
  layer_latencies: Record<string, number>;
}

export interface AnswerReply {
  type: "answer";
  response: {
    text: string;
    cited_period: string | null;
    is_refusal: boolean;
  };
  trace: TraceSummary;
}

export interface ClarificationReply {
  type: "clarification";
  question: string;
}

export type MessageReply = AnswerReply | ClarificationReply;

export interface TrendBin {
  clock: string;
  mean: number;
  std: number;
  count: number;
}

export interface TrendProfile {
  subject_id: string;
  bin_minutes: number;
  bins: TrendBin[];
}

export interface HealthInfo {
  status: string;
  subjects: string[];
  tool_count: number;
}

export type TurnRole = "user" | "agent" | "clarification";

export interface ChatTurn {
  role: TurnRole;
  text: string;
  citedPeriod?: string | null;
  isRefusal?: boolean;
  trace?: TraceSummary;
  /** id of a trend chart attached to this turn, if any */
  trendRef?: string;
}
