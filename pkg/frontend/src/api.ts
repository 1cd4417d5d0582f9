/**
 * Local-service API client with a built-in request audit.
 *
 * Every request is recorded, and only same-origin "/api/..." paths are
 * allowed through: the client physically cannot reach a third-party host,
 * which the audit makes checkable in tests and visible in the privacy
 * panel.
 */
import type { HealthInfo, MessageReply, TrendProfile } from "./types.js";

export type FetchLike = (
  url: string,
  init?: { method?: string; headers?: Record<string, string>; body?: string },
) => Promise<{ ok: boolean; status: number; json(): Promise<unknown> }>;

export class RequestAudit {
  readonly urls: string[] = [];

  record(url: string): void {
    this.urls.push(url);
  }
}

export class ExternalRequestError extends Error {
  constructor(url: string) {
    super(`blocked non-local request: ${url}`);
  }
}

const LOCAL_PREFIX = "/api/";

export function isLocalApiPath(url: string): boolean {
  return url.startsWith(LOCAL_PREFIX);
}

/** Throws unless every audited request stayed on the local service API. */
export function assertLocalOnly(audit: RequestAudit): void {
  const offenders = audit.urls.filter((u) => !isLocalApiPath(u));
  if (offenders.length > 0) {
    throw new ExternalRequestError(offenders[0]);
  }
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
  }
}

export class ApiClient {
  constructor(
    private readonly fetchFn: FetchLike,
    readonly audit: RequestAudit = new RequestAudit(),
  ) {}

  private async request<T>(path: string, init?: Parameters<FetchLike>[1]): Promise<T> {
    if (!isLocalApiPath(path)) {
      throw new ExternalRequestError(path);
    }
    this.audit.record(path);
    const response = await this.fetchFn(path, init);
    if (!response.ok) {
      throw new ApiError(response.status, `${path} -> ${response.status}`);
    }
    return (await response.json()) as T;
  }

  health(): Promise<HealthInfo> {
    return this.request<HealthInfo>("/api/health");
  }

  async createSession(subjectId: string): Promise<string> {
    const body = await this.request<{ session_id: string }>("/api/sessions", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ subject_id: subjectId }),
    });
    return body.session_id;
  }

  sendMessage(
    sessionId: string,
    text: string,
    clarification: boolean,
  ): Promise<MessageReply> {
    return this.request<MessageReply>(`/api/sessions/${sessionId}/message`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ text, clarification }),
    });
  }

  trend(subjectId: string, dates: string, binMinutes: number): Promise<TrendProfile> {
    const params = new URLSearchParams({ dates, bin: String(binMinutes) });
    return this.request<TrendProfile>(
      `/api/subjects/${subjectId}/trend?${params.toString()}`,
    );
  }
}
