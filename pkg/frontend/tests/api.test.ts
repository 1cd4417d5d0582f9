import { describe, expect, it } from "vitest";

import {
  ApiClient,
  ApiError,
  ExternalRequestError,
  RequestAudit,
  assertLocalOnly,
  type FetchLike,
} from "../src/api.js";

function fakeFetch(
  routes: Record<string, unknown>,
  calls: { url: string; body?: string }[] = [],
): FetchLike {
  return async (url, init) => {
    calls.push({ url, body: init?.body });
    if (url in routes) {
      return { ok: true, status: 200, json: async () => routes[url] };
    }
    return { ok: false, status: 404, json: async () => ({}) };
  };
}

describe("api client", () => {
  it("audits every request it makes", async () => {
    const client = new ApiClient(
      fakeFetch({ "/api/health": { status: "ok", subjects: ["P1"], tool_count: 14 } }),
    );
    await client.health();
    expect(client.audit.urls).toEqual(["/api/health"]);
    assertLocalOnly(client.audit); // does not throw
  });

  it("refuses to call anything outside the local api", async () => {
    const calls: { url: string }[] = [];
    const client = new ApiClient(fakeFetch({}, calls));
    await expect(
      // @ts-expect-error exercising the runtime guard with a raw path
      client["request"]("https://third-party.example.com/x"),
    ).rejects.toBeInstanceOf(ExternalRequestError);
    expect(calls).toHaveLength(0); // blocked before any network activity
  });

  it("flags audits containing an external url", () => {
    const audit = new RequestAudit();
    audit.record("/api/health");
    audit.record("https://tracker.example.com/beacon");
    expect(() => assertLocalOnly(audit)).toThrow(ExternalRequestError);
  });

  it("sends the clarification flag on message posts", async () => {
    const calls: { url: string; body?: string }[] = [];
    const client = new ApiClient(
      fakeFetch(
        {
          "/api/sessions/s1/message": {
            type: "answer",
            response: { text: "ok", cited_period: null, is_refusal: false },
            trace: { tools: [], latency_seconds: 0, backend_calls: 1, layer_latencies: {} },
          },
        },
        calls,
      ),
    );
    await client.sendMessage("s1", "4 AM to 6 AM", true);
    expect(JSON.parse(calls[0].body ?? "{}")).toEqual({
      text: "4 AM to 6 AM",
      clarification: true,
    });
  });

  it("raises ApiError with the status on failures", async () => {
    const client = new ApiClient(fakeFetch({}));
    await expect(client.health()).rejects.toBeInstanceOf(ApiError);
    await expect(client.health()).rejects.toMatchObject({ status: 404 });
  });

  it("builds trend query parameters", async () => {
    const calls: { url: string }[] = [];
    const routes = {
      "/api/subjects/P1/trend?dates=2024-01-01%3A2024-01-07&bin=30": {
        subject_id: "P1",
        bin_minutes: 30,
        bins: [],
      },
    };
    const client = new ApiClient(fakeFetch(routes, calls));
    const profile = await client.trend("P1", "2024-01-01:2024-01-07", 30);
    expect(profile.bin_minutes).toBe(30);
    expect(calls[0].url).toContain("/api/subjects/P1/trend");
  });
});
