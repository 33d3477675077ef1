import { describe, expect, it } from "vitest";

import { ApiClient, ServiceError } from "../src/api.js";
import { FakeService } from "./fake_service.js";

function capturingFetch(status: number, body: unknown) {
  const calls: { url: string; init?: RequestInit }[] = [];
  const fetchFn = (url: string, init?: RequestInit) => {
    calls.push({ url, init });
    return Promise.resolve(
      new Response(JSON.stringify(body), {
        status,
        headers: { "Content-Type": "application/json" },
      }),
    );
  };
  return { calls, fetchFn };
}

describe("ApiClient", () => {
  it("posts classify without auth header and parses the verdict", async () => {
    const { calls, fetchFn } = capturingFetch(200, {
      label: "safe",
      unsafe_probability: 0.2,
      citations: [],
      classifier_id: "x",
      library_version: 3,
      shortfall: false,
      references: [],
    });
    const client = new ApiClient("http://svc/", "secret", fetchFn);
    const verdict = await client.classify("hello");
    expect(verdict.library_version).toBe(3);
    expect(calls[0].url).toBe("http://svc/classify");
    expect(calls[0].init?.method).toBe("POST");
    expect(JSON.parse(calls[0].init?.body as string)).toEqual({ prompt: "hello" });
    const headers = calls[0].init?.headers as Record<string, string>;
    expect(headers["Authorization"]).toBeUndefined();
  });

  it("sends the bearer token on mutations only", async () => {
    const { calls, fetchFn } = capturingFetch(201, { id: "e1", library_version: 2 });
    const client = new ApiClient("http://svc", "secret", fetchFn);
    await client.addEntry("p", "unsafe", "why");
    const headers = calls[0].init?.headers as Record<string, string>;
    expect(headers["Authorization"]).toBe("Bearer secret");
    expect(JSON.parse(calls[0].init?.body as string)).toEqual({
      prompt: "p",
      label: "unsafe",
      explanation: "why",
    });
  });

  it("surfaces service errors with code and status", async () => {
    const { fetchFn } = capturingFetch(401, { code: "unauthorized", message: "token required" });
    const client = new ApiClient("http://svc", null, fetchFn);
    const err = await client.flipEntry("e9").catch((e) => e);
    expect(err).toBeInstanceOf(ServiceError);
    expect(err.status).toBe(401);
    expect(err.code).toBe("unauthorized");
    expect(err.message).toBe("token required");
  });

  it("handles non-JSON error bodies", async () => {
    const fetchFn = () => Promise.resolve(new Response("boom", { status: 500 }));
    const client = new ApiClient("http://svc", null, fetchFn);
    const err = await client.stats().catch((e) => e);
    expect(err).toBeInstanceOf(ServiceError);
    expect(err.code).toBe("unknown");
  });

  it("passes the since parameter to the mutation feed", async () => {
    const { calls, fetchFn } = capturingFetch(200, []);
    const client = new ApiClient("http://svc", null, fetchFn);
    await client.mutations(41);
    expect(calls[0].url).toBe("http://svc/library/mutations?since=41");
  });

  it("speaks the full contract against the fake service", async () => {
    const fake = new FakeService("tok");
    const client = new ApiClient("http://svc", "tok", fake.fetch);
    const stats = await client.stats();
    expect(stats.safe_count + stats.unsafe_count).toBe(4);
    const verdict = await client.classify("violent alley brawl");
    expect(verdict.label).toBe("unsafe");
    expect(verdict.references).toHaveLength(4);
    const ack = await client.addEntry("fresh threat", "unsafe");
    expect(ack.library_version).toBe(stats.version + 1);
    const feed = await client.mutations();
    expect(feed).toHaveLength(1);
    expect(feed[0].kind).toBe("add");
  });
});
