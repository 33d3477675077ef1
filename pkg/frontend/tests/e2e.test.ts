/**
 * End-to-end: the console session driving the real Python service over
 * HTTP, with its deterministic kNN-vote classifier and a seeded library.
 */

import { spawn, ChildProcess } from "node:child_process";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient, ServiceError } from "../src/api.js";
import { ConsoleSession } from "../src/session.js";

const PORT = Number(process.env.RAGMOD_E2E_PORT ?? 8971);
const BASE = `http://127.0.0.1:${PORT}`;
const TOKEN = "e2e-token";

const SERVER_SCRIPT = `
import uvicorn
from ragmod.classifier import ClassifierSpec
from ragmod.embedding import EmbedderSpec, embed
from ragmod.service import ServiceConfig, build_service
from ragmod.store import LibraryEntry, SafetyLabel

config = ServiceConfig(embedder=EmbedderSpec(dim=64), classifier=ClassifierSpec(), token="${TOKEN}")
service, app = build_service(config)
spec = service.store.manifest.embedder
for i in range(12):
    label = SafetyLabel.SAFE if i % 2 == 0 else SafetyLabel.UNSAFE
    stem = "harmless kitten photo" if label is SafetyLabel.SAFE else "dangerous rifle trade"
    prompt = f"{stem} sample {i}"
    service.store.add_entry(LibraryEntry(
        id=f"seed-{i}", prompt=prompt, label=label, explanation="seed entry",
        embedding=embed(prompt, spec), source="seed"))
service.store.publish()
uvicorn.run(app, host="127.0.0.1", port=${PORT}, log_level="error")
`;

let server: ChildProcess;

async function waitForHealthy(timeoutMs = 30_000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    try {
      const r = await fetch(`${BASE}/healthz`);
      if (r.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((resolve) => setTimeout(resolve, 150));
  }
  throw new Error("python service did not become healthy in time");
}

describe("console against the live service", () => {
  beforeAll(async () => {
    server = spawn("python3", ["-c", SERVER_SCRIPT], { stdio: ["ignore", "inherit", "inherit"] });
    await waitForHealthy();
  }, 40_000);

  afterAll(() => {
    server?.kill();
  });

  it("runs the full curator loop over HTTP", async () => {
    const session = new ConsoleSession();
    session.configure(BASE, TOKEN);
    await session.refreshStats();
    const statsBefore = session.state.stats!;
    expect(statsBefore.safe_count).toBe(6);
    expect(statsBefore.unsafe_count).toBe(6);

    const probe = "harmless kitten photo close call";
    await session.runQuery(probe);
    expect(session.state.error).toBeNull();
    expect(session.state.current?.label).toBe("safe");
    expect(session.state.current?.references).toHaveLength(4);
    const versionBefore = session.state.libraryVersion!;

    await session.addReference(probe, "unsafe", "policy update: this is now unsafe");
    expect(session.state.error).toBeNull();
    expect(session.state.before?.label).toBe("safe");
    expect(session.state.current?.label).toBe("unsafe");
    expect(session.state.libraryVersion!).toBeGreaterThan(versionBefore);

    // stats panel and mutation feed reflect the server state
    expect(session.state.stats!.unsafe_count).toBe(7);
    await session.pollMutations();
    expect(session.state.mutations.length).toBeGreaterThan(0);
    expect(session.state.mutations.at(-1)?.kind).toBe("add");
  }, 20_000);

  it("refuses mutations without the token", async () => {
    const anonymous = new ApiClient(BASE, null);
    const err = await anonymous.addEntry("sneaky write", "unsafe").catch((e) => e);
    expect(err).toBeInstanceOf(ServiceError);
    expect(err.status).toBe(401);
    // and the library is untouched
    const stats = await anonymous.stats();
    expect(stats.safe_count + stats.unsafe_count).toBe(13);
  }, 20_000);
});
