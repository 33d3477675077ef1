/**
 * Typed client for the moderation service JSON API.
 *
 * The console performs no classification logic of its own: every number it
 * shows comes straight out of one of these response payloads. Mutating
 * calls carry the bearer token; the server is the authority on whether a
 * mutation is allowed.
 */

export interface ReferenceCard {
  id: string;
  prompt: string;
  label: "safe" | "unsafe";
  explanation: string;
  distance: number;
}

export interface ClassificationView {
  label: "safe" | "unsafe";
  unsafe_probability: number;
  citations: string[];
  classifier_id: string;
  library_version: number;
  shortfall: boolean;
  references: ReferenceCard[];
}

export interface LibraryStats {
  version: number;
  safe_count: number;
  unsafe_count: number;
  embedder_id: string;
}

export interface MutationRecord {
  seq: number;
  timestamp: string;
  kind: string;
  entry_ids: string[];
  resulting_version: number | null;
}

export interface MutationAck {
  id?: string;
  flipped?: number;
  library_version: number;
}

export class ServiceError extends Error {
  constructor(
    message: string,
    readonly status: number,
    readonly code: string = "unknown",
  ) {
    super(message);
    this.name = "ServiceError";
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    readonly baseUrl: string,
    readonly token: string | null = null,
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(
    path: string,
    options: { method?: string; body?: unknown; mutation?: boolean; signal?: AbortSignal } = {},
  ): Promise<T> {
    const headers: Record<string, string> = { "Content-Type": "application/json" };
    if (options.mutation && this.token) {
      headers["Authorization"] = `Bearer ${this.token}`;
    }
    const response = await this.fetchFn(this.baseUrl.replace(/\/$/, "") + path, {
      method: options.method ?? "GET",
      headers,
      body: options.body === undefined ? undefined : JSON.stringify(options.body),
      signal: options.signal,
    });
    if (!response.ok) {
      let code = "unknown";
      let message = `HTTP ${response.status}`;
      try {
        const body = (await response.json()) as { code?: string; message?: string };
        code = body.code ?? code;
        message = body.message ?? message;
      } catch {
        // non-JSON error body; keep the status message
      }
      throw new ServiceError(message, response.status, code);
    }
    return (await response.json()) as T;
  }

  classify(prompt: string, signal?: AbortSignal): Promise<ClassificationView> {
    return this.request("/classify", { method: "POST", body: { prompt }, signal });
  }

  stats(): Promise<LibraryStats> {
    return this.request("/library/stats");
  }

  mutations(since = 0): Promise<MutationRecord[]> {
    return this.request(`/library/mutations?since=${since}`);
  }

  healthz(): Promise<{ status: string; library_version: number }> {
    return this.request("/healthz");
  }

  addEntry(prompt: string, label: string, explanation = ""): Promise<MutationAck> {
    return this.request("/library/entries", {
      method: "POST",
      body: { prompt, label, explanation },
      mutation: true,
    });
  }

  removeEntry(id: string): Promise<MutationAck> {
    return this.request(`/library/entries/${encodeURIComponent(id)}`, {
      method: "DELETE",
      mutation: true,
    });
  }

  flipEntry(id: string): Promise<MutationAck> {
    return this.request(`/library/entries/${encodeURIComponent(id)}/flip`, {
      method: "POST",
      mutation: true,
    });
  }

  flipAll(dropExplanations = false): Promise<MutationAck> {
    return this.request("/library/flip_all", {
      method: "POST",
      body: { drop_explanations: dropExplanations },
      mutation: true,
    });
  }

  publish(): Promise<MutationAck> {
    return this.request("/library/publish", { method: "POST", body: {}, mutation: true });
  }
}
