/**
 * Console session state: the curator's query -> curate -> re-test loop.
 *
 * Invariants enforced here:
 * - the displayed library version always comes from the most recent server
 *   response (never assumed optimistically);
 * - mutating actions are unavailable until a token is configured;
 * - a new query cancels the previous in-flight classify call.
 */

import {
  ApiClient,
  ClassificationView,
  FetchLike,
  LibraryStats,
  MutationRecord,
  ServiceError,
} from "./api.js";

export interface SessionState {
  baseUrl: string | null;
  token: string | null;
  lastQuery: string | null;
  /** verdict before the most recent mutation, for side-by-side display */
  before: ClassificationView | null;
  current: ClassificationView | null;
  stats: LibraryStats | null;
  mutations: MutationRecord[];
  libraryVersion: number | null;
  error: string | null;
  busy: boolean;
}

type Listener = (state: SessionState) => void;

export class ConsoleSession {
  private client: ApiClient | null = null;
  private controller: AbortController | null = null;
  private listeners: Listener[] = [];

  readonly state: SessionState = {
    baseUrl: null,
    token: null,
    lastQuery: null,
    before: null,
    current: null,
    stats: null,
    mutations: [],
    libraryVersion: null,
    error: null,
    busy: false,
  };

  constructor(private readonly fetchFn?: FetchLike) {}

  onChange(listener: Listener): void {
    this.listeners.push(listener);
  }

  private emit(): void {
    for (const listener of this.listeners) listener(this.state);
  }

  get mutationsEnabled(): boolean {
    return this.client !== null && !!this.state.token;
  }

  get connected(): boolean {
    return this.client !== null;
  }

  configure(baseUrl: string, token: string | null): void {
    this.state.baseUrl = baseUrl;
    this.state.token = token && token.length > 0 ? token : null;
    this.client = new ApiClient(baseUrl, this.state.token, this.fetchFn);
    this.state.error = null;
    this.emit();
  }

  private require(): ApiClient {
    if (!this.client) throw new ServiceError("configure a service URL first", 0, "not_configured");
    return this.client;
  }

  /** Track the authoritative version from any server response. */
  private sawVersion(version: number | null | undefined): void {
    if (typeof version === "number") this.state.libraryVersion = version;
  }

  private fail(err: unknown): void {
    this.state.error = err instanceof Error ? err.message : String(err);
    this.state.busy = false;
    this.emit();
  }

  /** Classify a fresh prompt; clears any before/after comparison. */
  async runQuery(prompt: string): Promise<void> {
    const client = this.require();
    if (!prompt.trim()) {
      this.state.error = "prompt must not be empty";
      this.emit();
      return;
    }
    this.controller?.abort();
    this.controller = new AbortController();
    this.state.busy = true;
    this.state.error = null;
    this.emit();
    try {
      const verdict = await client.classify(prompt, this.controller.signal);
      this.state.lastQuery = prompt;
      this.state.before = null;
      this.state.current = verdict;
      this.sawVersion(verdict.library_version);
      this.state.busy = false;
      this.emit();
    } catch (err) {
      if ((err as Error).name === "AbortError") return; // superseded by a newer query
      this.fail(err);
    }
  }

  /** Re-run the last query after a mutation, keeping the old verdict. */
  private async retest(): Promise<void> {
    const client = this.require();
    if (this.state.lastQuery === null) return;
    const verdict = await client.classify(this.state.lastQuery);
    this.state.before = this.state.current;
    this.state.current = verdict;
    this.sawVersion(verdict.library_version);
  }

  async addReference(prompt: string, label: string, explanation: string): Promise<void> {
    if (!this.mutationsEnabled) {
      this.fail(new ServiceError("mutations need a configured token", 0, "no_token"));
      return;
    }
    this.state.busy = true;
    this.emit();
    try {
      const ack = await this.require().addEntry(prompt, label, explanation);
      this.sawVersion(ack.library_version);
      await this.retest();
      await this.refreshStats();
      this.state.busy = false;
      this.emit();
    } catch (err) {
      this.fail(err);
    }
  }

  async flipReference(entryId: string): Promise<void> {
    if (!this.mutationsEnabled) {
      this.fail(new ServiceError("mutations need a configured token", 0, "no_token"));
      return;
    }
    this.state.busy = true;
    this.emit();
    try {
      const ack = await this.require().flipEntry(entryId);
      this.sawVersion(ack.library_version);
      await this.retest();
      await this.refreshStats();
      this.state.busy = false;
      this.emit();
    } catch (err) {
      this.fail(err);
    }
  }

  async refreshStats(): Promise<void> {
    const client = this.require();
    const stats = await client.stats();
    this.state.stats = stats;
    this.sawVersion(stats.version);
    this.emit();
  }

  async pollMutations(): Promise<void> {
    const client = this.require();
    const last = this.state.mutations.at(-1)?.seq ?? 0;
    const fresh = await client.mutations(last);
    if (fresh.length > 0) {
      this.state.mutations = [...this.state.mutations, ...fresh].slice(-100);
      this.emit();
    }
  }
}
