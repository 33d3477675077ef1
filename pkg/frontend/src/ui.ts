/**
 * DOM rendering for the console. Server-provided text always goes through
 * textContent, never innerHTML, so reference prompts cannot inject markup.
 */

import { ClassificationView, ReferenceCard } from "./api.js";
import { ConsoleSession, SessionState } from "./session.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function referenceCard(session: ConsoleSession, ref: ReferenceCard): HTMLElement {
  const card = el("div", `ref-card ref-${ref.label}`);
  card.dataset.entryId = ref.id;
  card.appendChild(el("div", "ref-label", ref.label));
  card.appendChild(el("div", "ref-prompt", ref.prompt));
  if (ref.explanation) card.appendChild(el("div", "ref-explanation", ref.explanation));
  card.appendChild(el("div", "ref-distance", `distance ${ref.distance.toFixed(4)}`));
  const flip = el("button", "flip-button", "flip label");
  flip.disabled = !session.mutationsEnabled;
  flip.addEventListener("click", () => void session.flipReference(ref.id));
  card.appendChild(flip);
  return card;
}

function verdictPanel(
  session: ConsoleSession,
  view: ClassificationView,
  heading: string,
  cls: string,
): HTMLElement {
  const panel = el("div", `verdict ${cls}`);
  panel.appendChild(el("h3", undefined, heading));
  panel.appendChild(el("div", `verdict-label verdict-${view.label}`, view.label));
  const gauge = el("div", "gauge");
  const fill = el("div", "gauge-fill");
  fill.style.width = `${(view.unsafe_probability * 100).toFixed(1)}%`;
  gauge.appendChild(fill);
  gauge.appendChild(
    el("span", "gauge-text", `unsafe probability ${view.unsafe_probability.toFixed(4)}`),
  );
  panel.appendChild(gauge);
  panel.appendChild(el("div", "verdict-version", `library v${view.library_version}`));
  if (view.shortfall) panel.appendChild(el("div", "shortfall", "fewer references than requested"));
  const refs = el("div", "references");
  for (const ref of view.references) refs.appendChild(referenceCard(session, ref));
  panel.appendChild(refs);
  return panel;
}

export function render(root: HTMLElement, session: ConsoleSession): void {
  const state = session.state;
  root.textContent = "";

  // --- settings -------------------------------------------------------
  const settings = el("form", "settings");
  settings.id = "settings";
  const urlInput = el("input");
  urlInput.id = "base-url";
  urlInput.placeholder = "service URL, e.g. http://127.0.0.1:8700";
  urlInput.value = state.baseUrl ?? "";
  const tokenInput = el("input");
  tokenInput.id = "token";
  tokenInput.type = "password";
  tokenInput.placeholder = "bearer token (required for curation)";
  tokenInput.value = state.token ?? "";
  const connect = el("button", undefined, "connect");
  connect.id = "connect";
  connect.type = "submit";
  settings.append(urlInput, tokenInput, connect);
  settings.addEventListener("submit", (ev) => {
    ev.preventDefault();
    session.configure(urlInput.value.trim(), tokenInput.value.trim() || null);
    if (session.connected) void session.refreshStats().catch(() => undefined);
  });
  root.appendChild(settings);

  if (state.error) root.appendChild(el("div", "error", state.error));

  // --- query panel ----------------------------------------------------
  const query = el("form", "query-panel");
  query.id = "query-panel";
  const promptInput = el("textarea");
  promptInput.id = "prompt";
  promptInput.placeholder = "prompt to test";
  promptInput.value = state.lastQuery ?? "";
  const classifyButton = el("button", undefined, state.busy ? "working…" : "classify");
  classifyButton.id = "classify";
  classifyButton.type = "submit";
  classifyButton.disabled = !session.connected || state.busy;
  query.append(promptInput, classifyButton);
  query.addEventListener("submit", (ev) => {
    ev.preventDefault();
    if (!promptInput.value.trim()) {
      // client-side validation: no network call for an empty prompt
      session.state.error = "prompt must not be empty";
      render(root, session);
      return;
    }
    void session.runQuery(promptInput.value);
  });
  root.appendChild(query);

  // --- verdicts (before/after when a mutation re-test happened) --------
  const verdicts = el("div", "verdicts");
  verdicts.id = "verdicts";
  if (state.before) verdicts.appendChild(verdictPanel(session, state.before, "before", "before"));
  if (state.current)
    verdicts.appendChild(
      verdictPanel(session, state.current, state.before ? "after" : "verdict", "after"),
    );
  root.appendChild(verdicts);

  // --- add-reference form ----------------------------------------------
  const form = el("form", "add-reference");
  form.id = "add-reference";
  const refPrompt = el("input");
  refPrompt.id = "ref-prompt";
  refPrompt.placeholder = "reference prompt";
  const refLabel = el("select");
  refLabel.id = "ref-label";
  for (const value of ["unsafe", "safe"]) {
    const opt = el("option", undefined, value);
    opt.value = value;
    refLabel.appendChild(opt);
  }
  const refExplanation = el("input");
  refExplanation.id = "ref-explanation";
  refExplanation.placeholder = "explanation (optional)";
  const submit = el("button", undefined, "add reference");
  submit.id = "add-reference-submit";
  submit.type = "submit";
  submit.disabled = !session.mutationsEnabled;
  if (!session.mutationsEnabled) {
    form.appendChild(el("div", "hint", "configure a token to enable curation"));
  }
  form.append(refPrompt, refLabel, refExplanation, submit);
  form.addEventListener("submit", (ev) => {
    ev.preventDefault();
    if (!refPrompt.value.trim()) {
      session.state.error = "reference prompt must not be empty";
      render(root, session);
      return;
    }
    void session.addReference(refPrompt.value, refLabel.value, refExplanation.value);
  });
  root.appendChild(form);

  // --- stats + mutation feed -------------------------------------------
  const stats = el("div", "stats-panel");
  stats.id = "stats-panel";
  if (state.stats) {
    stats.appendChild(el("div", "stat safe-count", `safe ${state.stats.safe_count}`));
    stats.appendChild(el("div", "stat unsafe-count", `unsafe ${state.stats.unsafe_count}`));
    stats.appendChild(
      el("div", "stat total-count", `total ${state.stats.safe_count + state.stats.unsafe_count}`),
    );
    stats.appendChild(el("div", "stat embedder", state.stats.embedder_id));
  }
  if (state.libraryVersion !== null) {
    stats.appendChild(el("div", "stat library-version", `version ${state.libraryVersion}`));
  }
  const feed = el("ul", "mutation-feed");
  feed.id = "mutation-feed";
  for (const record of state.mutations.slice(-12).reverse()) {
    feed.appendChild(
      el(
        "li",
        `mutation mutation-${record.kind}`,
        `#${record.seq} ${record.kind} ${record.entry_ids.join(", ")} -> v${record.resulting_version ?? "staged"}`,
      ),
    );
  }
  stats.appendChild(feed);
  root.appendChild(stats);
}

export function mount(root: HTMLElement, session: ConsoleSession): void {
  session.onChange(() => render(root, session));
  render(root, session);
}
