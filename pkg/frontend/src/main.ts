import { ConsoleSession } from "./session.js";
import { mount } from "./ui.js";

const POLL_INTERVAL_MS = 2000;

export function start(root: HTMLElement): ConsoleSession {
  const session = new ConsoleSession();
  mount(root, session);
  setInterval(() => {
    if (!session.connected) return;
    void session.refreshStats().catch(() => undefined);
    void session.pollMutations().catch(() => undefined);
  }, POLL_INTERVAL_MS);
  return session;
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  start(document.getElementById("app") as HTMLElement);
}
