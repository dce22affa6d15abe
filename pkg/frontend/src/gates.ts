// SOP gate panel: shows what the agents produced so far and takes the
// pass/reject decision over the UI channel. A stale panel (someone else
// resolved the gate first) refreshes instead of double-resolving.

import { CoreUiClient } from "./api.js";
import { HttpError } from "./http.js";
import type { UiSession } from "./session.js";
import type { RunStatus } from "./types.js";

export type GatePanel = {
  root: HTMLElement;
  refresh: () => Promise<void>;
};

export type GateResolution =
  | { outcome: "resolved"; decision: string; run: RunStatus }
  | { outcome: "stale"; run: RunStatus };

export async function renderGatePanel(
  session: UiSession,
  runId: string,
  stepUuid: string,
  mount: HTMLElement,
  onResolved?: (r: GateResolution) => void,
): Promise<GatePanel> {
  const ui = new CoreUiClient(session);
  const root = document.createElement("section");
  root.className = "anx-gate-panel";
  mount.appendChild(root);

  async function refresh(): Promise<void> {
    const run = await ui.runStatus(runId);
    root.innerHTML = "";

    const heading = document.createElement("h3");
    heading.textContent = `Review required: ${stepUuid}`;
    root.appendChild(heading);

    const snapshot = document.createElement("pre");
    snapshot.className = "anx-gate-snapshot";
    const facts: Record<string, unknown> = {};
    for (const [uuid, status] of Object.entries(run.steps)) {
      if (status !== "completed") continue;
      try {
        const node = await ui.readNode(run.card_key, uuid);
        facts[uuid] = node.payload;
      } catch {
        // steps without outputs have no node record
      }
    }
    snapshot.textContent = JSON.stringify(facts, null, 2);
    root.appendChild(snapshot);

    if (run.steps[stepUuid] !== "blocked_on_human") {
      const note = document.createElement("p");
      note.textContent = "This step was already resolved.";
      root.appendChild(note);
      return;
    }

    for (const decision of ["pass", "reject"]) {
      const button = document.createElement("button");
      button.type = "button";
      button.textContent = decision;
      button.dataset.decision = decision;
      button.addEventListener("click", async () => {
        try {
          const updated = await ui.resolveGate(runId, stepUuid, decision);
          onResolved?.({ outcome: "resolved", decision, run: updated });
        } catch (err) {
          if (err instanceof HttpError && err.code === "WrongStatus") {
            await refresh(); // resolved elsewhere; never double-resolve
            onResolved?.({ outcome: "stale", run: await ui.runStatus(runId) });
            return;
          }
          throw err;
        }
        await refresh();
      });
      root.appendChild(button);
    }
  }

  await refresh();
  return { root, refresh };
}
