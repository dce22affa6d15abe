// Browser entry point: read the bootstrap document, mint a session token,
// and wire the demo panels (card renderer, confirmation prompts, gate panel).

import { renderCard, submitForm } from "./form.js";
import { showConfirmation } from "./confirm.js";
import { renderGatePanel } from "./gates.js";
import { UiSession } from "./session.js";
import { CoreAgentClient, CoreUiClient } from "./api.js";
import type { Bootstrap } from "./types.js";

export async function loadBootstrap(url = "./bootstrap.json"): Promise<Bootstrap> {
  const resp = await fetch(url);
  if (!resp.ok) throw new Error(`no bootstrap document at ${url}`);
  return (await resp.json()) as Bootstrap;
}

export async function start(mount: HTMLElement, bootstrap: Bootstrap): Promise<void> {
  const session = new UiSession(bootstrap);
  await session.acquireToken();

  const cardInput = document.createElement("input");
  cardInput.placeholder = "card key (c_…)";
  const openButton = document.createElement("button");
  openButton.type = "button";
  openButton.textContent = "Open card";
  const panel = document.createElement("div");
  mount.append(cardInput, openButton, panel);

  openButton.addEventListener("click", async () => {
    panel.innerHTML = "";
    const cardKey = cardInput.value.trim();
    const form = await renderCard(session, cardKey);
    panel.appendChild(form.root);

    if (form.submitLabel !== null) {
      const send = document.createElement("button");
      send.type = "button";
      send.textContent = form.submitLabel;
      send.addEventListener("click", async () => {
        await submitForm(session, form);
        const result = await new CoreAgentClient(session.coreUrl)
          .execute(`anx ${cardKey} submit`);
        if (result.status === "confirming") {
          const body = result.body as { gate_id: string; description: string };
          await showConfirmation(session, cardKey,
            { gate_id: body.gate_id, description: body.description }, panel);
        }
        const state = await new CoreUiClient(session).getState(cardKey);
        panel.dataset.lifecycle = state.lifecycle;
      });
      panel.appendChild(send);
    }
  });
}

declare global {
  interface Window {
    anxUi?: { start: typeof start; loadBootstrap: typeof loadBootstrap; renderGatePanel: typeof renderGatePanel };
  }
}

if (typeof window !== "undefined") {
  window.anxUi = { start, loadBootstrap, renderGatePanel };
}
