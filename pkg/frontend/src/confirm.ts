// Human-only confirmation dialog.
//
// The dialog resolves only through a real button activation; this module
// exports no approve() API, and the page gets no handle that could complete
// the gate programmatically. The Hub origin is displayed so users can judge
// where the confirmation is going.

import { CoreUiClient } from "./api.js";
import { HttpError } from "./http.js";
import type { UiSession } from "./session.js";
import type { ExecResult } from "./types.js";

export type ConfirmationOutcome =
  | { decision: "approved"; result: ExecResult }
  | { decision: "denied" }
  | { decision: "reauth_required"; message: string };

export function showConfirmation(
  session: UiSession,
  cardKey: string,
  gate: { gate_id: string; description: string },
  mount: HTMLElement,
): Promise<ConfirmationOutcome> {
  const dialog = document.createElement("div");
  dialog.className = "anx-confirm-dialog";
  dialog.setAttribute("role", "alertdialog");

  const origin = document.createElement("small");
  origin.className = "anx-confirm-origin";
  origin.textContent = `verified by ${session.hubUrl}`;
  dialog.appendChild(origin);

  const text = document.createElement("p");
  text.textContent = gate.description;
  dialog.appendChild(text);

  const approve = document.createElement("button");
  approve.type = "button";
  approve.textContent = "Approve";
  approve.className = "anx-approve";

  const deny = document.createElement("button");
  deny.type = "button";
  deny.textContent = "Deny";
  deny.className = "anx-deny";

  dialog.appendChild(approve);
  dialog.appendChild(deny);
  mount.appendChild(dialog);

  return new Promise<ConfirmationOutcome>((resolve) => {
    deny.addEventListener("click", () => {
      dialog.remove();
      resolve({ decision: "denied" }); // gate stays open, card unchanged
    });
    approve.addEventListener("click", async () => {
      approve.disabled = true;
      try {
        const result = await new CoreUiClient(session).confirm(cardKey, gate.gate_id);
        dialog.remove();
        resolve({ decision: "approved", result });
      } catch (err) {
        if (err instanceof HttpError && err.code === "InvalidUserToken") {
          dialog.remove();
          resolve({ decision: "reauth_required", message: err.message });
          return;
        }
        approve.disabled = false;
        text.textContent = `${gate.description} — ${String(err)}`;
      }
    });
  });
}
