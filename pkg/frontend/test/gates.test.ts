import { afterEach, beforeEach, describe, expect, it } from "vitest";

import { renderGatePanel, type GateResolution } from "../src/gates.js";
import { UiSession } from "../src/session.js";
import { CORE, FakeStack, HUB } from "./helpers.js";

let stack: FakeStack;
let session: UiSession;

beforeEach(async () => {
  stack = new FakeStack();
  stack.install();
  session = new UiSession({ core_url: CORE, hub_url: HUB });
  await session.acquireToken();
  document.body.innerHTML = "";
});

afterEach(() => stack.uninstall());

function clickDecision(decision: string): void {
  const button = Array.from(document.querySelectorAll("button"))
    .find((b) => b.dataset.decision === decision) as HTMLButtonElement;
  button.click();
}

async function settle(): Promise<void> {
  await new Promise((r) => setTimeout(r, 20));
}

describe("renderGatePanel", () => {
  it("shows the node snapshot feeding the decision", async () => {
    await renderGatePanel(session, "r_fake", "s2", document.body);
    const snapshot = document.querySelector(".anx-gate-snapshot")?.textContent ?? "";
    expect(snapshot).toContain("matchingScore");
    expect(snapshot).toContain("72");
  });

  it("pass routes the run to the interview branch", async () => {
    const outcomes: GateResolution[] = [];
    await renderGatePanel(session, "r_fake", "s2", document.body, (r) => outcomes.push(r));
    clickDecision("pass");
    await settle();
    expect(outcomes[0]?.outcome).toBe("resolved");
    expect(stack.runSteps.s4).toBe("ready");
    expect(stack.runSteps.s3).toBe("skipped");
  });

  it("reject routes the run to the decline branch", async () => {
    await renderGatePanel(session, "r_fake", "s2", document.body);
    clickDecision("reject");
    await settle();
    expect(stack.runSteps.s3).toBe("ready");
    expect(stack.runSteps.s4).toBe("skipped");
  });

  it("a stale panel refreshes instead of double-resolving", async () => {
    stack.staleGateOnce = true;
    const outcomes: GateResolution[] = [];
    await renderGatePanel(session, "r_fake", "s2", document.body, (r) => outcomes.push(r));
    clickDecision("pass");
    await settle();
    expect(outcomes[0]?.outcome).toBe("stale");
    // the fake's gate is still blocked; exactly zero decisions were recorded
    expect(stack.runSteps.s2).toBe("blocked_on_human");
  });

  it("already-resolved steps render a note without buttons", async () => {
    stack.runSteps.s2 = "completed";
    await renderGatePanel(session, "r_fake", "s2", document.body);
    expect(document.querySelector(".anx-gate-panel")?.textContent).toContain("already resolved");
    expect(document.querySelectorAll("button[data-decision]")).toHaveLength(0);
  });
});
