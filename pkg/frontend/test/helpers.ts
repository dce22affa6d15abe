// In-memory stand-in for the Core/Hub wire contract, plus request capture.
// Unit tests run against this; integration.test.ts runs the same client code
// against the real services.

import { setRequestRecorder, type CapturedRequest } from "../src/http.js";

export const CORE = "http://core.test";
export const HUB = "http://hub.test";

export const CARD_MARKUP = [
  "<x form c_9001>",
  "## Account",
  "<x input i_900100>**name:** prefilled</x>",
  "<x input i_900101>**password:**</x>",
  "<x options i_900102>",
  "**industry:**",
  "<x 0> Please select industry</x>",
  "<x 1 it> Information Technology</x>",
  "<x 2 finance> Finance</x>",
  "</x>",
  '<x button i_900103 tap="submit">',
  "[Create Account](/submit)",
  "</x>",
  "</x>",
  "",
].join("\n");

type Json = Record<string, unknown>;

export class FakeStack {
  captured: CapturedRequest[] = [];
  tokens = new Set<string>();
  lifecycle = "READY";
  vault: Record<string, string> = {};
  values: Record<string, string> = { name: "prefilled" };
  gateId = "g_fake0001";
  gateOpen = false;
  expireTokens = false;
  runSteps: Record<string, string> = {
    s1: "completed", c1: "completed", s2: "blocked_on_human", c2: "pending",
    s3: "pending", s4: "pending",
  };
  staleGateOnce = false;
  confirmCalls = 0;

  private realFetch = globalThis.fetch;

  install(): void {
    setRequestRecorder((req) => this.captured.push(req));
    globalThis.fetch = ((input: RequestInfo | URL, init?: RequestInit) =>
      this.route(String(input), init)) as typeof fetch;
  }

  uninstall(): void {
    setRequestRecorder(null);
    globalThis.fetch = this.realFetch;
  }

  private json(status: number, body: Json): Response {
    return new Response(JSON.stringify(body), {
      status,
      headers: { "Content-Type": "application/json" },
    });
  }

  private error(status: number, code: string, message = code): Response {
    return this.json(status, { status: "error", error: { code, message } });
  }

  private state(): Json {
    return {
      card_key: "c_9001", title: "Account", kind: "form",
      lifecycle: this.lifecycle, values: { ...this.values },
      sensitive: { password: { masked: "▒▒▒", has_ref: "password" in this.vault } },
      gates: this.gateOpen
        ? [{ gate_id: this.gateId, description: "Confirm submit of 'Account'", kind: "confirm" }]
        : [],
      audit_length: 3,
    };
  }

  private authorized(init?: RequestInit): boolean {
    const headers = (init?.headers ?? {}) as Record<string, string>;
    const token = headers["X-User-Token"];
    if (this.expireTokens) return false;
    return typeof token === "string" && this.tokens.has(token);
  }

  private async route(url: string, init?: RequestInit): Promise<Response> {
    const method = init?.method ?? "GET";
    const u = new URL(url);
    const path = u.pathname;
    const body = init?.body ? (JSON.parse(String(init.body)) as Json) : {};

    if (u.origin === HUB) {
      if (path === "/ui/token" && method === "POST") {
        const token = `ut_fake${this.tokens.size}${Math.random().toString(16).slice(2, 10)}`;
        this.tokens.add(token);
        return this.json(200, { token, session_id: body.session_id, issued_at: 0, ttl: 3600 });
      }
      if (path === "/verify") {
        return this.json(200, { valid: this.tokens.has(String(body.token)) });
      }
      return this.error(404, "UnknownApp");
    }

    if (path.startsWith("/ui/") && !this.authorized(init)) {
      return this.error(401, "InvalidUserToken", "user token rejected");
    }

    if (path === "/ui/cards/c_9001/markup") return this.json(200, { card_key: "c_9001", markup: CARD_MARKUP });
    if (path === "/ui/cards/c_9001/state") return this.json(200, this.state());
    if (path === "/ui/cards/c_9001/sensitive" && method === "POST") {
      const fields = body.fields as Record<string, string>;
      const refs: Record<string, string> = {};
      for (const [nick, value] of Object.entries(fields)) {
        this.vault[nick] = value;
        refs[nick] = `ref_${nick}0123456789abcdef0123456789abcdef`.slice(0, 36);
      }
      return this.json(200, { refs, state: this.lifecycle });
    }
    if (path === "/ui/cards/c_9001/confirm" && method === "POST") {
      this.confirmCalls += 1;
      if (body.gate_id !== this.gateId || !this.gateOpen) return this.error(404, "UnknownGate");
      this.gateOpen = false;
      this.lifecycle = "COMPLETED";
      return this.json(200, { status: "ok", body: {}, new_state: "COMPLETED" });
    }
    if (path.startsWith("/ui/cards/c_9001/nodes/")) {
      const nodeId = path.split("/").pop() ?? "";
      if (nodeId === "s1") {
        return this.json(200, { node: "s1", payload: { matchingScore: 72 }, version: 1 });
      }
      return this.error(404, "UnknownNode");
    }
    if (path === "/ui/sop/runs/r_fake/gates/s2" && method === "POST") {
      if (this.staleGateOnce) {
        this.staleGateOnce = false;
        return this.error(409, "WrongStatus", "step s2 is completed, not blocked_on_human");
      }
      if (this.runSteps.s2 !== "blocked_on_human") return this.error(409, "WrongStatus");
      this.runSteps.s2 = "completed";
      this.runSteps.c2 = "completed";
      if (body.decision === "pass") {
        this.runSteps.s4 = "ready";
        this.runSteps.s3 = "skipped";
      } else {
        this.runSteps.s3 = "ready";
        this.runSteps.s4 = "skipped";
      }
      return this.json(200, this.runStatus());
    }
    if (path === "/agent/sop/runs/r_fake" && method === "GET") return this.json(200, this.runStatus());
    if (path.startsWith("/agent/cards/c_9001/nodes/")) {
      const nodeId = path.split("/").pop() ?? "";
      if (nodeId === "s1") {
        return this.json(200, { node: "s1", payload: { matchingScore: 72 }, version: 1 });
      }
      return this.error(404, "UnknownNode");
    }
    if (path === "/agent/execute" && method === "POST") {
      const line = String(body.line ?? "");
      if (line.includes("set_form")) {
        const params = /'(.*)'$/.exec(line)?.[1] ?? "{}";
        const fields = JSON.parse(params.replace(/\\'/g, "'")) as Record<string, string>;
        Object.assign(this.values, fields);
        return this.json(200, {
          status: "ok", body: { stored: Object.keys(fields).sort() }, new_state: this.lifecycle,
        });
      }
      if (line.includes("submit")) {
        this.gateOpen = true;
        this.lifecycle = "CONFIRMING";
        return this.json(200, {
          status: "confirming",
          body: { gate_id: this.gateId, description: "Confirm submit of 'Account'" },
          new_state: "CONFIRMING",
        });
      }
      return this.json(200, { status: "ok", body: {}, new_state: this.lifecycle });
    }
    return this.error(404, "UnknownCard", `no route for ${method} ${path}`);
  }

  private runStatus(): Json {
    return {
      run_id: "r_fake", card_key: "c_9001",
      terminal: Object.values(this.runSteps).every((s) => s === "completed" || s === "skipped"),
      steps: { ...this.runSteps },
      selected_routes: {},
      open_gates: this.runSteps.s2 === "blocked_on_human" ? { s2: "g_sop0001" } : {},
    };
  }
}

export function secretLeaks(captured: CapturedRequest[], secret: string): CapturedRequest[] {
  return captured.filter((r) =>
    (r.body ?? "").includes(secret) || r.url.includes(secret),
  );
}
