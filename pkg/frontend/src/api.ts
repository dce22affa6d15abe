// Typed clients for the two Core surfaces and the Hub.
//
// The split is the security model: CoreUiClient attaches the session token
// and owns the vault-ingress/confirm/gate endpoints; CoreAgentClient speaks
// the token-free /agent/* surface used for ordinary command execution.

import { requestJson } from "./http.js";
import type { CardState, ExecResult, NodeRecord, RunStatus } from "./types.js";
import type { UiSession } from "./session.js";

export class CoreUiClient {
  constructor(private readonly session: UiSession) {}

  private url(path: string): string {
    return `${this.session.coreUrl}${path}`;
  }

  getMarkup(cardKey: string): Promise<{ card_key: string; markup: string }> {
    return requestJson("GET", this.url(`/ui/cards/${cardKey}/markup`), {
      headers: this.session.authHeaders(),
    });
  }

  getState(cardKey: string): Promise<CardState> {
    return requestJson("GET", this.url(`/ui/cards/${cardKey}/state`), {
      headers: this.session.authHeaders(),
    });
  }

  submitSensitive(
    cardKey: string,
    fields: Record<string, string>,
  ): Promise<{ refs: Record<string, string>; state: string }> {
    return requestJson("POST", this.url(`/ui/cards/${cardKey}/sensitive`), {
      headers: this.session.authHeaders(),
      body: { fields },
    });
  }

  confirm(cardKey: string, gateId: string): Promise<ExecResult> {
    return requestJson("POST", this.url(`/ui/cards/${cardKey}/confirm`), {
      headers: this.session.authHeaders(),
      body: { gate_id: gateId },
    });
  }

  cancel(cardKey: string, gateId: string): Promise<ExecResult> {
    return requestJson("POST", this.url(`/ui/cards/${cardKey}/cancel`), {
      headers: this.session.authHeaders(),
      body: { gate_id: gateId },
    });
  }

  readNode(cardKey: string, nodeId: string): Promise<NodeRecord> {
    return requestJson("GET", this.url(`/ui/cards/${cardKey}/nodes/${nodeId}`), {
      headers: this.session.authHeaders(),
    });
  }

  resolveGate(runId: string, stepUuid: string, decision: string): Promise<RunStatus> {
    return requestJson("POST", this.url(`/ui/sop/runs/${runId}/gates/${stepUuid}`), {
      headers: this.session.authHeaders(),
      body: { decision },
    });
  }

  runStatus(runId: string): Promise<RunStatus> {
    // run status is agent-readable; the UI reads it token-free on purpose
    return requestJson("GET", this.url(`/agent/sop/runs/${runId}`));
  }
}

export class CoreAgentClient {
  constructor(private readonly coreUrl: string) {}

  execute(line: string): Promise<ExecResult> {
    return requestJson("POST", `${this.coreUrl.replace(/\/$/, "")}/agent/execute`, {
      body: { line },
    });
  }
}

export function setFormLine(cardKey: string, values: Record<string, string>): string {
  const params = JSON.stringify(values).replace(/\\/g, "\\\\").replace(/'/g, "\\'");
  return `anx ${cardKey} set_form '${params}'`;
}
