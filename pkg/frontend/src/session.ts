// UI session: owns the user token. The token lives in a private field, is
// attached only to requests this module builds, and is deliberately excluded
// from JSON serialization so state dumps and transcripts can never carry it.

import { requestJson } from "./http.js";
import type { Bootstrap, UserTokenGrant } from "./types.js";

export class UiSession {
  readonly coreUrl: string;
  readonly hubUrl: string;
  readonly sessionId: string;
  #token: string | null = null;

  constructor(bootstrap: Bootstrap, sessionId?: string) {
    this.coreUrl = bootstrap.core_url.replace(/\/$/, "");
    this.hubUrl = bootstrap.hub_url.replace(/\/$/, "");
    this.sessionId = sessionId ?? `web-${Math.random().toString(36).slice(2, 10)}`;
  }

  get hasToken(): boolean {
    return this.#token !== null;
  }

  async acquireToken(): Promise<void> {
    const grant = await requestJson<UserTokenGrant>("POST", `${this.hubUrl}/ui/token`, {
      body: { session_id: this.sessionId },
    });
    this.#token = grant.token;
  }

  authHeaders(): Record<string, string> {
    if (this.#token === null) {
      throw new Error("session has no user token; call acquireToken() first");
    }
    return { "X-User-Token": this.#token };
  }

  // Token confinement: serialized sessions carry everything except the token.
  toJSON(): Record<string, unknown> {
    return { core_url: this.coreUrl, hub_url: this.hubUrl, session_id: this.sessionId };
  }
}
