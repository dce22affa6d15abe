// Wire types for the Core/Hub HTTP JSON surfaces.

export type Bootstrap = {
  core_url: string;
  hub_url: string;
};

export type SensitiveFlag = { masked: string; has_ref: boolean };

export type CardState = {
  card_key: string;
  title: string;
  kind: "form" | "sop";
  lifecycle: string;
  values: Record<string, string>;
  sensitive: Record<string, SensitiveFlag>;
  gates: { gate_id: string; description: string; kind: string }[];
  audit_length: number;
};

export type ExecResult = {
  status: "ok" | "waiting_ui" | "confirming" | "error";
  body: Record<string, unknown>;
  new_state: string;
};

export type RunStatus = {
  run_id: string;
  card_key: string;
  terminal: boolean;
  steps: Record<string, string>;
  selected_routes: Record<string, string[]>;
  open_gates: Record<string, string>;
};

export type UserTokenGrant = {
  token: string;
  session_id: string;
  issued_at: number;
  ttl: number;
};

export type NodeRecord = {
  node: string;
  payload: Record<string, unknown>;
  version: number;
};

export type ApiError = {
  status: "error";
  error: { code: string; message: string; details?: Record<string, unknown> };
};
