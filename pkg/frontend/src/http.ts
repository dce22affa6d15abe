// Single JSON transport for every request the client makes. Tests install a
// recorder here, so channel-fidelity assertions see all traffic.

export type CapturedRequest = {
  method: string;
  url: string;
  headers: Record<string, string>;
  body: string | null;
};

export class HttpError extends Error {
  constructor(
    public readonly status: number,
    public readonly code: string,
    message: string,
  ) {
    super(message);
  }
}

let recorder: ((req: CapturedRequest) => void) | null = null;

export function setRequestRecorder(r: ((req: CapturedRequest) => void) | null): void {
  recorder = r;
}

export async function requestJson<T>(
  method: string,
  url: string,
  opts: { headers?: Record<string, string>; body?: unknown } = {},
): Promise<T> {
  const headers: Record<string, string> = { ...(opts.headers ?? {}) };
  let body: string | null = null;
  if (opts.body !== undefined) {
    headers["Content-Type"] = "application/json";
    body = JSON.stringify(opts.body);
  }
  recorder?.({ method, url, headers, body });
  const resp = await fetch(url, { method, headers, body });
  const text = await resp.text();
  let data: unknown = null;
  try {
    data = text ? JSON.parse(text) : null;
  } catch {
    data = { raw: text };
  }
  if (!resp.ok) {
    const err = (data ?? {}) as { error?: { code?: string; message?: string } };
    throw new HttpError(resp.status, err.error?.code ?? "Transport", err.error?.message ?? text);
  }
  return data as T;
}
