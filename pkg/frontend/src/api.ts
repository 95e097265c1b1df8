import type {
  Label,
  LabelAck,
  MetricsPayload,
  QueryPayload,
  SessionCreated,
  SessionInfo,
} from "./types";

export class ApiError extends Error {
  status: number;

  constructor(status: number, detail: string) {
    super(detail);
    this.status = status;
  }
}

// Injectable for tests; the browser build uses window.fetch.
export type FetchLike = (
  input: string,
  init?: RequestInit
) => Promise<Response>;

async function request<T>(
  fetchImpl: FetchLike,
  path: string,
  init?: RequestInit
): Promise<T> {
  const res = await fetchImpl(path, init);
  if (!res.ok) {
    let detail = `${res.status} ${res.statusText}`;
    try {
      const body = (await res.json()) as { detail?: string };
      if (body.detail) detail = body.detail;
    } catch {
      // non-JSON error body; keep the status line
    }
    throw new ApiError(res.status, detail);
  }
  return (await res.json()) as T;
}

export class ServiceClient {
  private fetchImpl: FetchLike;
  private base: string;

  constructor(fetchImpl?: FetchLike, base = "") {
    this.fetchImpl = fetchImpl ?? ((input, init) => fetch(input, init));
    this.base = base.replace(/\/$/, "");
  }

  listSessions(): Promise<{ sessions: string[] }> {
    return request(this.fetchImpl, `${this.base}/api/sessions`);
  }

  createSession(config: unknown): Promise<SessionCreated> {
    return request(this.fetchImpl, `${this.base}/api/sessions`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(config ?? {}),
    });
  }

  getSession(id: string): Promise<SessionInfo> {
    return request(this.fetchImpl, `${this.base}/api/sessions/${id}`);
  }

  getQuery(id: string): Promise<QueryPayload> {
    return request(this.fetchImpl, `${this.base}/api/sessions/${id}/query`);
  }

  postLabel(id: string, index: number, label: Label): Promise<LabelAck> {
    return request(this.fetchImpl, `${this.base}/api/sessions/${id}/labels`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ index, label }),
    });
  }

  // Fire-and-poll: the server flips to BUSY and retrains in the background.
  advance(id: string): Promise<{ status: string; session_id: string }> {
    return request(this.fetchImpl, `${this.base}/api/sessions/${id}/advance`, {
      method: "POST",
    });
  }

  getMetrics(id: string): Promise<MetricsPayload> {
    return request(this.fetchImpl, `${this.base}/api/sessions/${id}/metrics`);
  }
}
