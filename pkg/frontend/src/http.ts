import { RecordedRequest } from "./contract";

// Narrow view of fetch: everything downstream takes one of these so the
// tests can swap in a recording wrapper and the app can pass window.fetch.
export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export interface Recorder {
  fetch: FetchLike;
  requests: RecordedRequest[];
}

export function recordingFetch(inner: FetchLike): Recorder {
  const requests: RecordedRequest[] = [];
  const fetch: FetchLike = (url, init) => {
    requests.push({ method: (init?.method ?? "GET").toUpperCase(), url });
    return inner(url, init);
  };
  return { fetch, requests };
}

export class HttpError extends Error {
  constructor(
    public readonly status: number,
    public readonly method: string,
    public readonly url: string,
    body: string,
  ) {
    super(`${method} ${url} -> ${status}: ${body.trim()}`);
  }
}

/** Reject non-2xx responses, keeping status for per-participant rendering. */
export async function expectOk(method: string, url: string, response: Response): Promise<Response> {
  if (!response.ok) {
    throw new HttpError(response.status, method, url, await response.text());
  }
  return response;
}
