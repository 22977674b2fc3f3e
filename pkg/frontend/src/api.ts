import { expectOk, FetchLike, HttpError } from "./http";

export interface PodCredentials {
  ownerSecret?: string;
  token?: string;
}

/** Matches the engine's percent-encoding of user IRIs in orchestrator URLs. */
export function encodeUserIri(iri: string): string {
  return encodeURIComponent(iri).replace(
    /[!'()*]/g,
    (c) => "%" + c.charCodeAt(0).toString(16).toUpperCase(),
  );
}

export class PodApi {
  readonly base: string;

  constructor(base: string, readonly creds: PodCredentials, private readonly fetchImpl: FetchLike) {
    this.base = base.replace(/\/+$/, "");
  }

  private headers(extra?: Record<string, string>): Record<string, string> {
    const headers: Record<string, string> = { ...extra };
    if (this.creds.token !== undefined) {
      headers["Authorization"] = `Bearer ${this.creds.token}`;
    }
    if (this.creds.ownerSecret !== undefined) {
      headers["X-Owner-Secret"] = this.creds.ownerSecret;
    }
    return headers;
  }

  async getResource(path: string): Promise<{ body: string; etag: string | null }> {
    const url = this.base + path;
    const response = await expectOk("GET", url, await this.fetchImpl(url, {
      headers: this.headers(),
    }));
    return { body: await response.text(), etag: response.headers.get("ETag") };
  }

  async putResource(
    path: string,
    body: string,
    contentType: string,
    ifMatch?: string,
  ): Promise<void> {
    const url = this.base + path;
    const extra: Record<string, string> = { "Content-Type": contentType };
    if (ifMatch !== undefined) {
      extra["If-Match"] = ifMatch;
    }
    await expectOk("PUT", url, await this.fetchImpl(url, {
      method: "PUT",
      headers: this.headers(extra),
      body,
    }));
  }

  async getAclLines(): Promise<string[]> {
    const { body } = await this.getResource("/_admin/acl");
    return body.split("\n").filter((line) => line.trim() !== "");
  }

  async putAclLines(lines: string[]): Promise<void> {
    const url = this.base + "/_admin/acl";
    await expectOk("PUT", url, await this.fetchImpl(url, {
      method: "PUT",
      headers: this.headers({ "Content-Type": "text/plain; charset=utf-8" }),
      body: lines.map((line) => line + "\n").join(""),
    }));
  }

  async postInbox(body: string, contentType: string): Promise<string> {
    const url = this.base + "/inbox/";
    const response = await expectOk("POST", url, await this.fetchImpl(url, {
      method: "POST",
      headers: this.headers({ "Content-Type": contentType }),
      body,
    }));
    return (await response.text()).trim();
  }
}

export interface SyncReportView {
  user: string;
  status: string;
  wroteTarget: boolean;
  consumed: number;
  sources: Array<[label: string, state: string]>;
  conflicts: Array<[string, string]>;
  detail: string;
}

export function parseSyncReport(text: string): SyncReportView {
  const report: SyncReportView = {
    user: "", status: "", wroteTarget: false, consumed: 0,
    sources: [], conflicts: [], detail: "",
  };
  for (const line of text.split("\n")) {
    if (line === "") continue;
    const space = line.indexOf(" ");
    const key = space === -1 ? line : line.slice(0, space);
    const rest = space === -1 ? "" : line.slice(space + 1);
    switch (key) {
      case "user": report.user = rest; break;
      case "status": report.status = rest; break;
      case "wrote_target": report.wroteTarget = rest === "true"; break;
      case "consumed": report.consumed = Number(rest); break;
      case "source": {
        // the state is a single word; the label may not be
        const cut = rest.lastIndexOf(" ");
        report.sources.push([rest.slice(0, cut), rest.slice(cut + 1)]);
        break;
      }
      case "conflict": {
        const cut = rest.indexOf(" ");
        report.conflicts.push([rest.slice(0, cut), rest.slice(cut + 1)]);
        break;
      }
      case "detail": report.detail = rest; break;
      default: break; // started/finished timestamps are not rendered
    }
  }
  return report;
}

export interface StatusRow {
  user: string;
  status: string;
  lastSync: string;
}

export class OrchestratorApi {
  readonly base: string;

  constructor(base: string, private readonly fetchImpl: FetchLike) {
    this.base = base.replace(/\/+$/, "");
  }

  async register(userIri: string, podUrl: string, ownerSecret: string): Promise<void> {
    const url = this.base + "/register";
    await expectOk("POST", url, await this.fetchImpl(url, {
      method: "POST",
      headers: { "Content-Type": "text/plain; charset=utf-8" },
      body: `${userIri}\n${podUrl}\n${ownerSecret}\n`,
    }));
  }

  async deregister(userIri: string): Promise<void> {
    const url = `${this.base}/register/${encodeUserIri(userIri)}`;
    await expectOk("DELETE", url, await this.fetchImpl(url, { method: "DELETE" }));
  }

  async syncUser(userIri: string): Promise<SyncReportView> {
    const url = `${this.base}/sync/${encodeUserIri(userIri)}`;
    const response = await expectOk("POST", url, await this.fetchImpl(url, { method: "POST" }));
    return parseSyncReport(await response.text());
  }

  async status(): Promise<StatusRow[]> {
    const url = this.base + "/status";
    const response = await expectOk("GET", url, await this.fetchImpl(url));
    const rows: StatusRow[] = [];
    for (const line of (await response.text()).split("\n")) {
      if (line.trim() === "") continue;
      const parts = line.split(" ");
      if (parts.length !== 3) {
        throw new Error(`bad status line: ${JSON.stringify(line)}`);
      }
      rows.push({ user: parts[0] as string, status: parts[1] as string, lastSync: parts[2] as string });
    }
    return rows;
  }
}

export { HttpError };
