// The complete set of requests this client is allowed to make, split by the
// role a host plays for the session. The recording harness in the tests
// fails on anything outside these tables, so adding an endpoint here is a
// deliberate contract change.

export type Role = "pod" | "orchestrator" | "external";

export interface RecordedRequest {
  method: string;
  url: string;
}

interface Rule {
  method: string;
  path: RegExp;
}

const RULES: Record<Role, Rule[]> = {
  pod: [
    // reads are access-controlled by the pod itself
    { method: "GET", path: /^\/.*$/ },
    // the only writes: the sync config, the ACL table, inbox bookings
    { method: "PUT", path: /^\/settings\/orchestrator$/ },
    { method: "PUT", path: /^\/_admin\/acl$/ },
    { method: "POST", path: /^\/inbox\/$/ },
  ],
  orchestrator: [
    { method: "GET", path: /^\/health$/ },
    { method: "GET", path: /^\/status$/ },
    { method: "POST", path: /^\/register$/ },
    { method: "POST", path: /^\/sync\/[^/]+$/ },
    { method: "DELETE", path: /^\/register\/[^/]+$/ },
  ],
  external: [
    { method: "POST", path: /^\/cal\/[^/]+\/events$/ },
  ],
};

/** null when the request is in contract, otherwise a violation description. */
export function classify(request: RecordedRequest, roles: Map<string, Role>): string | null {
  let url: URL;
  try {
    url = new URL(request.url);
  } catch {
    return `unparseable url: ${request.url}`;
  }
  const role = roles.get(url.origin);
  if (role === undefined) {
    return `request to a host with no assigned role: ${request.method} ${request.url}`;
  }
  const path = url.pathname;
  for (const rule of RULES[role]) {
    if (rule.method === request.method && rule.path.test(path)) {
      return null;
    }
  }
  return `out of contract for ${role}: ${request.method} ${path}`;
}

export function violations(requests: RecordedRequest[], roles: Map<string, Role>): string[] {
  const found: string[] = [];
  for (const request of requests) {
    const problem = classify(request, roles);
    if (problem !== null) {
      found.push(problem);
    }
  }
  return found;
}
