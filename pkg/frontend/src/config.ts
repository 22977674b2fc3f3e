import { encodeDoc, statement, VOCAB } from "./linkeddoc";
import { parseIso } from "./time";

// Sync settings as the configurer form edits them. Encoding produces the
// exact document the engine's own encoder writes, so a form round trip is
// a byte no-op on the pod.

export const CONFIG_BASE = "http://caldesk.example/config";
export const CONFIG_PATH = "/settings/orchestrator";
export const DEFAULT_TARGET = "/calendar/combined";
export const DEFAULT_INTERVAL = 300;

export const MODES = ["HybridExternalFirst", "SolidOnly", "SolidFirstHybrid"] as const;
export const INBOX_ROUTES = ["SeparateResource", "IcsInPod", "SeparateRemoteCalendar"] as const;

export interface SourceRow {
  url: string;
  label: string;
}

export interface ConfigForm {
  mode: string;
  target: string;
  intervalSeconds: string;
  freebusy: string;
  inboxRoute: string;
  pushUrl: string;
  windowStart: string;
  windowEnd: string;
  sources: SourceRow[];
}

export function emptyForm(): ConfigForm {
  return {
    mode: "",
    target: DEFAULT_TARGET,
    intervalSeconds: String(DEFAULT_INTERVAL),
    freebusy: "",
    inboxRoute: "",
    pushUrl: "",
    windowStart: "",
    windowEnd: "",
    sources: [],
  };
}

export interface FieldProblem {
  field: string;
  problem: string;
}

const PATH_SEGMENT = /^[A-Za-z0-9._~!$&'()*+,;=:@%-]+$/;

function checkPodPath(value: string): string | null {
  if (!value.startsWith("/")) {
    return "must be a '/'-rooted pod path";
  }
  for (const segment of value.split("/")) {
    if (segment === "") continue;
    if (segment === "." || segment === ".." || !PATH_SEGMENT.test(segment)) {
      return `bad path segment ${JSON.stringify(segment)}`;
    }
  }
  if (value.startsWith("/inbox")) {
    return "must not point into the inbox";
  }
  return null;
}

/**
 * Field-by-field validation, same rules the orchestrator applies when it
 * reads the document back. Returns every problem, not just the first.
 */
export function validateForm(form: ConfigForm): FieldProblem[] {
  const problems: FieldProblem[] = [];
  const mode = form.mode.trim();
  if (mode === "") {
    problems.push({ field: "mode", problem: "required" });
  } else if (!(MODES as readonly string[]).includes(mode)) {
    problems.push({ field: "mode", problem: `unknown mode ${JSON.stringify(mode)}` });
  }

  const targetProblem = checkPodPath(form.target.trim() || DEFAULT_TARGET);
  if (targetProblem !== null) {
    problems.push({ field: "target", problem: targetProblem });
  }
  if (form.freebusy.trim() !== "") {
    const freebusyProblem = checkPodPath(form.freebusy.trim());
    if (freebusyProblem !== null) {
      problems.push({ field: "freebusy", problem: freebusyProblem });
    }
  }

  form.sources.forEach((source, index) => {
    if (source.url.trim() === "") {
      problems.push({ field: `sources[${index}]`, problem: "source url required" });
    }
  });
  if (mode === "HybridExternalFirst" && form.sources.length === 0) {
    problems.push({ field: "sources", problem: "HybridExternalFirst needs at least one source" });
  }

  const route = form.inboxRoute.trim();
  if (route !== "" && !(INBOX_ROUTES as readonly string[]).includes(route)) {
    problems.push({ field: "inboxRoute", problem: `unknown route ${JSON.stringify(route)}` });
  }
  if (mode === "SolidFirstHybrid" && route === "") {
    problems.push({ field: "inboxRoute", problem: "SolidFirstHybrid needs an inbox route" });
  }
  const pushUrl = form.pushUrl.trim();
  if (route === "SeparateRemoteCalendar" && pushUrl === "") {
    problems.push({ field: "pushUrl", problem: "SeparateRemoteCalendar needs a push url" });
  }
  if (pushUrl !== "" && !/^https?:\/\//.test(pushUrl)) {
    problems.push({ field: "pushUrl", problem: "must be an http(s) url" });
  }

  const hasStart = form.windowStart.trim() !== "";
  const hasEnd = form.windowEnd.trim() !== "";
  if (hasStart !== hasEnd) {
    problems.push({ field: "window", problem: "window start and end must appear together" });
  } else if (hasStart) {
    try {
      const start = parseIso(form.windowStart.trim());
      const end = parseIso(form.windowEnd.trim());
      if (!(start < end)) {
        problems.push({ field: "window", problem: "window start must precede end" });
      }
    } catch (e) {
      problems.push({ field: "window", problem: (e as Error).message });
    }
  }

  const interval = form.intervalSeconds.trim();
  if (!/^-?[0-9]+$/.test(interval)) {
    problems.push({ field: "interval", problem: "must be a whole number of seconds" });
  } else if (Number(interval) <= 0) {
    problems.push({ field: "interval", problem: "must be positive" });
  }

  return problems;
}

/** The settings document for a validated form; call validateForm first. */
export function encodeConfigDoc(form: ConfigForm): string {
  const statements = [
    statement(CONFIG_BASE, VOCAB + "mode", form.mode.trim()),
    statement(CONFIG_BASE, VOCAB + "target", form.target.trim() || DEFAULT_TARGET),
    statement(CONFIG_BASE, VOCAB + "interval", form.intervalSeconds.trim()),
  ];
  if (form.freebusy.trim() !== "") {
    statements.push(statement(CONFIG_BASE, VOCAB + "freebusy", form.freebusy.trim()));
  }
  if (form.inboxRoute.trim() !== "") {
    statements.push(statement(CONFIG_BASE, VOCAB + "inboxRoute", form.inboxRoute.trim()));
  }
  if (form.pushUrl.trim() !== "") {
    statements.push(statement(CONFIG_BASE, VOCAB + "pushUrl", form.pushUrl.trim()));
  }
  if (form.windowStart.trim() !== "") {
    statements.push(statement(CONFIG_BASE, VOCAB + "windowStart", form.windowStart.trim()));
    statements.push(statement(CONFIG_BASE, VOCAB + "windowEnd", form.windowEnd.trim()));
  }
  form.sources.forEach((source, index) => {
    const subject = `${CONFIG_BASE}#src-${String(index).padStart(4, "0")}`;
    statements.push(statement(subject, VOCAB + "source", source.url.trim()));
    statements.push(statement(subject, VOCAB + "sourceLabel", source.label.trim() || `source${index}`));
    statements.push(statement(subject, VOCAB + "sourceIndex", String(index)));
  });
  return encodeDoc(statements);
}
