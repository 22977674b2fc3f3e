import { OrchestratorApi, PodApi, StatusRow, SyncReportView } from "./api";
import {
  BookingOutcome,
  MeetingForm,
  ParticipantTarget,
  bookViaExternal,
  bookViaInbox,
} from "./booking";
import { CONFIG_PATH, ConfigForm, FieldProblem, encodeConfigDoc, validateForm } from "./config";
import { freeBusyFromDoc } from "./freebusy";
import { BusyRow, DayColumn, buildGrid } from "./grid";
import { FetchLike, HttpError } from "./http";
import { jointAvailability } from "./slots";
import { Interval, parseDuration, parseIso } from "./time";

export const ORCHESTRATOR_AGENT = "http://caldesk.example/agent/orchestrator";

export interface SessionProfile {
  userIri: string;
  podBase: string;
  ownerSecret: string;
  orchestratorBase: string;
}

// --- view availability -------------------------------------------------------

export interface ParticipantSource {
  iri: string;
  freebusyUrl: string;
  token?: string;
}

export interface AvailabilityQuery {
  windowStart: string;
  windowEnd: string;
  duration: string;
  granularity: string;
}

export interface ParticipantRow {
  iri: string;
  busy: Interval[] | null;
  error: string | null;
}

export interface AvailabilityView {
  problems: string[];
  rows: ParticipantRow[];
  slots: Interval[];
  grid: DayColumn[];
}

function parseQuery(query: AvailabilityQuery): { window: Interval; duration: number; granularity: number } {
  const problems: string[] = [];
  let window: Interval | null = null;
  let duration = 0;
  let granularity = 0;
  try {
    const start = parseIso(query.windowStart.trim());
    const end = parseIso(query.windowEnd.trim());
    if (!(start < end)) {
      problems.push("window start must precede end");
    } else {
      window = { start, end };
    }
  } catch (e) {
    problems.push((e as Error).message);
  }
  try {
    duration = parseDuration(query.duration.trim());
    granularity = parseDuration(query.granularity.trim());
    if (duration < granularity) {
      problems.push("duration must be at least the granularity");
    }
  } catch (e) {
    problems.push((e as Error).message);
  }
  if (problems.length > 0 || window === null) {
    throw new QueryProblems(problems);
  }
  return { window, duration, granularity };
}

class QueryProblems extends Error {
  constructor(public readonly problems: string[]) {
    super(problems.join("; "));
  }
}

/**
 * Fetch every participant's free/busy document and compute the joint slot
 * grid client-side. Per-participant failures become row errors; the slots
 * are computed over the rows that loaded.
 */
export async function viewAvailability(
  participants: ParticipantSource[],
  query: AvailabilityQuery,
  fetchImpl: FetchLike,
): Promise<AvailabilityView> {
  let parsed: ReturnType<typeof parseQuery>;
  try {
    parsed = parseQuery(query);
  } catch (e) {
    if (e instanceof QueryProblems) {
      return { problems: e.problems, rows: [], slots: [], grid: [] };
    }
    throw e;
  }
  const { window, duration, granularity } = parsed;

  const rows: ParticipantRow[] = [];
  for (const participant of participants) {
    const url = new URL(participant.freebusyUrl);
    const pod = new PodApi(url.origin, { token: participant.token }, fetchImpl);
    try {
      const { body } = await pod.getResource(url.pathname);
      const fb = freeBusyFromDoc(body);
      if (!(fb.window.start <= window.start && window.end <= fb.window.end)) {
        rows.push({ iri: participant.iri, busy: null, error: "unavailable: free/busy does not cover the window" });
        continue;
      }
      rows.push({ iri: participant.iri, busy: fb.busy, error: null });
    } catch (e) {
      if (e instanceof HttpError && (e.status === 401 || e.status === 403)) {
        rows.push({ iri: participant.iri, busy: null, error: "unavailable: no access" });
      } else {
        rows.push({ iri: participant.iri, busy: null, error: `unavailable: ${(e as Error).message}` });
      }
    }
  }

  const loaded = rows.filter((row) => row.busy !== null);
  if (participants.length > 0 && loaded.length === 0) {
    // with nobody's data an empty busy list would read as "everyone free"
    return { problems: [], rows, slots: [], grid: [] };
  }
  const slots = jointAvailability(
    loaded.map((row) => ({ owner: row.iri, window, busy: row.busy as Interval[] })),
    window,
    duration,
    granularity,
  );
  const busyRows: BusyRow[] = loaded.map((row) => ({ owner: row.iri, busy: row.busy as Interval[] }));
  return { problems: [], rows, slots, grid: buildGrid(busyRows, slots, window, granularity) };
}

// --- book a slot --------------------------------------------------------------

export async function bookSlot(
  meeting: MeetingForm,
  participants: ParticipantTarget[],
  via: "external" | "inbox",
  fetchImpl: FetchLike,
): Promise<BookingOutcome[]> {
  if (participants.length === 0) {
    throw new Error("a meeting needs at least one participant");
  }
  return via === "external"
    ? bookViaExternal(meeting, participants, fetchImpl)
    : bookViaInbox(meeting, participants, fetchImpl);
}

// --- configure the orchestrator ------------------------------------------------

export interface ConfigureResult {
  problems: FieldProblem[];
  report: SyncReportView | null;
  status: StatusRow[];
}

const ORCHESTRATOR_GRANTS = [
  `/settings/orchestrator ${ORCHESTRATOR_AGENT} R`,
  `/calendar ${ORCHESTRATOR_AGENT} RW`,
  `/inbox/ ${ORCHESTRATOR_AGENT} ARW`,
];

/**
 * Write the sync config to the pod, grant the orchestrator its standing
 * ACL entries, register if needed, then sync once and report. Validation
 * problems abort before anything is written.
 */
export async function configureOrchestrator(
  session: SessionProfile,
  form: ConfigForm,
  fetchImpl: FetchLike,
): Promise<ConfigureResult> {
  const problems = validateForm(form);
  if (problems.length > 0) {
    return { problems, report: null, status: [] };
  }
  const pod = new PodApi(session.podBase, { ownerSecret: session.ownerSecret }, fetchImpl);
  await pod.putResource(CONFIG_PATH, encodeConfigDoc(form), "text/plain; charset=utf-8");

  const acl = await pod.getAclLines();
  const missing = ORCHESTRATOR_GRANTS.filter((line) => !acl.includes(line));
  if (missing.length > 0) {
    await pod.putAclLines([...acl, ...missing]);
  }

  const orch = new OrchestratorApi(session.orchestratorBase, fetchImpl);
  const registered = (await orch.status()).some((row) => row.user === session.userIri);
  if (!registered) {
    await orch.register(session.userIri, session.podBase, session.ownerSecret);
  }
  const report = await orch.syncUser(session.userIri);
  return { problems: [], report, status: await orch.status() };
}

/**
 * Drop every ACL entry granted to the orchestrator agent. The next sync
 * reports PermissionDenied and the pod stops changing.
 */
export async function revokeOrchestratorAccess(
  session: SessionProfile,
  fetchImpl: FetchLike,
): Promise<{ report: SyncReportView; status: StatusRow[] }> {
  const pod = new PodApi(session.podBase, { ownerSecret: session.ownerSecret }, fetchImpl);
  const acl = await pod.getAclLines();
  const kept = acl.filter((line) => line.split(" ")[1] !== ORCHESTRATOR_AGENT);
  await pod.putAclLines(kept);

  const orch = new OrchestratorApi(session.orchestratorBase, fetchImpl);
  const report = await orch.syncUser(session.userIri);
  return { report, status: await orch.status() };
}
