import { ChildProcess, execFile, spawn } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { OrchestratorApi, PodApi } from "../src/api";
import { MeetingForm, bookViaExternal } from "../src/booking";
import { emptyForm } from "../src/config";
import { Role, violations } from "../src/contract";
import {
  ORCHESTRATOR_AGENT,
  SessionProfile,
  bookSlot,
  configureOrchestrator,
  revokeOrchestratorAccess,
  viewAvailability,
} from "../src/flows";
import { Recorder, recordingFetch } from "../src/http";
import { parseIso, toIso } from "../src/time";

// The three flows against live servers: two pods, an external calendar
// service, and an orchestrator, all spawned from the engine's CLI. Every
// request the flows make goes through the recording fetch; the final test
// checks the whole session against the endpoint contract.

const ALICE = "http://alice.example/profile#me";
const BOB = "http://bob.example/profile#me";
const CAROL = "http://carol.example/profile#me";
const DEAD_POD = "http://127.0.0.1:9";

const WINDOW = { start: "2023-05-01T00:00:00Z", end: "2023-05-08T00:00:00Z" };
const QUERY = {
  windowStart: "2023-05-02T08:00:00Z",
  windowEnd: "2023-05-02T18:00:00Z",
  duration: "1h",
  granularity: "30m",
};

interface Server {
  child: ChildProcess;
  base: string;
}

function startServer(args: string[]): Promise<Server> {
  return new Promise((resolve, reject) => {
    const child = spawn("python3", ["-m", "caldesk.cli", ...args], {
      stdio: ["ignore", "pipe", "pipe"],
    });
    let out = "";
    let errOut = "";
    const onData = (chunk: Buffer): void => {
      out += chunk.toString();
      const line = out.split("\n").find((l) => l.includes(" on "));
      if (line !== undefined) {
        child.stdout?.off("data", onData);
        resolve({ child, base: line.slice(line.lastIndexOf(" on ") + 4).trim() });
      }
    };
    child.stdout?.on("data", onData);
    child.stderr?.on("data", (chunk: Buffer) => { errOut += chunk.toString(); });
    child.on("error", reject);
    child.on("exit", (code) => reject(new Error(`server exited early (${code}): ${errOut}`)));
  });
}

function stopServer(server: Server): void {
  server.child.removeAllListeners("exit");
  server.child.kill("SIGINT");
}

function cliFind(freebusyUrls: string[]): Promise<string[]> {
  const args = ["-m", "caldesk.cli", "schedule", "find"];
  for (const url of freebusyUrls) {
    args.push("--freebusy", url);
  }
  args.push(
    "--window-start", QUERY.windowStart,
    "--window-end", QUERY.windowEnd,
    "--duration", QUERY.duration,
    "--granularity", QUERY.granularity,
  );
  return new Promise((resolve, reject) => {
    execFile("python3", args, (error, stdout) => {
      if (error) reject(error);
      else resolve(stdout.split("\n").filter((line) => line !== ""));
    });
  });
}

describe("the three flows against live services", () => {
  let stateDir: string;
  let alicePod: Server;
  let bobPod: Server;
  let extcal: Server;
  let orch: Server;
  let recorder: Recorder;
  let roles: Map<string, Role>;
  let aliceSession: SessionProfile;
  let bobSession: SessionProfile;

  beforeAll(async () => {
    stateDir = mkdtempSync(join(tmpdir(), "caldesk-webui-"));
    [alicePod, bobPod, extcal, orch] = await Promise.all([
      startServer(["pod", "serve", "--root", join(stateDir, "alice"),
        "--owner", ALICE, "--secret", "alice-secret"]),
      startServer(["pod", "serve", "--root", join(stateDir, "bob"),
        "--owner", BOB, "--secret", "bob-secret"]),
      startServer(["extcal", "serve"]),
      // a long poll keeps background ticks out of the recorded session
      startServer(["orch", "serve", "--poll", "3600"]),
    ]);
    recorder = recordingFetch((url, init) => fetch(url, init));
    roles = new Map<string, Role>([
      [new URL(alicePod.base).origin, "pod"],
      [new URL(bobPod.base).origin, "pod"],
      [new URL(DEAD_POD).origin, "pod"],
      [new URL(extcal.base).origin, "external"],
      [new URL(orch.base).origin, "orchestrator"],
    ]);
    aliceSession = {
      userIri: ALICE,
      podBase: alicePod.base,
      ownerSecret: "alice-secret",
      orchestratorBase: orch.base,
    };
    bobSession = {
      userIri: BOB,
      podBase: bobPod.base,
      ownerSecret: "bob-secret",
      orchestratorBase: orch.base,
    };
  }, 30000);

  afterAll(() => {
    for (const server of [alicePod, bobPod, extcal, orch]) {
      if (server !== undefined) stopServer(server);
    }
    rmSync(stateDir, { recursive: true, force: true });
  });

  function participants() {
    return [
      { iri: ALICE, freebusyUrl: alicePod.base + "/calendar/freebusy" },
      { iri: BOB, freebusyUrl: bobPod.base + "/calendar/freebusy" },
    ];
  }

  it("rejects a hybrid config with zero sources before anything is written", async () => {
    const before = recorder.requests.length;
    const form = emptyForm();
    form.mode = "HybridExternalFirst";
    const result = await configureOrchestrator(aliceSession, form, recorder.fetch);
    expect(result.problems.map((p) => p.field)).toContain("sources");
    expect(result.report).toBeNull();
    expect(recorder.requests.length).toBe(before);
  });

  it("seeds a work meeting in the external calendar", async () => {
    const meeting: MeetingForm = {
      uid: "e-alice-busy",
      summary: "Existing work meeting",
      organizer: ALICE,
      stamped: parseIso("2023-05-01T08:00:00Z"),
      slot: { start: parseIso("2023-05-02T09:00:00Z"), end: parseIso("2023-05-02T10:00:00Z") },
    };
    const outcomes = await bookViaExternal(
      meeting,
      [{ iri: ALICE, url: extcal.base + "/cal/alice-work" }],
      recorder.fetch,
    );
    expect(outcomes).toEqual([{ iri: ALICE, ok: true, detail: "created" }]);
  }, 15000);

  it("configures alice to pull the external calendar and route her inbox", async () => {
    const form = emptyForm();
    form.mode = "SolidFirstHybrid";
    form.inboxRoute = "SeparateResource";
    form.freebusy = "/calendar/freebusy";
    form.windowStart = WINDOW.start;
    form.windowEnd = WINDOW.end;
    form.sources = [{ url: extcal.base + "/cal/alice-work.ics", label: "work" }];
    const result = await configureOrchestrator(aliceSession, form, recorder.fetch);
    expect(result.problems).toEqual([]);
    expect(result.report?.status).toBe("Ok");
    expect(result.report?.wroteTarget).toBe(true);
    expect(result.report?.sources).toContainEqual(["work", "fetched"]);
    expect(result.status.map((row) => [row.user, row.status])).toContainEqual([ALICE, "Ok"]);
  }, 15000);

  it("configures bob pod-only", async () => {
    const form = emptyForm();
    form.mode = "SolidOnly";
    form.freebusy = "/calendar/freebusy";
    form.windowStart = WINDOW.start;
    form.windowEnd = WINDOW.end;
    const result = await configureOrchestrator(bobSession, form, recorder.fetch);
    expect(result.problems).toEqual([]);
    expect(result.report?.status).toBe("Ok");
  }, 15000);

  it("renders participants whose pods deny reads as unavailable rows", async () => {
    const view = await viewAvailability(participants(), QUERY, recorder.fetch);
    expect(view.problems).toEqual([]);
    expect(view.rows.map((row) => row.error)).toEqual([
      "unavailable: no access",
      "unavailable: no access",
    ]);
    expect(view.slots).toEqual([]);
    expect(view.grid).toEqual([]);
  }, 15000);

  it("rejects an availability query with a backwards window", async () => {
    const before = recorder.requests.length;
    const view = await viewAvailability(
      participants(),
      { ...QUERY, windowStart: QUERY.windowEnd, windowEnd: QUERY.windowStart },
      recorder.fetch,
    );
    expect(view.problems).toEqual(["window start must precede end"]);
    expect(view.grid).toEqual([]);
    expect(recorder.requests.length).toBe(before);
  });

  it("lets the owners publish their free/busy and open their inboxes", async () => {
    for (const [server, secret] of [[alicePod, "alice-secret"], [bobPod, "bob-secret"]] as const) {
      const pod = new PodApi(server.base, { ownerSecret: secret }, recorder.fetch);
      const acl = await pod.getAclLines();
      await pod.putAclLines([
        ...acl,
        // the most specific path wins, so the public read grant on the
        // free/busy doc must restate the orchestrator's write access there
        "/calendar/freebusy * R",
        `/calendar/freebusy ${ORCHESTRATOR_AGENT} RW`,
        "/inbox/ * A",
      ]);
    }
  }, 15000);

  it("books bob into his own afternoon block through his inbox", async () => {
    const meeting: MeetingForm = {
      uid: "m-bob-busy",
      summary: "Focus time",
      organizer: BOB,
      stamped: parseIso("2023-05-01T08:30:00Z"),
      slot: { start: parseIso("2023-05-02T13:00:00Z"), end: parseIso("2023-05-02T14:00:00Z") },
    };
    const outcomes = await bookSlot(meeting, [{ iri: BOB, url: bobPod.base }], "inbox", recorder.fetch);
    expect(outcomes).toHaveLength(1);
    expect(outcomes[0]?.ok).toBe(true);

    const report = await new OrchestratorApi(orch.base, recorder.fetch).syncUser(BOB);
    expect(report.status).toBe("Ok");
    expect(report.consumed).toBeGreaterThanOrEqual(1);
  }, 15000);

  it("shows the joint grid and agrees with the engine's own slot search", async () => {
    const view = await viewAvailability(participants(), QUERY, recorder.fetch);
    expect(view.problems).toEqual([]);
    expect(view.rows.map((row) => row.error)).toEqual([null, null]);
    expect(view.rows[0]?.busy).toContainEqual({
      start: parseIso("2023-05-02T09:00:00Z"),
      end: parseIso("2023-05-02T10:00:00Z"),
    });
    expect(view.rows[1]?.busy).toContainEqual({
      start: parseIso("2023-05-02T13:00:00Z"),
      end: parseIso("2023-05-02T14:00:00Z"),
    });

    const engine = await cliFind(participants().map((p) => p.freebusyUrl));
    const mine = view.slots.map((slot) => `${toIso(slot.start)} ${toIso(slot.end)}`);
    expect(mine).toEqual(engine);
    expect(mine.length).toBeGreaterThan(0);
    expect(mine).not.toContain("2023-05-02T09:00:00Z 2023-05-02T10:00:00Z");
    expect(mine).toContain("2023-05-02T10:00:00Z 2023-05-02T11:00:00Z");
  }, 15000);

  it("books a joint slot with per-participant outcomes and a dead pod inline", async () => {
    const meeting: MeetingForm = {
      uid: "m-planning",
      summary: "Planning session",
      organizer: ALICE,
      stamped: parseIso("2023-05-01T12:00:00Z"),
      slot: { start: parseIso("2023-05-02T10:00:00Z"), end: parseIso("2023-05-02T11:00:00Z") },
    };
    const outcomes = await bookSlot(
      meeting,
      [
        { iri: ALICE, url: alicePod.base },
        { iri: BOB, url: bobPod.base },
        { iri: CAROL, url: DEAD_POD },
      ],
      "inbox",
      recorder.fetch,
    );
    expect(outcomes.map((o) => [o.iri, o.ok])).toEqual([
      [ALICE, true],
      [BOB, true],
      [CAROL, false],
    ]);

    const orchApi = new OrchestratorApi(orch.base, recorder.fetch);
    for (const user of [ALICE, BOB]) {
      const report = await orchApi.syncUser(user);
      expect(report.status).toBe("Ok");
      expect(report.consumed).toBeGreaterThanOrEqual(1);
    }

    // the booking landed in both pods' merged calendars
    const alicePodApi = new PodApi(alicePod.base, { ownerSecret: "alice-secret" }, recorder.fetch);
    const bobPodApi = new PodApi(bobPod.base, { ownerSecret: "bob-secret" }, recorder.fetch);
    expect((await alicePodApi.getResource("/calendar/combined")).body).toContain("m-planning");
    expect((await bobPodApi.getResource("/calendar/combined")).body).toContain("m-planning");
    // alice's inbox route materialized the notification as its own resource
    expect((await alicePodApi.getResource("/calendar/frominbox")).body).toContain("m-planning");
  }, 15000);

  it("stops offering the booked slot and still agrees with the engine", async () => {
    const view = await viewAvailability(participants(), QUERY, recorder.fetch);
    const mine = view.slots.map((slot) => `${toIso(slot.start)} ${toIso(slot.end)}`);
    expect(mine).toEqual(await cliFind(participants().map((p) => p.freebusyUrl)));
    expect(mine.map((line) => line.split(" ")[0])).not.toContain("2023-05-02T10:00:00Z");
    expect(mine.map((line) => line.split(" ")[0])).not.toContain("2023-05-02T10:30:00Z");
  }, 15000);

  it("revokes the orchestrator's access and sees the denial in the status", async () => {
    const { report, status } = await revokeOrchestratorAccess(aliceSession, recorder.fetch);
    expect(report.status).toBe("PermissionDenied");
    expect(status.find((row) => row.user === ALICE)?.status).toBe("PermissionDenied");
    expect(status.find((row) => row.user === BOB)?.status).toBe("Ok");
  }, 15000);

  it("made no request outside the documented endpoint contract", () => {
    expect(recorder.requests.length).toBeGreaterThan(30);
    expect(violations(recorder.requests, roles)).toEqual([]);
  });
});
