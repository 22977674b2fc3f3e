// Browser wiring: reads the forms, runs the flows with window.fetch, and
// swaps rendered HTML into the page. All logic lives in the flow modules so
// the tests can drive them without a DOM.

import { MeetingForm, ParticipantTarget } from "./booking";
import { ConfigForm, emptyForm } from "./config";
import {
  AvailabilityQuery,
  ParticipantSource,
  SessionProfile,
  bookSlot,
  configureOrchestrator,
  revokeOrchestratorAccess,
  viewAvailability,
} from "./flows";
import {
  renderAvailability,
  renderBookingOutcomes,
  renderFieldProblems,
  renderStatusRows,
  renderSyncReport,
  escapeHtml,
} from "./render";
import { parseDuration, parseIso } from "./time";

function el<T extends HTMLElement>(id: string): T {
  const found = document.getElementById(id);
  if (found === null) {
    throw new Error(`missing element #${id}`);
  }
  return found as T;
}

function inputValue(id: string): string {
  return el<HTMLInputElement>(id).value;
}

function session(): SessionProfile {
  return {
    userIri: inputValue("session-user"),
    podBase: inputValue("session-pod"),
    ownerSecret: inputValue("session-secret"),
    orchestratorBase: inputValue("session-orch"),
  };
}

// one line per participant: IRI WHITESPACE url [WHITESPACE token]
function parseParticipantLines(text: string): Array<{ iri: string; url: string; token?: string }> {
  const rows: Array<{ iri: string; url: string; token?: string }> = [];
  for (const line of text.split("\n")) {
    if (line.trim() === "") continue;
    const parts = line.trim().split(/\s+/);
    if (parts.length < 2 || parts.length > 3) {
      throw new Error(`want "iri url [token]": ${JSON.stringify(line)}`);
    }
    rows.push({ iri: parts[0] as string, url: parts[1] as string, token: parts[2] });
  }
  return rows;
}

async function runView(): Promise<void> {
  const out = el("view-result");
  try {
    const participants: ParticipantSource[] = parseParticipantLines(
      el<HTMLTextAreaElement>("view-participants").value,
    ).map((row) => ({ iri: row.iri, freebusyUrl: row.url, token: row.token }));
    const query: AvailabilityQuery = {
      windowStart: inputValue("view-start"),
      windowEnd: inputValue("view-end"),
      duration: inputValue("view-duration"),
      granularity: inputValue("view-granularity"),
    };
    const view = await viewAvailability(participants, query, fetch);
    out.innerHTML = renderAvailability(view);
    for (const button of out.querySelectorAll<HTMLButtonElement>("button.pick")) {
      button.addEventListener("click", () => {
        el<HTMLInputElement>("book-start").value = button.dataset["start"] ?? "";
        el<HTMLInputElement>("book-duration").value = inputValue("view-duration");
      });
    }
  } catch (e) {
    out.innerHTML = `<p class="problems">${escapeHtml((e as Error).message)}</p>`;
  }
}

async function runBook(): Promise<void> {
  const out = el("book-result");
  try {
    const via = el<HTMLSelectElement>("book-via").value === "external" ? "external" : "inbox";
    const participants: ParticipantTarget[] = parseParticipantLines(
      el<HTMLTextAreaElement>("book-participants").value,
    );
    const start = parseIso(inputValue("book-start"));
    const duration = parseDuration(inputValue("book-duration"));
    const meeting: MeetingForm = {
      uid: inputValue("book-uid"),
      summary: inputValue("book-summary"),
      organizer: session().userIri,
      slot: { start, end: start + duration },
      stamped: Math.floor(Date.now() / 1000),
    };
    const outcomes = await bookSlot(meeting, participants, via, fetch);
    out.innerHTML = renderBookingOutcomes(outcomes);
  } catch (e) {
    out.innerHTML = `<p class="problems">${escapeHtml((e as Error).message)}</p>`;
  }
}

function configForm(): ConfigForm {
  const form = emptyForm();
  form.mode = el<HTMLSelectElement>("cfg-mode").value;
  form.target = inputValue("cfg-target");
  form.intervalSeconds = inputValue("cfg-interval");
  form.freebusy = inputValue("cfg-freebusy");
  form.inboxRoute = el<HTMLSelectElement>("cfg-route").value;
  form.pushUrl = inputValue("cfg-push");
  form.windowStart = inputValue("cfg-window-start");
  form.windowEnd = inputValue("cfg-window-end");
  for (const line of el<HTMLTextAreaElement>("cfg-sources").value.split("\n")) {
    if (line.trim() === "") continue;
    const parts = line.trim().split(/\s+/);
    form.sources.push({ url: parts[0] as string, label: parts[1] ?? "" });
  }
  return form;
}

async function runConfigure(): Promise<void> {
  const out = el("cfg-result");
  try {
    const result = await configureOrchestrator(session(), configForm(), fetch);
    if (result.problems.length > 0) {
      out.innerHTML = renderFieldProblems(result.problems);
      return;
    }
    out.innerHTML =
      (result.report !== null ? renderSyncReport(result.report) : "") +
      renderStatusRows(result.status);
  } catch (e) {
    out.innerHTML = `<p class="problems">${escapeHtml((e as Error).message)}</p>`;
  }
}

async function runRevoke(): Promise<void> {
  const out = el("cfg-result");
  try {
    const { report, status } = await revokeOrchestratorAccess(session(), fetch);
    out.innerHTML = renderSyncReport(report) + renderStatusRows(status);
  } catch (e) {
    out.innerHTML = `<p class="problems">${escapeHtml((e as Error).message)}</p>`;
  }
}

document.addEventListener("DOMContentLoaded", () => {
  el("view-run").addEventListener("click", () => void runView());
  el("book-run").addEventListener("click", () => void runBook());
  el("cfg-run").addEventListener("click", () => void runConfigure());
  el("cfg-revoke").addEventListener("click", () => void runRevoke());
});
