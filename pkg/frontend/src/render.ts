import { StatusRow, SyncReportView } from "./api";
import { BookingOutcome } from "./booking";
import { FieldProblem } from "./config";
import { AvailabilityView } from "./flows";
import { toIso } from "./time";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function timeOfDay(seconds: number): string {
  return toIso(seconds).slice(11, 16);
}

export function renderAvailability(view: AvailabilityView): string {
  if (view.problems.length > 0) {
    const items = view.problems.map((p) => `<li>${escapeHtml(p)}</li>`).join("");
    return `<div class="problems"><p>Fix the query:</p><ul>${items}</ul></div>`;
  }
  const legend = view.rows
    .map((row) => {
      const state = row.error !== null
        ? `<span class="row-error">${escapeHtml(row.error)}</span>`
        : `${row.busy?.length ?? 0} busy`;
      return `<li><code>${escapeHtml(row.iri)}</code> ${state}</li>`;
    })
    .join("");

  const columns = view.grid
    .map((column) => {
      const cells = column.cells
        .map((cell) => {
          const classes = ["cell"];
          if (cell.busyOwners.length > 0) classes.push("busy");
          if (cell.inSlot) classes.push("slot");
          if (cell.slotStart) classes.push("slot-start");
          const title = cell.busyOwners.length > 0
            ? ` title="busy: ${escapeHtml(cell.busyOwners.join(", "))}"`
            : "";
          const mark = cell.slotStart
            ? `<button class="pick" data-start="${toIso(cell.start)}">${timeOfDay(cell.start)}</button>`
            : timeOfDay(cell.start);
          return `<div class="${classes.join(" ")}"${title}>${mark}</div>`;
        })
        .join("");
      return `<div class="day"><div class="day-head">${column.day}</div>${cells}</div>`;
    })
    .join("");

  const slotList = view.slots.length === 0
    ? "<p>No joint slots in this window.</p>"
    : `<ol class="slots">${view.slots
        .map((slot) => `<li>${toIso(slot.start)} – ${toIso(slot.end)}</li>`)
        .join("")}</ol>`;

  return `<ul class="legend">${legend}</ul><div class="grid">${columns}</div>${slotList}`;
}

export function renderBookingOutcomes(outcomes: BookingOutcome[]): string {
  const rows = outcomes
    .map((outcome) => {
      const cls = outcome.ok ? "ok" : "failed";
      return `<li class="${cls}"><code>${escapeHtml(outcome.iri)}</code> ` +
        `${outcome.ok ? "booked" : "failed"}: ${escapeHtml(outcome.detail)}</li>`;
    })
    .join("");
  return `<ul class="outcomes">${rows}</ul>`;
}

export function renderFieldProblems(problems: FieldProblem[]): string {
  if (problems.length === 0) return "";
  const items = problems
    .map((p) => `<li><strong>${escapeHtml(p.field)}</strong>: ${escapeHtml(p.problem)}</li>`)
    .join("");
  return `<ul class="problems">${items}</ul>`;
}

export function renderSyncReport(report: SyncReportView): string {
  const sources = report.sources
    .map(([label, state]) => `<li>${escapeHtml(label)}: ${escapeHtml(state)}</li>`)
    .join("");
  const conflicts = report.conflicts
    .map(([a, b]) => `<li>${escapeHtml(a)} ↔ ${escapeHtml(b)}</li>`)
    .join("");
  return (
    `<dl class="report">` +
    `<dt>status</dt><dd class="status-${escapeHtml(report.status)}">${escapeHtml(report.status)}</dd>` +
    `<dt>wrote target</dt><dd>${report.wroteTarget ? "yes" : "no"}</dd>` +
    `<dt>notifications consumed</dt><dd>${report.consumed}</dd>` +
    (sources ? `<dt>sources</dt><dd><ul>${sources}</ul></dd>` : "") +
    (conflicts ? `<dt>conflicts</dt><dd><ul>${conflicts}</ul></dd>` : "") +
    (report.detail ? `<dt>detail</dt><dd>${escapeHtml(report.detail)}</dd>` : "") +
    `</dl>`
  );
}

export function renderStatusRows(rows: StatusRow[]): string {
  const body = rows
    .map((row) =>
      `<tr><td><code>${escapeHtml(row.user)}</code></td>` +
      `<td>${escapeHtml(row.status)}</td><td>${escapeHtml(row.lastSync)}</td></tr>`)
    .join("");
  return `<table class="status"><thead><tr><th>user</th><th>status</th><th>last sync</th></tr></thead>` +
    `<tbody>${body}</tbody></table>`;
}
