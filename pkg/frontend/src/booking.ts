import { PodApi } from "./api";
import { FetchLike, HttpError, expectOk } from "./http";
import { encodeDoc, statement, VOCAB } from "./linkeddoc";
import { Interval, toIso } from "./time";

export const NOTIFY_BASE = "http://caldesk.example/notify/";
const NOTIFICATION_TYPE = VOCAB + "notificationType";

export interface MeetingForm {
  uid: string;
  summary: string;
  slot: Interval;
  organizer: string;
  /** stamp for the event version; the engine uses seconds since epoch */
  stamped: number;
}

export interface ParticipantTarget {
  iri: string;
  /** pod base url for inbox booking, calendar push url for external booking */
  url: string;
  token?: string;
}

export interface BookingOutcome {
  iri: string;
  ok: boolean;
  detail: string;
}

function checkMeeting(meeting: MeetingForm): void {
  if (meeting.uid === "" || /\s/.test(meeting.uid)) {
    throw new Error(`bad meeting uid: ${JSON.stringify(meeting.uid)}`);
  }
  // eslint-disable-next-line no-control-regex
  if (/[\x00-\x1f\x7f]/.test(meeting.summary)) {
    throw new Error("summary must not contain control characters");
  }
}

/**
 * The notification body the engine's inbox booking path sends: a one-event
 * calendar fragment plus the MeetingRequest type statement, sorted.
 */
export function meetingRequestDoc(meeting: MeetingForm): string {
  checkMeeting(meeting);
  const base = NOTIFY_BASE + meeting.uid;
  const subject = `${base}#ev-${meeting.uid}`;
  return encodeDoc([
    statement(base, VOCAB + "owner", meeting.organizer),
    statement(base, NOTIFICATION_TYPE, "MeetingRequest"),
    statement(subject, VOCAB + "uid", meeting.uid),
    statement(subject, VOCAB + "start", toIso(meeting.slot.start)),
    statement(subject, VOCAB + "end", toIso(meeting.slot.end)),
    statement(subject, VOCAB + "summary", meeting.summary),
    statement(subject, VOCAB + "sequence", "0"),
    statement(subject, VOCAB + "stamped", toIso(meeting.stamped)),
    statement(subject, VOCAB + "status", "Confirmed"),
    statement(subject, VOCAB + "origin", ""),
  ]);
}

function icsInstant(seconds: number): string {
  return toIso(seconds).replace(/[-:]/g, "");
}

function escapeIcsText(value: string): string {
  return value
    .replace(/\\/g, "\\\\")
    .replace(/;/g, "\\;")
    .replace(/,/g, "\\,")
    .replace(/\n/g, "\\n");
}

/** One VEVENT block in the external service's fixed property order. */
export function veventFragment(meeting: MeetingForm): string {
  checkMeeting(meeting);
  const lines = [
    "BEGIN:VEVENT",
    `UID:${meeting.uid}`,
    `DTSTAMP:${icsInstant(meeting.stamped)}`,
    `DTSTART:${icsInstant(meeting.slot.start)}`,
    `DTEND:${icsInstant(meeting.slot.end)}`,
    `SUMMARY:${escapeIcsText(meeting.summary)}`,
    "SEQUENCE:0",
    "STATUS:CONFIRMED",
    "END:VEVENT",
  ];
  return lines.join("\r\n") + "\r\n";
}

function failureDetail(e: unknown): string {
  if (e instanceof HttpError) {
    return `${e.status}: ${e.message}`;
  }
  return e instanceof Error ? e.message : String(e);
}

/** POST the meeting to every participant's pod inbox; failures collected per row. */
export async function bookViaInbox(
  meeting: MeetingForm,
  participants: ParticipantTarget[],
  fetchImpl: FetchLike,
): Promise<BookingOutcome[]> {
  const doc = meetingRequestDoc(meeting);
  const outcomes: BookingOutcome[] = [];
  for (const participant of participants) {
    const pod = new PodApi(participant.url, { token: participant.token }, fetchImpl);
    try {
      const id = await pod.postInbox(doc, "text/plain; charset=utf-8");
      outcomes.push({ iri: participant.iri, ok: true, detail: id });
    } catch (e) {
      outcomes.push({ iri: participant.iri, ok: false, detail: failureDetail(e) });
    }
  }
  return outcomes;
}

/** POST the meeting to every participant's external calendar events endpoint. */
export async function bookViaExternal(
  meeting: MeetingForm,
  participants: ParticipantTarget[],
  fetchImpl: FetchLike,
): Promise<BookingOutcome[]> {
  const body = veventFragment(meeting);
  const outcomes: BookingOutcome[] = [];
  for (const participant of participants) {
    const url = participant.url.replace(/\/+$/, "") + "/events";
    try {
      await expectOk("POST", url, await fetchImpl(url, {
        method: "POST",
        headers: { "Content-Type": "text/calendar; charset=utf-8" },
        body,
      }));
      outcomes.push({ iri: participant.iri, ok: true, detail: "created" });
    } catch (e) {
      outcomes.push({ iri: participant.iri, ok: false, detail: failureDetail(e) });
    }
  }
  return outcomes;
}
