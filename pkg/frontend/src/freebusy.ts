import { groupBySubject, parseDoc } from "./linkeddoc";
import { contains, Interval, parseIso } from "./time";

export interface FreeBusy {
  owner: string;
  window: Interval;
  busy: Interval[];
}

/** Decode a `/calendar/freebusy` document as served by a pod. */
export function freeBusyFromDoc(text: string): FreeBusy {
  const subjects = groupBySubject(parseDoc(text));
  const baseSubjects = [...subjects.entries()].filter(([, fields]) => fields.has("owner"));
  if (baseSubjects.length !== 1) {
    throw new Error("expected exactly one owner statement");
  }
  const [base, fields] = baseSubjects[0] as [string, Map<string, string>];
  subjects.delete(base);
  const windowStart = fields.get("windowStart");
  const windowEnd = fields.get("windowEnd");
  if (windowStart === undefined || windowEnd === undefined) {
    throw new Error("free/busy document missing windowStart/windowEnd");
  }
  const window: Interval = { start: parseIso(windowStart), end: parseIso(windowEnd) };
  if (!(window.start < window.end)) {
    throw new Error(`bad free/busy window: ${windowStart}..${windowEnd}`);
  }

  const busy: Interval[] = [];
  for (const subject of [...subjects.keys()].sort()) {
    const busyFields = subjects.get(subject) as Map<string, string>;
    const start = busyFields.get("start");
    const end = busyFields.get("end");
    if (start === undefined || end === undefined) {
      throw new Error(`busy subject ${subject} missing start/end`);
    }
    const iv: Interval = { start: parseIso(start), end: parseIso(end) };
    if (!(iv.start < iv.end) || !contains(window, iv)) {
      throw new Error(`busy interval ${start}..${end} outside window`);
    }
    busy.push(iv);
  }
  let previous: Interval | undefined;
  for (const iv of busy) {
    if (previous !== undefined && previous.end >= iv.start) {
      throw new Error("busy intervals must be sorted, disjoint and coalesced");
    }
    previous = iv;
  }
  return { owner: fields.get("owner") as string, window, busy };
}
