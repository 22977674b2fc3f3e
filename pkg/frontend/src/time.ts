// Instants are integer seconds since the Unix epoch, formatted strictly as
// ISO 8601 UTC with second precision. The pod engine works at the same
// precision, so numbers round-trip exactly.

export interface Interval {
  start: number;
  end: number;
}

const ISO = /^(\d{4})-(\d{2})-(\d{2})T(\d{2}):(\d{2}):(\d{2})Z$/;

export function parseIso(text: string): number {
  const m = ISO.exec(text);
  if (m === null) {
    throw new Error(`bad instant (want e.g. 2023-05-01T10:00:00Z): ${JSON.stringify(text)}`);
  }
  const [, y, mo, d, h, mi, s] = m;
  const millis = Date.UTC(
    Number(y), Number(mo) - 1, Number(d), Number(h), Number(mi), Number(s),
  );
  const seconds = millis / 1000;
  // Date.UTC silently rolls over out-of-range fields (month 13, minute 61)
  if (toIso(seconds) !== text || seconds < 0) {
    throw new Error(`bad instant: ${JSON.stringify(text)}`);
  }
  return seconds;
}

export function toIso(seconds: number): string {
  return new Date(seconds * 1000).toISOString().replace(/\.\d{3}Z$/, "Z");
}

export function parseDuration(text: string): number {
  const m = /^([0-9]+)([mh])$/.exec(text);
  if (m === null || Number(m[1]) === 0) {
    throw new Error(`bad duration (want e.g. 45m or 2h): ${JSON.stringify(text)}`);
  }
  return Number(m[1]) * (m[2] === "m" ? 60 : 3600);
}

export function interval(start: number, end: number): Interval {
  if (!(start < end)) {
    throw new Error(`interval start must precede end: ${toIso(start)} >= ${toIso(end)}`);
  }
  return { start, end };
}

export function overlaps(a: Interval, b: Interval): boolean {
  return a.start < b.end && b.start < a.end;
}

export function contains(outer: Interval, inner: Interval): boolean {
  return outer.start <= inner.start && inner.end <= outer.end;
}

/** Union of intervals as a sorted, disjoint, non-adjacent list. */
export function coalesce(intervals: Interval[]): Interval[] {
  const pending = [...intervals].sort((a, b) => a.start - b.start || a.end - b.end);
  const result: Interval[] = [];
  for (const iv of pending) {
    const last = result[result.length - 1];
    if (last !== undefined && iv.start <= last.end) {
      if (iv.end > last.end) {
        last.end = iv.end;
      }
    } else {
      result.push({ start: iv.start, end: iv.end });
    }
  }
  return result;
}
