import { FreeBusy } from "./freebusy";
import { coalesce, Interval } from "./time";

export class WindowMismatchError extends Error {}

/**
 * Grid-aligned candidate slots of `duration` seconds inside `window` that
 * intersect nobody's busy time. The grid is anchored at the window start
 * with `granularity` spacing. Every free/busy document must cover the whole
 * window: a coverage gap would be indistinguishable from free time.
 *
 * This mirrors the scheduling engine; `tests/slots.test.ts` holds the two
 * implementations to the same answers on a generated fixture set.
 */
export function jointAvailability(
  freebusies: FreeBusy[],
  window: Interval,
  duration: number,
  granularity: number,
): Interval[] {
  if (granularity <= 0 || duration < granularity) {
    throw new Error("need duration >= granularity > 0");
  }
  if (duration % 60 !== 0 || granularity % 60 !== 0) {
    throw new Error("duration and granularity must be whole minutes");
  }
  for (const fb of freebusies) {
    if (!(fb.window.start <= window.start && window.end <= fb.window.end)) {
      throw new WindowMismatchError(
        `${fb.owner} free/busy covers ${fb.window.start}..${fb.window.end}, ` +
        `query needs ${window.start}..${window.end}`,
      );
    }
  }

  const busy = coalesce(freebusies.flatMap((fb) => fb.busy));
  const slots: Interval[] = [];

  const emitRange = (freeStart: number, freeEnd: number): void => {
    // first grid point at or after freeStart
    const offset = freeStart - window.start;
    let start = window.start + Math.ceil(offset / granularity) * granularity;
    while (start + duration <= freeEnd) {
      slots.push({ start, end: start + duration });
      start += granularity;
    }
  };

  let cursor = window.start;
  for (const block of busy) {
    if (block.end <= window.start || block.start >= window.end) {
      continue;
    }
    if (block.start > cursor) {
      emitRange(cursor, Math.min(block.start, window.end));
    }
    cursor = Math.max(cursor, block.end);
  }
  if (cursor < window.end) {
    emitRange(cursor, window.end);
  }
  return slots;
}
