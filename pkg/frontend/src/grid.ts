import { Interval, overlaps, toIso } from "./time";

// Week-style availability grid: one column per UTC day in the window, one
// cell per granularity step. Cells know who is busy and whether they sit
// inside a bookable joint slot, so rendering is a straight map.

export interface BusyRow {
  owner: string;
  busy: Interval[];
}

export interface GridCell {
  start: number;
  end: number;
  busyOwners: string[];
  inSlot: boolean;
  slotStart: boolean;
}

export interface DayColumn {
  day: string; // YYYY-MM-DD
  cells: GridCell[];
}

const DAY = 86400;

export function buildGrid(
  rows: BusyRow[],
  slots: Interval[],
  window: Interval,
  granularity: number,
): DayColumn[] {
  const slotStarts = new Set(slots.map((slot) => slot.start));
  const columns: DayColumn[] = [];
  let column: DayColumn | null = null;
  for (let start = window.start; start < window.end; start += granularity) {
    const end = Math.min(start + granularity, window.end);
    const day = toIso(Math.floor(start / DAY) * DAY).slice(0, 10);
    if (column === null || column.day !== day) {
      column = { day, cells: [] };
      columns.push(column);
    }
    const cell: Interval = { start, end };
    column.cells.push({
      start,
      end,
      busyOwners: rows
        .filter((row) => row.busy.some((iv) => overlaps(iv, cell)))
        .map((row) => row.owner),
      inSlot: slots.some((slot) => slot.start <= start && end <= slot.end),
      slotStart: slotStarts.has(start),
    });
  }
  return columns;
}
