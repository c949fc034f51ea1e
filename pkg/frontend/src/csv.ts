/** Roster CSV import/export mirroring the service's file format:
 * header `node_id,power_watts,location,data_volume,consistency,completeness`,
 * one node per line, RFC 4180 quoting. A file exported here feeds the
 * service's CSV loader unchanged, and vice versa.
 */

import type { RosterDraftRow } from "./state";

export const ROSTER_COLUMNS = [
  "node_id",
  "power_watts",
  "location",
  "data_volume",
  "consistency",
  "completeness",
] as const;

export class CsvError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "CsvError";
  }
}

function encodeField(value: string): string {
  if (/[",\n\r]/.test(value)) {
    return `"${value.replace(/"/g, '""')}"`;
  }
  return value;
}

export function rosterToCsv(rows: RosterDraftRow[]): string {
  const lines = [ROSTER_COLUMNS.join(",")];
  for (const row of rows) {
    lines.push(ROSTER_COLUMNS.map((column) => encodeField(row[column])).join(","));
  }
  return lines.join("\n") + "\n";
}

function parseRecords(text: string): string[][] {
  const records: string[][] = [];
  let record: string[] = [];
  let field = "";
  let quoted = false;
  let i = 0;
  const push = () => {
    record.push(field);
    field = "";
  };
  const endRecord = () => {
    push();
    // Skip blank lines (e.g. a trailing newline).
    if (record.length > 1 || (record[0] ?? "") !== "") {
      records.push(record);
    }
    record = [];
  };
  while (i < text.length) {
    const ch = text[i];
    if (quoted) {
      if (ch === '"') {
        if (text[i + 1] === '"') {
          field += '"';
          i += 2;
          continue;
        }
        quoted = false;
        i += 1;
        continue;
      }
      field += ch;
      i += 1;
      continue;
    }
    if (ch === '"' && field === "") {
      quoted = true;
      i += 1;
    } else if (ch === ",") {
      push();
      i += 1;
    } else if (ch === "\r") {
      i += text[i + 1] === "\n" ? 2 : 1;
      endRecord();
    } else if (ch === "\n") {
      i += 1;
      endRecord();
    } else {
      field += ch;
      i += 1;
    }
  }
  if (quoted) {
    throw new CsvError("unterminated quoted field");
  }
  if (field !== "" || record.length > 0) {
    endRecord();
  }
  return records;
}

export function rosterFromCsv(text: string): RosterDraftRow[] {
  const records = parseRecords(text);
  if (records.length === 0) {
    throw new CsvError("empty roster file");
  }
  const header = records[0] ?? [];
  if (header.join(",") !== ROSTER_COLUMNS.join(",")) {
    throw new CsvError(
      `roster file needs header ${ROSTER_COLUMNS.join(",")}, got ${header.join(",")}`,
    );
  }
  return records.slice(1).map((record, index) => {
    if (record.length !== ROSTER_COLUMNS.length) {
      throw new CsvError(
        `row ${index + 1} has ${record.length} fields, expected ${ROSTER_COLUMNS.length}`,
      );
    }
    const row = {} as Record<(typeof ROSTER_COLUMNS)[number], string>;
    ROSTER_COLUMNS.forEach((column, c) => {
      row[column] = record[c] ?? "";
    });
    return row;
  });
}
