import { describe, expect, it } from "vitest";

import { CsvError, ROSTER_COLUMNS, rosterFromCsv, rosterToCsv } from "../src/csv";
import { draftFromScenario } from "../src/state";
import type { ScenarioJson } from "../src/types";
import configFixture from "./fixtures/configuration1.json";

const config1 = configFixture as unknown as ScenarioJson;

describe("roster CSV", () => {
  it("uses the service's column order", () => {
    expect(ROSTER_COLUMNS.join(",")).toBe(
      "node_id,power_watts,location,data_volume,consistency,completeness",
    );
  });

  it("exports the bundled roster in the service file format", () => {
    const csv = rosterToCsv(draftFromScenario(config1).roster);
    const lines = csv.trimEnd().split("\n");
    expect(lines[0]).toBe("node_id,power_watts,location,data_volume,consistency,completeness");
    expect(lines).toHaveLength(13); // header + 12 nodes
    expect(lines[1]).toBe("n01,350,Finland,0.11,0.9,0.9");
  });

  it("round-trips rows through export and import", () => {
    const rows = draftFromScenario(config1).roster;
    expect(rosterFromCsv(rosterToCsv(rows))).toEqual(rows);
  });

  it("quotes and round-trips fields containing commas and quotes", () => {
    const rows = [
      {
        node_id: 'a"b',
        power_watts: "100",
        location: "Lab, East",
        data_volume: "0.5",
        consistency: "1",
        completeness: "1",
      },
    ];
    const csv = rosterToCsv(rows);
    expect(csv).toContain('"a""b"');
    expect(csv).toContain('"Lab, East"');
    expect(rosterFromCsv(csv)).toEqual(rows);
  });

  it("accepts CRLF line endings", () => {
    const text =
      "node_id,power_watts,location,data_volume,consistency,completeness\r\n" +
      "n1,100,Lab,0.5,1,1\r\n";
    expect(rosterFromCsv(text)).toEqual([
      {
        node_id: "n1",
        power_watts: "100",
        location: "Lab",
        data_volume: "0.5",
        consistency: "1",
        completeness: "1",
      },
    ]);
  });

  it("rejects files with the wrong header", () => {
    expect(() => rosterFromCsv("id,power\nn1,100\n")).toThrow(CsvError);
    expect(() => rosterFromCsv("id,power\nn1,100\n")).toThrow(
      /needs header node_id,power_watts/,
    );
  });

  it("rejects rows with missing fields, naming the row", () => {
    const text =
      "node_id,power_watts,location,data_volume,consistency,completeness\n" + "n1,100,Lab\n";
    expect(() => rosterFromCsv(text)).toThrow(/row 1 has 3 fields/);
  });

  it("rejects empty input and unterminated quotes", () => {
    expect(() => rosterFromCsv("")).toThrow(/empty roster file/);
    expect(() => rosterFromCsv('node_id,power_watts,location,data_volume,consistency,completeness\n"n1,100')).toThrow(
      /unterminated/,
    );
  });
});
