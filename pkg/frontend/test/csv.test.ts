import { describe, expect, it } from "vitest";
import { column, parseCsv, readTable } from "../src/csv";

describe("parseCsv", () => {
  it("splits plain rows", () => {
    expect(parseCsv("a,b\n1,2\n")).toEqual([["a", "b"], ["1", "2"]]);
  });

  it("handles quoted fields with commas and escaped quotes", () => {
    expect(parseCsv('a,"x, y",c\n"he said ""hi""",2,3')).toEqual([
      ["a", "x, y", "c"],
      ['he said "hi"', "2", "3"],
    ]);
  });

  it("handles CRLF and quoted newlines", () => {
    expect(parseCsv('a,b\r\n"line\nbreak",2\r\n')).toEqual([
      ["a", "b"],
      ["line\nbreak", "2"],
    ]);
  });

  it("keeps empty trailing fields", () => {
    expect(parseCsv("a,b,\n1,,3")).toEqual([["a", "b", ""], ["1", "", "3"]]);
  });
});

describe("readTable", () => {
  it("validates the header and drops blank lines", () => {
    const table = readTable("x,y\n1,2\n\n3,4\n", ["x", "y"]);
    expect(table.rows).toEqual([["1", "2"], ["3", "4"]]);
    expect(column(table, "y")).toEqual(["2", "4"]);
  });

  it("rejects a missing column", () => {
    expect(() => readTable("x,y\n1,2", ["z"])).toThrow(/missing column "z"/);
  });
});
