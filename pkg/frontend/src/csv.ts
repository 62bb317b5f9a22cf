export function parseCsv(text: string): string[][] {
  const result: string[][] = [];
  let row: string[] = [];
  let cur = "";
  let inQuotes = false;
  for (let i = 0; i < text.length; i++) {
    const ch = text[i];
    if (inQuotes) {
      if (ch === '"') {
        if (text[i + 1] === '"') {
          cur += '"';
          i++;
        } else {
          inQuotes = false;
        }
      } else {
        cur += ch;
      }
    } else if (ch === '"') {
      inQuotes = true;
    } else if (ch === ",") {
      row.push(cur);
      cur = "";
    } else if (ch === "\n" || ch === "\r") {
      if (ch === "\r" && text[i + 1] === "\n") i++;
      row.push(cur);
      result.push(row);
      row = [];
      cur = "";
    } else {
      cur += ch;
    }
  }
  if (cur !== "" || row.length > 0) {
    row.push(cur);
    result.push(row);
  }
  return result;
}

export interface Table {
  header: string[];
  rows: string[][];
}

export function readTable(text: string, expectedHeader: string[]): Table {
  const parsed = parseCsv(text).filter((r) => !(r.length === 1 && r[0] === ""));
  if (parsed.length === 0) throw new Error("empty CSV");
  const header = parsed[0];
  for (const name of expectedHeader) {
    if (!header.includes(name)) {
      throw new Error(`missing column "${name}" (got: ${header.join(", ")})`);
    }
  }
  return { header, rows: parsed.slice(1) };
}

export function column(table: Table, name: string): string[] {
  const idx = table.header.indexOf(name);
  if (idx < 0) throw new Error(`no column "${name}"`);
  return table.rows.map((r) => r[idx]);
}
