/** Minimal CSV reader for the simulator's metrics files. */

export interface CsvData {
  header: string[];
  rows: Record<string, string>[];
}

function splitLine(line: string): string[] {
  // The metrics contract never embeds commas, but tolerate quoted fields.
  const out: string[] = [];
  let cur = "";
  let quoted = false;
  for (let i = 0; i < line.length; i++) {
    const c = line[i];
    if (quoted) {
      if (c === '"') {
        if (line[i + 1] === '"') {
          cur += '"';
          i++;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c === '"') {
      quoted = true;
    } else if (c === ",") {
      out.push(cur);
      cur = "";
    } else {
      cur += c;
    }
  }
  out.push(cur);
  return out;
}

export function parseCsv(text: string): CsvData {
  const lines = text.split(/\r?\n/).filter((l) => l.length > 0);
  if (lines.length === 0) {
    throw new Error("empty CSV input");
  }
  const header = splitLine(lines[0]);
  const rows = lines.slice(1).map((line, idx) => {
    const cells = splitLine(line);
    if (cells.length !== header.length) {
      throw new Error(
        `row ${idx + 2}: expected ${header.length} cells, got ${cells.length}`,
      );
    }
    const row: Record<string, string> = {};
    header.forEach((name, i) => {
      row[name] = cells[i];
    });
    return row;
  });
  return { header, rows };
}
