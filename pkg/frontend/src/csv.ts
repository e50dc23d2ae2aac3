// Minimal CSV handling for the service's export endpoints. The console
// renders served numbers as-is and adds no numerical logic of its own.

export interface CsvTable {
  header: string[];
  rows: string[][];
}

export function parseCsv(text: string): CsvTable {
  const lines = text
    .split(/\r?\n/)
    .filter((ln) => ln.length > 0 && !ln.startsWith('#'));
  if (lines.length === 0) return { header: [], rows: [] };
  const header = (lines[0] ?? '').split(',');
  const rows = lines.slice(1).map((ln) => ln.split(','));
  return { header, rows };
}

export interface FluenceSample {
  x: number;
  y: number;
  fluence: number;
}

export function fluenceSamples(table: CsvTable): FluenceSample[] {
  return table.rows.map((r) => ({
    x: Number(r[0]),
    y: Number(r[1]),
    fluence: Number(r[2]),
  }));
}

export interface ProfilePoint {
  positionUm: number;
  field: number | null;
  voltage: number | null;
  bounded: boolean;
}

export function profilePoints(table: CsvTable): ProfilePoint[] {
  return table.rows.map((r) => ({
    positionUm: Number(r[0]),
    field: r[1] === '' ? null : Number(r[1]),
    voltage: r[2] === '' ? null : Number(r[2]),
    bounded: r[4] === '1',
  }));
}
