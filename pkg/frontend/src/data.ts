/**
 * Run-directory loading: manifest.json + lazily parsed CSV/JSON tables.
 * Read-only consumer — figures are pure functions of the run directory.
 */

import { readFileSync, existsSync } from "fs";
import path from "path";

export interface Manifest {
  subcommand: string;
  config: Record<string, unknown>;
  results: Record<string, unknown>;
  pass: boolean;
  files: string[];
  versions: Record<string, string>;
}

export interface CsvTable {
  columns: string[];
  rows: number[][];
  col(name: string): number[];
}

export class RunArtifacts {
  readonly dir: string;
  readonly manifest: Manifest;
  private tables = new Map<string, CsvTable>();

  constructor(dir: string) {
    this.dir = dir;
    const mpath = path.join(dir, "manifest.json");
    if (!existsSync(mpath)) {
      throw new Error(`not a run directory (no manifest.json): ${dir}`);
    }
    const raw = JSON.parse(readFileSync(mpath, "utf-8"));
    for (const key of ["subcommand", "config", "results", "files"]) {
      if (!(key in raw)) {
        throw new Error(`manifest missing required key '${key}': ${mpath}`);
      }
    }
    this.manifest = raw as Manifest;
    for (const f of this.manifest.files) {
      if (!existsSync(path.join(dir, f))) {
        throw new Error(`manifest references missing file: ${f}`);
      }
    }
  }

  has(name: string): boolean {
    return existsSync(path.join(this.dir, name));
  }

  json(name: string): Record<string, unknown> {
    return JSON.parse(readFileSync(path.join(this.dir, name), "utf-8"));
  }

  csv(name: string): CsvTable {
    const cached = this.tables.get(name);
    if (cached) return cached;
    const text = readFileSync(path.join(this.dir, name), "utf-8");
    const table = parseCsv(text);
    this.tables.set(name, table);
    return table;
  }
}

export function parseCsv(text: string): CsvTable {
  const lines = text.trim().split("\n");
  const columns = lines[0].split(",").map((s) => s.trim());
  const rows = lines.slice(1).map((line) => line.split(",").map(Number));
  return {
    columns,
    rows,
    col(name: string): number[] {
      const i = columns.indexOf(name);
      if (i < 0) throw new Error(`no column '${name}' (have ${columns.join(", ")})`);
      return rows.map((r) => r[i]);
    },
  };
}
