#!/usr/bin/env node
/**
 * hartree4-render — static SVG figures from hartree4 run directories.
 *
 *   render <run_dir> [--kinds k1 k2 ...] [--format png|svg] [--out DIR]
 *
 * Figures are pure functions of the run directory: annotated slopes and
 * tolerances are copied verbatim from the manifest, nothing is recomputed.
 * Missing tables skip their kind with a warning; if every requested kind is
 * skipped the exit code is nonzero.  Output format is SVG; --format png is
 * reported as unsupported (no headless rasterizer in this environment).
 */

import { mkdirSync, writeFileSync } from "fs";
import path from "path";
import { RunArtifacts } from "./data.js";
import { RENDERERS, detectKinds } from "./render.js";

interface Args {
  runDir: string;
  kinds: string[];
  format: string;
  out: string | null;
}

export function parseArgs(argv: string[]): Args {
  const positional: string[] = [];
  const kinds: string[] = [];
  let format = "svg";
  let out: string | null = null;
  for (let i = 0; i < argv.length; i++) {
    const a = argv[i];
    if (a === "--kinds") {
      while (i + 1 < argv.length && !argv[i + 1].startsWith("--")) {
        kinds.push(argv[++i]);
      }
    } else if (a === "--format") {
      format = argv[++i];
    } else if (a === "--out") {
      out = argv[++i];
    } else if (a.startsWith("--")) {
      throw new Error(`unknown flag ${a}`);
    } else {
      positional.push(a);
    }
  }
  if (positional.length !== 1) {
    throw new Error("usage: render <run_dir> [--kinds ...] [--format png|svg] [--out DIR]");
  }
  return { runDir: positional[0], kinds, format, out };
}

export function main(argv: string[]): number {
  let args: Args;
  try {
    args = parseArgs(argv);
  } catch (e) {
    console.error(String(e instanceof Error ? e.message : e));
    return 2;
  }
  if (args.format === "png") {
    console.error("png output needs a rasterizer, which this environment lacks; use --format svg");
    return 2;
  }
  if (args.format !== "svg") {
    console.error(`unknown format '${args.format}' (svg supported)`);
    return 2;
  }

  let run: RunArtifacts;
  try {
    run = new RunArtifacts(args.runDir);
  } catch (e) {
    console.error(String(e instanceof Error ? e.message : e));
    return 2;
  }
  const outDir = args.out ?? path.join(args.runDir, "figures");
  mkdirSync(outDir, { recursive: true });

  const kinds = args.kinds.length ? args.kinds : detectKinds(run);
  if (!kinds.length) {
    console.error(`no renderable tables in ${args.runDir}`);
    return 1;
  }

  let rendered = 0;
  const pages: string[] = [];
  for (const kind of kinds) {
    const entry = RENDERERS[kind];
    if (!entry) {
      console.error(`skip '${kind}': unknown kind (have ${Object.keys(RENDERERS).join(", ")})`);
      continue;
    }
    const missing = entry.needs.filter((f) => !run.has(f));
    if (missing.length) {
      console.error(`skip '${kind}': missing ${missing.join(", ")}`);
      continue;
    }
    const svg = entry.renderer(run);
    const file = path.join(outDir, `${kind}.svg`);
    writeFileSync(file, svg);
    console.log(`wrote ${file}`);
    pages.push(svg);
    rendered++;
  }
  if (rendered > 0) {
    const report = [
      `<!DOCTYPE html><html><head><meta charset="utf-8"/>`,
      `<title>${run.manifest.subcommand} report</title></head><body>`,
      `<h1>${run.manifest.subcommand} — ${run.manifest.pass ? "PASS" : "FAIL"}</h1>`,
      ...pages,
      `</body></html>`,
    ].join("\n");
    writeFileSync(path.join(outDir, "report.html"), report);
    console.log(`wrote ${path.join(outDir, "report.html")}`);
  }
  return rendered > 0 ? 0 : 1;
}

const isMain = process.argv[1] && import.meta.url.endsWith(path.basename(process.argv[1]));
if (isMain) {
  process.exit(main(process.argv.slice(2)));
}
