import { describe, expect, it, beforeAll } from "vitest";
import { mkdtempSync, writeFileSync, mkdirSync, readFileSync, existsSync } from "fs";
import { tmpdir } from "os";
import path from "path";

import { parseCsv, RunArtifacts } from "../src/data.js";
import { buildChart } from "../src/svg.js";
import { detectKinds, RENDERERS } from "../src/render.js";
import { main } from "../src/cli.js";

function makeRun(dir: string, manifest: object, files: Record<string, string>) {
  mkdirSync(dir, { recursive: true });
  writeFileSync(path.join(dir, "manifest.json"), JSON.stringify(manifest, null, 2));
  for (const [name, content] of Object.entries(files)) {
    writeFileSync(path.join(dir, name), content);
  }
}

const SLOPE_N1 = -3.2684215971;   // verbatim strings the figures must carry
const SLOPE_N2 = -4.0291038606;

function residualOrderRun(dir: string) {
  const orders = {
    "1": {
      sup_norms: { "8": 4.66e-2, "12": 1.226e-2, "16": 4.703e-3, "24": 1.291e-3 },
      slope: SLOPE_N1,
      expected: -3,
    },
    "2": {
      sup_norms: { "8": 3.995e-2, "12": 8.204e-3, "16": 2.641e-3, "24": 4.745e-4 },
      slope: SLOPE_N2,
      expected: -4,
    },
  };
  makeRun(dir, {
    subcommand: "residual-order",
    config: {}, results: { orders }, pass: true,
    files: ["residual_order.json"], versions: {},
  }, {
    "residual_order.json": JSON.stringify({ orders }),
  });
}

describe("csv parser", () => {
  it("parses columns and rows", () => {
    const t = parseCsv("t,mass,energy\n0,1.5,2.5\n1,1.6,2.4\n");
    expect(t.columns).toEqual(["t", "mass", "energy"]);
    expect(t.col("mass")).toEqual([1.5, 1.6]);
    expect(() => t.col("nope")).toThrow(/no column/);
  });
});

describe("svg builder", () => {
  it("renders series, labels and annotations", () => {
    const svg = buildChart({
      title: "T", xLabel: "x", yLabel: "y",
      series: [{ label: "s1", x: [1, 2, 4], y: [1, 0.5, 0.25] }],
      logX: true, logY: true,
      annotations: ["slope -2.000"],
    });
    expect(svg).toContain("<svg");
    expect(svg).toContain("slope -2.000");
    expect(svg).toContain("s1");
    expect(svg.match(/<circle/g)!.length).toBe(3);
  });

  it("rejects empty data", () => {
    expect(() => buildChart({
      title: "T", xLabel: "x", yLabel: "y",
      series: [{ label: "s", x: [NaN], y: [NaN] }],
    })).toThrow(/no finite data/);
  });
});

describe("run artifacts", () => {
  it("validates the manifest and file references", () => {
    const dir = mkdtempSync(path.join(tmpdir(), "run-"));
    writeFileSync(path.join(dir, "manifest.json"), JSON.stringify({
      subcommand: "evolve", config: {}, results: {},
      pass: true, files: ["missing.csv"],
    }));
    expect(() => new RunArtifacts(dir)).toThrow(/missing file/);
  });
});

describe("renderers", () => {
  it("residual-order figure carries manifest slopes verbatim", () => {
    const dir = mkdtempSync(path.join(tmpdir(), "run-"));
    residualOrderRun(dir);
    const run = new RunArtifacts(dir);
    expect(detectKinds(run)).toContain("residual-order");
    const svg = RENDERERS["residual-order"].renderer(run);
    // exact equality with the manifest values, no reformatting
    expect(svg).toContain(`slope ${SLOPE_N1}`);
    expect(svg).toContain(`slope ${SLOPE_N2}`);
    expect(svg).toContain("N=1");
    expect(svg).toContain("N=2");
  });

  it("conservation figure carries drift values verbatim", () => {
    const dir = mkdtempSync(path.join(tmpdir(), "run-"));
    const drift = 7.768060250143272e-14;
    makeRun(dir, {
      subcommand: "evolve", config: {},
      results: { mass_drift: drift, energy_drift: 2.6e-11 },
      pass: true, files: ["timeseries.csv"], versions: {},
    }, {
      "timeseries.csv":
        "t,mass,energy,energy_8pi2_form,momentum_0,momentum_1,momentum_2,momentum_3,variance\n" +
        "0.0,7.6948,0.0,-3.84,0,0,0,0,33.2\n0.05,7.6948,1e-12,-3.84,0,0,0,0,33.3\n" +
        "0.1,7.6948,2e-12,-3.84,0,0,0,0,33.4\n",
    });
    const run = new RunArtifacts(dir);
    const svg = RENDERERS["conservation"].renderer(run);
    expect(svg).toContain(`mass drift ${drift}`);
  });

  it("blow-up-rate figure overlays the exact law", () => {
    const dir = mkdtempSync(path.join(tmpdir(), "run-"));
    makeRun(dir, {
      subcommand: "pc-transform", config: {},
      results: { max_rel_dev_from_law: 0.004211 },
      pass: true, files: ["pc_series.csv"], versions: {},
    }, {
      "pc_series.csv": "t,grad_norm,exact_law,mass,rel_dev\n" +
        "1.0,3.87,3.86,7.69,0.002\n0.5,6.04,6.03,7.69,0.001\n0.25,11.4,11.39,7.69,0.0008\n",
    });
    const run = new RunArtifacts(dir);
    const svg = RENDERERS["blowup-rate"].renderer(run);
    expect(svg).toContain("max rel dev from law 0.004211");
    expect(svg).toContain("measured");
  });
});

describe("cli", () => {
  it("renders a run directory end to end", () => {
    const dir = mkdtempSync(path.join(tmpdir(), "run-"));
    residualOrderRun(dir);
    const code = main([dir]);
    expect(code).toBe(0);
    const fig = path.join(dir, "figures", "residual-order.svg");
    expect(existsSync(fig)).toBe(true);
    expect(readFileSync(fig, "utf-8")).toContain(`slope ${SLOPE_N1}`);
    expect(existsSync(path.join(dir, "figures", "report.html"))).toBe(true);
  });

  it("rejects png output with a usage error", () => {
    const dir = mkdtempSync(path.join(tmpdir(), "run-"));
    residualOrderRun(dir);
    expect(main([dir, "--format", "png"])).toBe(2);
  });

  it("skips kinds with missing tables and fails when all skipped", () => {
    const dir = mkdtempSync(path.join(tmpdir(), "run-"));
    makeRun(dir, {
      subcommand: "evolve", config: {}, results: {},
      pass: true, files: [], versions: {},
    }, {});
    expect(main([dir, "--kinds", "conservation"])).toBe(1);
  });

  it("rejects unknown flags and bad dirs", () => {
    expect(main(["--wat"])).toBe(2);
    expect(main(["/nonexistent-run-dir"])).toBe(2);
  });
});
