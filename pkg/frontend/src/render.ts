/**
 * Per-kind figure renderers.  Every annotated number (slopes, drifts,
 * tolerances) is copied verbatim from the run's manifest/JSON tables —
 * figures never recompute physics.
 */

import { RunArtifacts } from "./data.js";
import { buildChart, Series } from "./svg.js";

export type Renderer = (run: RunArtifacts) => string;

function asRecord(v: unknown): Record<string, any> {
  return v as Record<string, any>;
}

export function renderResidualOrder(run: RunArtifacts): string {
  const data = run.json("residual_order.json") as any;
  const series: Series[] = [];
  const annotations: string[] = [];
  for (const [N, entry] of Object.entries<any>(data.orders)) {
    // keys are separation values serialized by the producer ("8.0", …)
    const pairs = Object.entries<number>(entry.sup_norms)
      .map(([k, v]) => [Number(k), v] as [number, number])
      .sort((a, b) => a[0] - b[0]);
    series.push({
      label: `N=${N}`,
      x: pairs.map((p) => p[0]),
      y: pairs.map((p) => p[1]),
    });
    annotations.push(`N=${N}: slope ${entry.slope} (target ${entry.expected})`);
  }
  return buildChart({
    title: "Multisoliton residual decay",
    xLabel: "separation a",
    yLabel: "sup |residual|",
    series,
    logX: true,
    logY: true,
    annotations,
  });
}

export function renderMultipoleFit(run: RunArtifacts): string {
  const fits = run.json("fits.json") as any;
  const series: Series[] = [];
  const annotations: string[] = [];
  for (const [N, fit] of Object.entries<any>(fits)) {
    const pairs = Object.entries<number>(fit.errors)
      .map(([k, v]) => [Number(k), v] as [number, number])
      .sort((a, b) => a[0] - b[0]);
    series.push({
      label: `N=${N}`,
      x: pairs.map((p) => p[0]),
      y: pairs.map((p) => p[1]),
    });
    annotations.push(`N=${N}: slope ${fit.slope} ± ${fit.band}`);
  }
  return buildChart({
    title: "Multipole truncation error vs separation",
    xLabel: "separation a",
    yLabel: "weighted sup error",
    series,
    logX: true,
    logY: true,
    annotations,
  });
}

export function renderConservation(run: RunArtifacts): string {
  const ts = run.csv("timeseries.csv");
  const t = ts.col("t");
  const mass = ts.col("mass");
  const energy = ts.col("energy");
  const m0 = mass[0] || 1;
  const e0 = energy[0];
  const escale = Math.max(Math.abs(e0), 1e-12);
  const results = asRecord(run.manifest.results);
  const annotations = [
    `mass drift ${results.mass_drift}`,
    `energy drift ${results.energy_drift}`,
  ];
  return buildChart({
    title: "Conservation drift",
    xLabel: "t",
    yLabel: "relative drift",
    series: [
      { label: "|mass/mass0 - 1|", x: t, y: mass.map((m) => Math.abs(m / m0 - 1) + 1e-18) },
      { label: "|energy - E0|/|E0|", x: t, y: energy.map((e) => Math.abs(e - e0) / escale + 1e-18) },
    ],
    logY: true,
    annotations,
  });
}

export function renderBlowupRate(run: RunArtifacts): string {
  const ts = run.csv("pc_series.csv");
  const t = ts.col("t");
  const grad = ts.col("grad_norm");
  const law = ts.col("exact_law");
  const results = asRecord(run.manifest.results);
  return buildChart({
    title: "Pseudo-conformal gradient growth",
    xLabel: "|t|",
    yLabel: "gradient norm",
    series: [
      { label: "measured", x: t, y: grad },
      { label: "exact law sqrt(t^-2 |∇Q|^2 + |xQ|^2/4)", x: t, y: law, dashed: true, markers: false },
    ],
    logX: true,
    logY: true,
    annotations: [`max rel dev from law ${results.max_rel_dev_from_law}`],
  });
}

export function renderModTrajectory(run: RunArtifacts): string {
  const ts = run.csv("mod_path.csv");
  const t = ts.col("t");
  const a = ts.col("a");
  const mod = ts.col("Mod");
  const sel = t.map((_, i) => i).filter((i) => Number.isFinite(mod[i]) && mod[i] > 0);
  const results = asRecord(run.manifest.results);
  return buildChart({
    title: "Modulation trajectory: separation and ODE residual",
    xLabel: "t",
    yLabel: "a(t)  /  Mod(t)",
    series: [
      { label: "a(t)", x: sel.map((i) => t[i]), y: sel.map((i) => a[i]), markers: false },
      { label: "Mod(t)", x: sel.map((i) => t[i]), y: sel.map((i) => mod[i] + 1e-18), markers: false },
    ],
    logX: true,
    logY: true,
    annotations: [`max Mod ${results.max_mod}`],
  });
}

export function renderBodyPath(run: RunArtifacts): string {
  const ts = run.csv("path.csv");
  const t = ts.col("t");
  const a = ts.col("a");
  const sel = t.map((_, i) => i).filter((i) => t[i] > 0);
  const annotations: string[] = [];
  if (run.has("classification.json")) {
    const cls = run.json("classification.json") as any;
    annotations.push(`label: ${cls.label}`);
    for (const [pair, ex] of Object.entries<any>(cls.pair_exponents ?? {})) {
      annotations.push(`pair ${pair}: exponent ${ex}`);
    }
  }
  return buildChart({
    title: "Pair separation growth",
    xLabel: "t",
    yLabel: "min pair distance a(t)",
    series: [{ label: "a(t)", x: sel.map((i) => t[i]), y: sel.map((i) => a[i]), markers: false }],
    logX: true,
    logY: true,
    annotations,
  });
}

export const RENDERERS: Record<string, { renderer: Renderer; needs: string[] }> = {
  "residual-order": { renderer: renderResidualOrder, needs: ["residual_order.json"] },
  "multipole-fit": { renderer: renderMultipoleFit, needs: ["fits.json"] },
  conservation: { renderer: renderConservation, needs: ["timeseries.csv"] },
  "blowup-rate": { renderer: renderBlowupRate, needs: ["pc_series.csv"] },
  "mod-traj": { renderer: renderModTrajectory, needs: ["mod_path.csv"] },
  mbody: { renderer: renderBodyPath, needs: ["path.csv"] },
};

/** Figure kinds a run directory supports, inferred from its artifacts. */
export function detectKinds(run: RunArtifacts): string[] {
  return Object.entries(RENDERERS)
    .filter(([, v]) => v.needs.every((f) => run.has(f)))
    .map(([k]) => k);
}
