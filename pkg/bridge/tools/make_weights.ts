/**
 * Builds the shape-model weights from rendered fixtures.
 *
 * Usage: node make_weights.js FIXTURE_DIR OUT_JSON
 *
 * FIXTURE_DIR must hold view1.png/view1.json and view2.png/view2.json
 * (projection + calibration pairs) plus truth.landmarks3d.json, all
 * produced by the registration pipeline's `project` and `synth`
 * commands. The ten calibrated landmarks are projected into each view
 * and stored in face-box coordinates; the remaining 58 model points get
 * a fixed parametric face layout so downstream consumers always see a
 * complete 68-point shape.
 */

import { readFileSync, writeFileSync } from "node:fs";
import { join } from "node:path";
import { decodePng } from "../src/raster";
import { classifySkew, findFaceBox, N_POINTS, PoseTemplate, Weights } from "../src/model";

const FOREGROUND_THRESHOLD = 5;
const MIN_FOREGROUND_PX = 400;

interface Calibration {
  phi: number;
  pixel_pitch: number;
  s0: number;
  z0: number;
}

interface Truth {
  indices: number[];
  points: [number, number, number][];
}

/** Generic face layout for the points the fixtures cannot calibrate. */
function fillerShape(): [number, number][] {
  const shape: [number, number][] = new Array(N_POINTS);
  for (let k = 0; k <= 16; k++) {
    const t = (k / 16) * Math.PI;
    shape[k] = [0.5 - 0.47 * Math.cos(t), 0.32 + 0.64 * Math.sin(t)];
  }
  for (let k = 0; k < 5; k++) {
    const arch = 0.035 * Math.sin((k / 4) * Math.PI);
    shape[17 + k] = [0.17 + 0.055 * k, 0.30 - arch];
    shape[22 + k] = [0.61 + 0.055 * k, 0.30 - arch];
  }
  for (let k = 0; k < 4; k++) shape[27 + k] = [0.5, 0.33 + 0.065 * k];
  for (let k = 0; k < 5; k++) {
    shape[31 + k] = [0.4 + 0.05 * k, 0.60 + 0.015 * Math.sin((k / 4) * Math.PI)];
  }
  const eye: [number, number][] = [
    [-0.055, 0], [-0.027, -0.02], [0.027, -0.02], [0.055, 0], [0.027, 0.02], [-0.027, 0.02],
  ];
  eye.forEach(([du, dv], k) => {
    shape[36 + k] = [0.3 + du, 0.36 + dv];
    shape[42 + k] = [0.7 + du, 0.36 + dv];
  });
  for (let k = 0; k < 12; k++) {
    const t = Math.PI + (k / 12) * 2 * Math.PI;
    shape[48 + k] = [0.5 + 0.13 * Math.cos(t), 0.76 + 0.05 * Math.sin(t)];
  }
  for (let k = 0; k < 8; k++) {
    const t = Math.PI + (k / 8) * 2 * Math.PI;
    shape[60 + k] = [0.5 + 0.08 * Math.cos(t), 0.76 + 0.025 * Math.sin(t)];
  }
  return shape;
}

function measurePose(fixtureDir: string, view: string, truth: Truth): PoseTemplate {
  const img = decodePng(readFileSync(join(fixtureDir, `${view}.png`)));
  const cal = JSON.parse(readFileSync(join(fixtureDir, `${view}.json`), "utf-8")) as Calibration;
  const box = findFaceBox(img, FOREGROUND_THRESHOLD, MIN_FOREGROUND_PX);
  if (!box) throw new Error(`${view}: no foreground found in fixture render`);

  const shape = fillerShape();
  const cos = Math.cos(cal.phi);
  const sin = Math.sin(cal.phi);
  truth.indices.forEach((index, j) => {
    const [x, y, z] = truth.points[j];
    const col = cal.s0 + (x * cos - y * sin) / cal.pixel_pitch;
    const row = cal.z0 - z / cal.pixel_pitch;
    shape[index] = [(col - box.x0) / (box.width - 1), (row - box.y0) / (box.height - 1)];
  });

  return { skew: classifySkew(img, box), shape };
}

function main(): void {
  const [fixtureDir, outPath] = process.argv.slice(2);
  if (!fixtureDir || !outPath) {
    console.error("usage: make_weights.js FIXTURE_DIR OUT_JSON");
    process.exit(1);
  }
  const truth = JSON.parse(
    readFileSync(join(fixtureDir, "truth.landmarks3d.json"), "utf-8")
  ) as Truth;

  const poses = [
    measurePose(fixtureDir, "view1", truth),
    measurePose(fixtureDir, "view2", truth),
  ];
  if (poses[0].skew === poses[1].skew) {
    throw new Error(`fixture views classify to the same pose side ${poses[0].skew}`);
  }

  const weights: Weights = {
    name: "synthetic-shaded-68",
    version: 1,
    foreground_threshold: FOREGROUND_THRESHOLD,
    min_foreground_px: MIN_FOREGROUND_PX,
    poses,
  };
  writeFileSync(outPath, JSON.stringify(weights, null, 2) + "\n");
  console.error(`wrote ${outPath} (pose skews ${poses.map((p) => p.skew).join(", ")})`);
}

main();
