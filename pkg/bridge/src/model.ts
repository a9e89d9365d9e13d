import { readFileSync } from "node:fs";
import type { Raster } from "./raster";

export const N_POINTS = 68;

export interface PoseTemplate {
  /** -1 when the shading centroid sits left of the face-box center, +1 right */
  skew: -1 | 1;
  /** 68 face-box-normalized [u, v] pairs */
  shape: [number, number][];
}

export interface Weights {
  name: string;
  version: number;
  foreground_threshold: number;
  min_foreground_px: number;
  poses: PoseTemplate[];
}

export interface FaceBox {
  x0: number;
  y0: number;
  width: number;
  height: number;
  area: number;
}

export interface LandmarkPoint {
  index: number;
  col: number;
  row: number;
}

export function loadWeights(path: string): Weights {
  let parsed: unknown;
  try {
    parsed = JSON.parse(readFileSync(path, "utf-8"));
  } catch (e) {
    throw new Error(`cannot load weights ${path}: ${(e as Error).message}`);
  }
  const w = parsed as Weights;
  if (typeof w !== "object" || w === null) throw new Error(`weights ${path}: not an object`);
  if (w.version !== 1) throw new Error(`weights ${path}: unsupported version ${w.version}`);
  if (!Array.isArray(w.poses) || w.poses.length === 0) {
    throw new Error(`weights ${path}: no pose templates`);
  }
  for (const pose of w.poses) {
    if (pose.skew !== -1 && pose.skew !== 1) {
      throw new Error(`weights ${path}: pose skew must be -1 or 1, got ${pose.skew}`);
    }
    if (!Array.isArray(pose.shape) || pose.shape.length !== N_POINTS) {
      throw new Error(
        `weights ${path}: pose skew ${pose.skew} has ${pose.shape?.length ?? 0} points, need ${N_POINTS}`
      );
    }
    for (const uv of pose.shape) {
      if (!Array.isArray(uv) || uv.length !== 2 || !uv.every(Number.isFinite)) {
        throw new Error(`weights ${path}: malformed shape entry ${JSON.stringify(uv)}`);
      }
    }
  }
  if (!Number.isFinite(w.foreground_threshold) || !Number.isFinite(w.min_foreground_px)) {
    throw new Error(`weights ${path}: missing detector parameters`);
  }
  return w;
}

/** Largest connected bright region, as a full-resolution bounding box.
 *  Components are labeled on a 4x-downsampled grid; faces are hundreds of
 *  pixels wide so the coarse grid cannot split one. */
export function findFaceBox(img: Raster, threshold: number, minPixels: number): FaceBox | null {
  const step = 4;
  const gw = Math.ceil(img.width / step);
  const gh = Math.ceil(img.height / step);
  const occupied = new Uint8Array(gw * gh);
  let brightCount = 0;
  for (let y = 0; y < img.height; y++) {
    const row = y * img.width;
    const gy = (y / step) | 0;
    for (let x = 0; x < img.width; x++) {
      if (img.pixels[row + x] > threshold) {
        brightCount++;
        occupied[gy * gw + ((x / step) | 0)] = 1;
      }
    }
  }
  if (brightCount < minPixels) return null;

  const labels = new Int32Array(gw * gh).fill(-1);
  let best: { gx0: number; gy0: number; gx1: number; gy1: number } | null = null;
  const queue: number[] = [];
  let nextLabel = 0;
  for (let start = 0; start < occupied.length; start++) {
    if (!occupied[start] || labels[start] >= 0) continue;
    let gx0 = gw, gy0 = gh, gx1 = -1, gy1 = -1;
    queue.length = 0;
    queue.push(start);
    labels[start] = nextLabel;
    while (queue.length) {
      const cell = queue.pop()!;
      const cx = cell % gw;
      const cy = (cell / gw) | 0;
      if (cx < gx0) gx0 = cx;
      if (cy < gy0) gy0 = cy;
      if (cx > gx1) gx1 = cx;
      if (cy > gy1) gy1 = cy;
      for (const [dx, dy] of [[1, 0], [-1, 0], [0, 1], [0, -1]] as const) {
        const nx = cx + dx;
        const ny = cy + dy;
        if (nx < 0 || ny < 0 || nx >= gw || ny >= gh) continue;
        const n = ny * gw + nx;
        if (occupied[n] && labels[n] < 0) {
          labels[n] = nextLabel;
          queue.push(n);
        }
      }
    }
    if (!best || (gx1 - gx0 + 1) * (gy1 - gy0 + 1) > (best.gx1 - best.gx0 + 1) * (best.gy1 - best.gy0 + 1)) {
      best = { gx0, gy0, gx1, gy1 };
    }
    nextLabel++;
  }
  if (!best) return null;
  const x0 = best.gx0 * step;
  const y0 = best.gy0 * step;
  const x1 = Math.min(img.width - 1, best.gx1 * step + step - 1);
  const y1 = Math.min(img.height - 1, best.gy1 * step + step - 1);
  return { x0, y0, width: x1 - x0 + 1, height: y1 - y0 + 1, area: brightCount };
}

/** Which way the head is turned. A head-on light puts the bright lobe on
 *  the side of the face still pointing at the camera, so the horizontal
 *  intensity centroid falls left or right of the box center. */
export function classifySkew(img: Raster, box: FaceBox): -1 | 1 {
  let weight = 0;
  let moment = 0;
  for (let y = box.y0; y < box.y0 + box.height; y++) {
    const base = y * img.width;
    for (let x = box.x0; x < box.x0 + box.width; x++) {
      const v = img.pixels[base + x];
      weight += v;
      moment += v * x;
    }
  }
  if (weight === 0) return 1;
  return moment / weight < box.x0 + (box.width - 1) / 2 ? -1 : 1;
}

export function predictLandmarks(img: Raster, weights: Weights): LandmarkPoint[] | null {
  const box = findFaceBox(img, weights.foreground_threshold, weights.min_foreground_px);
  if (box === null) return null;

  const skew = classifySkew(img, box);
  const pose = weights.poses.find((p) => p.skew === skew) ?? weights.poses[0];

  const out: LandmarkPoint[] = [];
  for (let index = 0; index < N_POINTS; index++) {
    const [u, v] = pose.shape[index];
    const col = Math.min(img.width - 1, Math.max(0, box.x0 + u * (box.width - 1)));
    const row = Math.min(img.height - 1, Math.max(0, box.y0 + v * (box.height - 1)));
    out.push({ index, col, row });
  }
  return out;
}
