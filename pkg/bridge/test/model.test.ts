import { mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { describe, expect, it } from "vitest";
import {
  classifySkew,
  findFaceBox,
  loadWeights,
  N_POINTS,
  predictLandmarks,
} from "../src/model";
import { decodePng } from "../src/raster";

const FIXTURES = join(__dirname, "fixtures");
const WEIGHTS = join(__dirname, "..", "weights", "synthetic-shaded-68.json");

const view1 = decodePng(readFileSync(join(FIXTURES, "view1.png")));
const view2 = decodePng(readFileSync(join(FIXTURES, "view2.png")));
const blank = decodePng(readFileSync(join(FIXTURES, "blank.png")));
const weights = loadWeights(WEIGHTS);

describe("loadWeights", () => {
  it("loads the shipped model", () => {
    expect(weights.version).toBe(1);
    expect(weights.poses.length).toBe(2);
    const skews = weights.poses.map((p) => p.skew).sort();
    expect(skews).toEqual([-1, 1]);
    for (const pose of weights.poses) expect(pose.shape.length).toBe(N_POINTS);
  });

  it("fails on a missing file", () => {
    expect(() => loadWeights("/nonexistent/weights.json")).toThrow(/cannot load/);
  });

  it("fails on a wrong version", () => {
    const dir = mkdtempSync(join(tmpdir(), "weights-"));
    const path = join(dir, "w.json");
    writeFileSync(path, JSON.stringify({ ...weights, version: 2 }));
    expect(() => loadWeights(path)).toThrow(/version/);
  });

  it("fails on an incomplete shape", () => {
    const dir = mkdtempSync(join(tmpdir(), "weights-"));
    const path = join(dir, "w.json");
    const broken = JSON.parse(JSON.stringify(weights));
    broken.poses[0].shape.pop();
    writeFileSync(path, JSON.stringify(broken));
    expect(() => loadWeights(path)).toThrow(/67 points/);
  });
});

describe("findFaceBox", () => {
  it("boxes the rendered head", () => {
    const box = findFaceBox(view1, 5, 400)!;
    expect(box).not.toBeNull();
    // the head fills a large central chunk of the 1024px frame
    expect(box.width).toBeGreaterThan(400);
    expect(box.height).toBeGreaterThan(500);
    expect(box.x0).toBeGreaterThan(50);
    expect(box.x0 + box.width).toBeLessThan(1000);
  });

  it("returns null for the blank image", () => {
    expect(findFaceBox(blank, 5, 400)).toBeNull();
  });
});

describe("classifySkew", () => {
  it("separates the two canonical views", () => {
    const s1 = classifySkew(view1, findFaceBox(view1, 5, 400)!);
    const s2 = classifySkew(view2, findFaceBox(view2, 5, 400)!);
    expect(s1).not.toBe(s2);
  });
});

describe("predictLandmarks", () => {
  it("returns all 68 indexed points inside the raster", () => {
    const pts = predictLandmarks(view1, weights)!;
    expect(pts.length).toBe(N_POINTS);
    expect(pts.map((p) => p.index)).toEqual([...Array(N_POINTS).keys()]);
    for (const p of pts) {
      expect(p.col).toBeGreaterThanOrEqual(0);
      expect(p.col).toBeLessThan(view1.width);
      expect(p.row).toBeGreaterThanOrEqual(0);
      expect(p.row).toBeLessThan(view1.height);
    }
  });

  it("is deterministic", () => {
    const a = predictLandmarks(view1, weights);
    const b = predictLandmarks(view1, weights);
    expect(a).toEqual(b);
  });

  it("uses different poses for the two views", () => {
    const a = predictLandmarks(view1, weights)!;
    const b = predictLandmarks(view2, weights)!;
    // nose tip projects on opposite sides of the frame center
    const mid = view1.width / 2;
    expect((a[30].col - mid) * (b[30].col - mid)).toBeLessThan(0);
  });

  it("returns null when there is nothing to detect", () => {
    expect(predictLandmarks(blank, weights)).toBeNull();
  });
});
