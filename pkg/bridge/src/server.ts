/**
 * Line-JSON landmark detection server.
 *
 * Reads one request per stdin line:
 *   {"image_path": "<abs path>", "width": W, "height": H}
 * and answers with exactly one stdout line per request:
 *   {"detected": true, "landmarks": [{"index", "col", "row"} x68]}
 *   {"detected": false, "error": "<reason>"}
 *
 * Anything that is not a well-formed request still gets a single-line
 * detected=false response so the caller's request/response pairing
 * survives. Diagnostics go to stderr only. Exit 0 on stdin EOF, exit 1
 * when the model cannot be loaded.
 */

import { readFileSync, statSync } from "node:fs";
import { createInterface } from "node:readline";
import { resolve } from "node:path";
import { decodeRaster, Raster } from "./raster";
import { loadWeights, predictLandmarks, Weights } from "./model";

const DEFAULT_WEIGHTS = resolve(__dirname, "..", "..", "weights", "synthetic-shaded-68.json");

function weightsPath(argv: string[]): string {
  const flag = argv.indexOf("--weights");
  if (flag >= 0) {
    if (flag + 1 >= argv.length) {
      console.error("faceproj-bridge: --weights needs a path");
      process.exit(1);
    }
    return argv[flag + 1];
  }
  return process.env.FACEPROJ_BRIDGE_WEIGHTS ?? DEFAULT_WEIGHTS;
}

interface CacheEntry {
  mtimeMs: number;
  size: number;
  raster: Raster;
}

const cache = new Map<string, CacheEntry>();
const CACHE_CAP = 8;

function loadRaster(path: string): Raster {
  const st = statSync(path);
  const hit = cache.get(path);
  if (hit && hit.mtimeMs === st.mtimeMs && hit.size === st.size) {
    return hit.raster;
  }
  const raster = decodeRaster(readFileSync(path), path);
  cache.delete(path);
  cache.set(path, { mtimeMs: st.mtimeMs, size: st.size, raster });
  if (cache.size > CACHE_CAP) {
    const oldest = cache.keys().next().value as string;
    cache.delete(oldest);
  }
  return raster;
}

function respond(line: string, weights: Weights): string {
  let request: unknown;
  try {
    request = JSON.parse(line);
  } catch (e) {
    return JSON.stringify({
      detected: false,
      error: `malformed request: ${(e as Error).message}`,
    });
  }
  const imagePath = (request as { image_path?: unknown })?.image_path;
  if (typeof imagePath !== "string" || imagePath.length === 0) {
    return JSON.stringify({ detected: false, error: "malformed request: missing image_path" });
  }
  let raster: Raster;
  try {
    raster = loadRaster(imagePath);
  } catch (e) {
    return JSON.stringify({ detected: false, error: `unreadable image: ${(e as Error).message}` });
  }
  const landmarks = predictLandmarks(raster, weights);
  if (landmarks === null) {
    return JSON.stringify({ detected: false, error: "no face found" });
  }
  return JSON.stringify({ detected: true, landmarks });
}

export function main(): void {
  let weights: Weights;
  try {
    weights = loadWeights(weightsPath(process.argv.slice(2)));
  } catch (e) {
    console.error(`faceproj-bridge: ${(e as Error).message}`);
    process.exit(1);
  }

  const rl = createInterface({ input: process.stdin, terminal: false });
  rl.on("line", (line) => {
    if (line.trim().length === 0) return;
    process.stdout.write(respond(line, weights) + "\n");
  });
  rl.on("close", () => process.exit(0));
}

if (require.main === module) {
  main();
}
