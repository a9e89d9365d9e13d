import { inflateSync } from "node:zlib";

export interface Raster {
  width: number;
  height: number;
  /** row-major intensity, 0..255 */
  pixels: Uint8Array;
}

const PNG_SIGNATURE = Buffer.from([137, 80, 78, 71, 13, 10, 26, 10]);

function paeth(a: number, b: number, c: number): number {
  const p = a + b - c;
  const pa = Math.abs(p - a);
  const pb = Math.abs(p - b);
  const pc = Math.abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

/** Decode an 8-bit grayscale non-interlaced PNG (the only flavor the
 *  renderer emits). All five scanline filters are handled. */
export function decodePng(buf: Buffer): Raster {
  if (buf.length < 8 || !buf.subarray(0, 8).equals(PNG_SIGNATURE)) {
    throw new Error("not a PNG file");
  }
  let width = 0;
  let height = 0;
  const idat: Buffer[] = [];
  let sawIhdr = false;
  let pos = 8;
  while (pos + 8 <= buf.length) {
    const length = buf.readUInt32BE(pos);
    const type = buf.toString("latin1", pos + 4, pos + 8);
    const data = buf.subarray(pos + 8, pos + 8 + length);
    if (data.length < length) throw new Error("truncated PNG chunk");
    pos += 12 + length; // length + type + data + crc
    if (type === "IHDR") {
      width = data.readUInt32BE(0);
      height = data.readUInt32BE(4);
      const bitDepth = data[8];
      const colorType = data[9];
      const interlace = data[12];
      if (bitDepth !== 8) throw new Error(`unsupported bit depth ${bitDepth}`);
      if (colorType !== 0) throw new Error(`unsupported color type ${colorType}`);
      if (interlace !== 0) throw new Error("interlaced PNG not supported");
      sawIhdr = true;
    } else if (type === "IDAT") {
      idat.push(data);
    } else if (type === "IEND") {
      break;
    }
  }
  if (!sawIhdr || width === 0 || height === 0) throw new Error("missing or empty IHDR");
  if (idat.length === 0) throw new Error("PNG has no image data");

  let raw: Buffer;
  try {
    raw = inflateSync(Buffer.concat(idat));
  } catch (e) {
    throw new Error(`corrupt PNG image data: ${(e as Error).message}`);
  }
  const stride = width + 1;
  if (raw.length < stride * height) throw new Error("PNG image data too short");

  const pixels = new Uint8Array(width * height);
  for (let y = 0; y < height; y++) {
    const filter = raw[y * stride];
    const line = raw.subarray(y * stride + 1, (y + 1) * stride);
    const out = y * width;
    const prev = out - width;
    for (let x = 0; x < width; x++) {
      const left = x > 0 ? pixels[out + x - 1] : 0;
      const up = y > 0 ? pixels[prev + x] : 0;
      const upLeft = y > 0 && x > 0 ? pixels[prev + x - 1] : 0;
      let v = line[x];
      switch (filter) {
        case 0:
          break;
        case 1:
          v += left;
          break;
        case 2:
          v += up;
          break;
        case 3:
          v += (left + up) >> 1;
          break;
        case 4:
          v += paeth(left, up, upLeft);
          break;
        default:
          throw new Error(`unknown PNG filter ${filter}`);
      }
      pixels[out + x] = v & 0xff;
    }
  }
  return { width, height, pixels };
}

/** Decode a binary 8-bit PGM (P5, maxval <= 255). */
export function decodePgm(buf: Buffer): Raster {
  if (buf.length < 2 || buf[0] !== 0x50 || buf[1] !== 0x35) {
    throw new Error("not a binary PGM (P5) file");
  }
  const tokens: number[] = [];
  let pos = 2;
  while (tokens.length < 3 && pos < buf.length) {
    while (pos < buf.length && /\s/.test(String.fromCharCode(buf[pos]))) pos++;
    if (buf[pos] === 0x23) {
      // comment runs to end of line
      while (pos < buf.length && buf[pos] !== 0x0a && buf[pos] !== 0x0d) pos++;
      continue;
    }
    let start = pos;
    while (pos < buf.length && !/\s/.test(String.fromCharCode(buf[pos]))) pos++;
    tokens.push(parseInt(buf.toString("latin1", start, pos), 10));
  }
  if (tokens.length < 3 || tokens.some((t) => !Number.isFinite(t))) {
    throw new Error("malformed PGM header");
  }
  const [width, height, maxval] = tokens;
  if (maxval > 255) throw new Error(`16-bit PGM not supported (maxval ${maxval})`);
  pos += 1; // single whitespace after maxval
  const pixels = buf.subarray(pos, pos + width * height);
  if (pixels.length < width * height) throw new Error("PGM pixel data too short");
  return { width, height, pixels: new Uint8Array(pixels) };
}

export function decodeRaster(buf: Buffer, path: string): Raster {
  if (path.toLowerCase().endsWith(".pgm")) return decodePgm(buf);
  return decodePng(buf);
}
