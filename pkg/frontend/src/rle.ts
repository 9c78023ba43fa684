/**
 * Run-length mask codec, mirroring the service's wire format:
 * "W,H:run,run,..." with runs alternating 0/1 and starting with zeros
 * (a leading 0-length run is legal when the mask begins with ones).
 */

export function encodeMaskRle(mask: Uint8Array, width: number, height: number): string {
  if (mask.length !== width * height) {
    throw new Error(`mask length ${mask.length} != ${width}x${height}`);
  }
  const runs: number[] = [];
  let current = 0;
  let count = 0;
  for (let i = 0; i < mask.length; i++) {
    const v = mask[i] ? 1 : 0;
    if (v === current) {
      count++;
    } else {
      runs.push(count);
      current = v;
      count = 1;
    }
  }
  runs.push(count);
  return `${width},${height}:${runs.join(",")}`;
}

export function decodeMaskRle(text: string): { mask: Uint8Array; width: number; height: number } {
  const sep = text.indexOf(":");
  if (sep < 0) throw new Error("malformed RLE: missing ':'");
  const dims = text.slice(0, sep).split(",");
  if (dims.length !== 2) throw new Error("malformed RLE: bad dimensions");
  const width = Number(dims[0]);
  const height = Number(dims[1]);
  if (!Number.isInteger(width) || !Number.isInteger(height) || width <= 0 || height <= 0) {
    throw new Error("malformed RLE: bad dimensions");
  }
  const body = text.slice(sep + 1);
  const runs = body.length ? body.split(",").map(Number) : [];
  if (runs.some((r) => !Number.isInteger(r) || r < 0)) throw new Error("malformed RLE: bad run");
  const total = runs.reduce((a, b) => a + b, 0);
  if (total !== width * height) {
    throw new Error(`malformed RLE: runs cover ${total}, expected ${width * height}`);
  }
  const mask = new Uint8Array(width * height);
  let pos = 0;
  let value = 0;
  for (const r of runs) {
    if (value) mask.fill(1, pos, pos + r);
    pos += r;
    value ^= 1;
  }
  return { mask, width, height };
}
