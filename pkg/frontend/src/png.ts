/**
 * Minimal PNG writer for canvas exports.
 *
 * Uses stored (uncompressed) deflate blocks so it is synchronous and
 * dependency-free in both browser and Node; output is a legal PNG that any
 * decoder (including the service's) accepts. Grayscale input only, which is
 * exactly what sketch and mask layers are.
 */

const CRC_TABLE = (() => {
  const table = new Uint32Array(256);
  for (let n = 0; n < 256; n++) {
    let c = n;
    for (let k = 0; k < 8; k++) c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
    table[n] = c >>> 0;
  }
  return table;
})();

function crc32(bytes: Uint8Array): number {
  let c = 0xffffffff;
  for (let i = 0; i < bytes.length; i++) c = CRC_TABLE[(c ^ bytes[i]) & 0xff] ^ (c >>> 8);
  return (c ^ 0xffffffff) >>> 0;
}

function adler32(bytes: Uint8Array): number {
  let a = 1;
  let b = 0;
  for (let i = 0; i < bytes.length; i++) {
    a = (a + bytes[i]) % 65521;
    b = (b + a) % 65521;
  }
  return ((b << 16) | a) >>> 0;
}

function u32(v: number): Uint8Array {
  return new Uint8Array([(v >>> 24) & 0xff, (v >>> 16) & 0xff, (v >>> 8) & 0xff, v & 0xff]);
}

function chunk(type: string, body: Uint8Array): Uint8Array {
  const tag = new TextEncoder().encode(type);
  const payload = new Uint8Array(tag.length + body.length);
  payload.set(tag);
  payload.set(body, tag.length);
  const out = new Uint8Array(8 + payload.length + 4);
  out.set(u32(body.length));
  out.set(payload, 4);
  out.set(u32(crc32(payload)), 8 + body.length);
  return out;
}

/** Raw scanlines -> zlib stream made of stored deflate blocks. */
function storedDeflate(raw: Uint8Array): Uint8Array {
  const MAX = 65535;
  const blocks = Math.max(1, Math.ceil(raw.length / MAX));
  const out = new Uint8Array(2 + blocks * 5 + raw.length + 4);
  out[0] = 0x78; // zlib header, 32k window
  out[1] = 0x01;
  let w = 2;
  for (let i = 0; i < blocks; i++) {
    const start = i * MAX;
    const len = Math.min(MAX, raw.length - start);
    out[w++] = i === blocks - 1 ? 1 : 0; // BFINAL
    out[w++] = len & 0xff;
    out[w++] = (len >>> 8) & 0xff;
    out[w++] = ~len & 0xff;
    out[w++] = (~len >>> 8) & 0xff;
    out.set(raw.subarray(start, start + len), w);
    w += len;
  }
  out.set(u32(adler32(raw)), w);
  return out;
}

/** Encode H*W grayscale values in [0,1] (row-major) as an 8-bit PNG. */
export function encodeGrayPng(pixels: Float32Array | Uint8Array, width: number, height: number): Uint8Array {
  if (pixels.length !== width * height) {
    throw new Error(`pixel count ${pixels.length} != ${width}x${height}`);
  }
  const raw = new Uint8Array(height * (width + 1)); // filter byte 0 per row
  for (let y = 0; y < height; y++) {
    const row = y * (width + 1);
    for (let x = 0; x < width; x++) {
      const v = pixels[y * width + x];
      const byte = pixels instanceof Uint8Array ? v : Math.max(0, Math.min(255, Math.round(v * 255)));
      raw[row + 1 + x] = byte;
    }
  }
  const ihdr = new Uint8Array(13);
  ihdr.set(u32(width));
  ihdr.set(u32(height), 4);
  ihdr[8] = 8; // bit depth
  ihdr[9] = 0; // grayscale
  const png = [
    new Uint8Array([0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a]),
    chunk("IHDR", ihdr),
    chunk("IDAT", storedDeflate(raw)),
    chunk("IEND", new Uint8Array(0)),
  ];
  const total = png.reduce((n, part) => n + part.length, 0);
  const out = new Uint8Array(total);
  let w = 0;
  for (const part of png) {
    out.set(part, w);
    w += part.length;
  }
  return out;
}

export function bytesToB64(bytes: Uint8Array): string {
  if (typeof btoa === "function") {
    let bin = "";
    for (let i = 0; i < bytes.length; i++) bin += String.fromCharCode(bytes[i]);
    return btoa(bin);
  }
  // Node test environment
  return Buffer.from(bytes).toString("base64");
}

export function grayPngB64(pixels: Float32Array | Uint8Array, width: number, height: number): string {
  return bytesToB64(encodeGrayPng(pixels, width, height));
}
