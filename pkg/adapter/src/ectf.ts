/**
 * Writer and reader for the ECTF tensor container.
 *
 * Layout (all integers little-endian u32): magic bytes `ECTF`, version
 * (=1), entry count; then per entry: name length, UTF-8 name, height,
 * width, channels, and height*width*channels float32 values in row-major
 * (row, col, channel) order. Entry order is preserved.
 */

const MAGIC = Buffer.from('ECTF', 'ascii');
const VERSION = 1;

export interface Entry {
  name: string;
  height: number;
  width: number;
  channels: number;
  /** row-major (row, col, channel), length = height*width*channels */
  data: Float32Array;
}

function checkFinite(entry: Entry): void {
  for (let i = 0; i < entry.data.length; i++) {
    if (!Number.isFinite(entry.data[i])) {
      throw new Error(`entry '${entry.name}' contains non-finite values`);
    }
  }
}

export function toBytes(entries: Entry[]): Buffer {
  const parts: Buffer[] = [MAGIC];
  const head = Buffer.alloc(8);
  head.writeUInt32LE(VERSION, 0);
  head.writeUInt32LE(entries.length, 4);
  parts.push(head);
  for (const entry of entries) {
    const {height, width, channels} = entry;
    if (entry.data.length !== height * width * channels) {
      throw new Error(
          `entry '${entry.name}' holds ${entry.data.length} values, ` +
          `expected ${height}*${width}*${channels}`);
    }
    checkFinite(entry);
    const name = Buffer.from(entry.name, 'utf-8');
    const meta = Buffer.alloc(16);
    meta.writeUInt32LE(name.length, 0);
    meta.writeUInt32LE(height, 4);
    meta.writeUInt32LE(width, 8);
    meta.writeUInt32LE(channels, 12);
    parts.push(meta.subarray(0, 4), name, meta.subarray(4));
    const payload = Buffer.alloc(entry.data.length * 4);
    for (let i = 0; i < entry.data.length; i++) {
      payload.writeFloatLE(entry.data[i], i * 4);
    }
    parts.push(payload);
  }
  return Buffer.concat(parts);
}

class Cursor {
  constructor(private readonly buf: Buffer, private pos = 0) {}

  bytes(n: number): Buffer {
    if (this.pos + n > this.buf.length) {
      throw new Error('truncated ECTF stream');
    }
    const out = this.buf.subarray(this.pos, this.pos + n);
    this.pos += n;
    return out;
  }

  u32(): number {
    return this.bytes(4).readUInt32LE(0);
  }
}

export function fromBytes(buf: Buffer): Entry[] {
  const cur = new Cursor(buf);
  if (!cur.bytes(4).equals(MAGIC)) {
    throw new Error('not an ECTF stream (bad magic)');
  }
  const version = cur.u32();
  if (version !== VERSION) {
    throw new Error(`unsupported ECTF version ${version}`);
  }
  const count = cur.u32();
  const entries: Entry[] = [];
  for (let i = 0; i < count; i++) {
    const name = cur.bytes(cur.u32()).toString('utf-8');
    const height = cur.u32();
    const width = cur.u32();
    const channels = cur.u32();
    const raw = cur.bytes(height * width * channels * 4);
    const data = new Float32Array(height * width * channels);
    for (let j = 0; j < data.length; j++) {
      data[j] = raw.readFloatLE(j * 4);
    }
    const entry = {name, height, width, channels, data};
    checkFinite(entry);
    entries.push(entry);
  }
  return entries;
}
