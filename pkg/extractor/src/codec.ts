/**
 * Binary formats shared with the engine, little-endian throughout.
 *
 * Batch file:  "DLXB" u16 version, u32 dim, u16 layerCount, u16 layerIds[],
 *              u32 recordCount, then per record: u16 wordLen + UTF-8,
 *              u64 sentenceId, one f32[dim] per layer in increasing order.
 * Frames:      u32 payloadLength + payload.
 * Request:     "DLXQ" u16 version, u32 seq, u32 count, per request:
 *              u32 sentenceLen + UTF-8, u32 start, u32 end,
 *              u8 hasReplacement, [u16 len + UTF-8].
 * Response:    "DLXR" u16 version, u32 seq, u32 dim, u16 layerCount,
 *              u16 layerIds[], u32 count, per record: u8 status,
 *              ok(0) -> batch record layout, err(1) -> u16 len + UTF-8.
 */

import type { BatchRecord, InContextRequest, LayerSpec, RequestResult } from "./types.js";

export const PROTOCOL_VERSION = 1;
const BATCH_MAGIC = "DLXB";
const REQUEST_MAGIC = "DLXQ";
const RESPONSE_MAGIC = "DLXR";

class ByteWriter {
  private chunks: Buffer[] = [];

  ascii(text: string): void {
    this.chunks.push(Buffer.from(text, "ascii"));
  }

  u8(value: number): void {
    const b = Buffer.alloc(1);
    b.writeUInt8(value);
    this.chunks.push(b);
  }

  u16(value: number): void {
    const b = Buffer.alloc(2);
    b.writeUInt16LE(value);
    this.chunks.push(b);
  }

  u32(value: number): void {
    const b = Buffer.alloc(4);
    b.writeUInt32LE(value);
    this.chunks.push(b);
  }

  u64(value: bigint): void {
    const b = Buffer.alloc(8);
    b.writeBigUInt64LE(value);
    this.chunks.push(b);
  }

  bytes(data: Buffer): void {
    this.chunks.push(data);
  }

  f32Array(values: Float32Array): void {
    const b = Buffer.alloc(4 * values.length);
    for (let i = 0; i < values.length; i++) {
      b.writeFloatLE(values[i], 4 * i);
    }
    this.chunks.push(b);
  }

  finish(): Buffer {
    return Buffer.concat(this.chunks);
  }
}

export class ByteReader {
  private pos = 0;

  constructor(private readonly buf: Buffer) {}

  private need(n: number, what: string): number {
    if (this.pos + n > this.buf.length) {
      throw new Error(`truncated while reading ${what} at byte ${this.pos}`);
    }
    const at = this.pos;
    this.pos += n;
    return at;
  }

  ascii(n: number, what: string): string {
    return this.buf.subarray(this.need(n, what), this.pos).toString("ascii");
  }

  u8(what: string): number {
    return this.buf.readUInt8(this.need(1, what));
  }

  u16(what: string): number {
    return this.buf.readUInt16LE(this.need(2, what));
  }

  u32(what: string): number {
    return this.buf.readUInt32LE(this.need(4, what));
  }

  u64(what: string): bigint {
    return this.buf.readBigUInt64LE(this.need(8, what));
  }

  utf8(n: number, what: string): string {
    return this.buf.subarray(this.need(n, what), this.pos).toString("utf8");
  }

  f32Array(n: number, what: string): Float32Array {
    const at = this.need(4 * n, what);
    const out = new Float32Array(n);
    for (let i = 0; i < n; i++) {
      out[i] = this.buf.readFloatLE(at + 4 * i);
    }
    return out;
  }

  done(): boolean {
    return this.pos === this.buf.length;
  }

  get position(): number {
    return this.pos;
  }
}

function writeRecord(w: ByteWriter, spec: LayerSpec, word: string,
                     sentenceId: bigint, vectors: Map<number, Float32Array>): void {
  const wordBytes = Buffer.from(word, "utf8");
  w.u16(wordBytes.length);
  w.bytes(wordBytes);
  w.u64(sentenceId);
  for (const layer of spec.layers) {
    const vec = vectors.get(layer);
    if (!vec || vec.length !== spec.dim) {
      throw new Error(`record ${word}: layer ${layer} vector missing or wrong length`);
    }
    w.f32Array(vec);
  }
}

function readRecord(r: ByteReader, spec: LayerSpec, label: string): BatchRecord {
  const wordLen = r.u16(`${label} word length`);
  const word = r.utf8(wordLen, `${label} word`);
  const sentenceId = r.u64(`${label} sentence id`);
  const vectors = new Map<number, Float32Array>();
  for (const layer of spec.layers) {
    vectors.set(layer, r.f32Array(spec.dim, `${label} layer ${layer}`));
  }
  return { word, sentenceId, vectors };
}

export function encodeBatch(spec: LayerSpec, records: BatchRecord[]): Buffer {
  const w = new ByteWriter();
  w.ascii(BATCH_MAGIC);
  w.u16(PROTOCOL_VERSION);
  w.u32(spec.dim);
  w.u16(spec.layers.length);
  for (const layer of spec.layers) {
    w.u16(layer);
  }
  w.u32(records.length);
  for (const rec of records) {
    writeRecord(w, spec, rec.word, rec.sentenceId, rec.vectors);
  }
  return w.finish();
}

export function decodeBatch(buf: Buffer): { spec: LayerSpec; records: BatchRecord[] } {
  const r = new ByteReader(buf);
  if (r.ascii(4, "magic") !== BATCH_MAGIC) {
    throw new Error("bad magic, not a batch file");
  }
  const version = r.u16("version");
  if (version !== PROTOCOL_VERSION) {
    throw new Error(`unsupported batch version ${version}`);
  }
  const dim = r.u32("dim");
  const layerCount = r.u16("layer count");
  const layers: number[] = [];
  for (let i = 0; i < layerCount; i++) {
    layers.push(r.u16("layer id"));
  }
  const spec: LayerSpec = { dim, layers };
  const count = r.u32("record count");
  const records: BatchRecord[] = [];
  for (let i = 0; i < count; i++) {
    records.push(readRecord(r, spec, `record ${i}`));
  }
  if (!r.done()) {
    throw new Error(`trailing bytes at ${r.position}`);
  }
  return { spec, records };
}

export function encodeRequestFrame(seq: number, requests: InContextRequest[]): Buffer {
  const w = new ByteWriter();
  w.ascii(REQUEST_MAGIC);
  w.u16(PROTOCOL_VERSION);
  w.u32(seq);
  w.u32(requests.length);
  for (const req of requests) {
    const sentence = Buffer.from(req.sentence, "utf8");
    w.u32(sentence.length);
    w.bytes(sentence);
    w.u32(req.start);
    w.u32(req.end);
    w.u8(req.replacement ? 1 : 0);
    if (req.replacement) {
      const repl = Buffer.from(req.replacement, "utf8");
      w.u16(repl.length);
      w.bytes(repl);
    }
  }
  return w.finish();
}

export function decodeRequestFrame(buf: Buffer): { seq: number; requests: InContextRequest[] } {
  const r = new ByteReader(buf);
  if (r.ascii(4, "request magic") !== REQUEST_MAGIC) {
    throw new Error("bad request magic");
  }
  const version = r.u16("version");
  if (version !== PROTOCOL_VERSION) {
    throw new Error(`unsupported protocol version ${version}`);
  }
  const seq = r.u32("sequence");
  const count = r.u32("request count");
  const requests: InContextRequest[] = [];
  for (let i = 0; i < count; i++) {
    const sentenceLen = r.u32(`request ${i} sentence length`);
    const sentence = r.utf8(sentenceLen, `request ${i} sentence`);
    const start = r.u32(`request ${i} start`);
    const end = r.u32(`request ${i} end`);
    const hasReplacement = r.u8(`request ${i} replacement flag`);
    let replacement: string | undefined;
    if (hasReplacement) {
      const len = r.u16(`request ${i} replacement length`);
      replacement = r.utf8(len, `request ${i} replacement`);
    }
    requests.push({ sentence, start, end, replacement });
  }
  return { seq, requests };
}

export function encodeResponseFrame(seq: number, spec: LayerSpec,
                                    results: RequestResult[]): Buffer {
  const w = new ByteWriter();
  w.ascii(RESPONSE_MAGIC);
  w.u16(PROTOCOL_VERSION);
  w.u32(seq);
  w.u32(spec.dim);
  w.u16(spec.layers.length);
  for (const layer of spec.layers) {
    w.u16(layer);
  }
  w.u32(results.length);
  results.forEach((res, i) => {
    if (res.ok) {
      w.u8(0);
      writeRecord(w, spec, res.word, BigInt(i), res.vectors);
    } else {
      w.u8(1);
      const msg = Buffer.from(res.message, "utf8").subarray(0, 0xffff);
      w.u16(msg.length);
      w.bytes(msg);
    }
  });
  return w.finish();
}

export function decodeResponseFrame(buf: Buffer): {
  seq: number;
  spec: LayerSpec;
  results: RequestResult[];
} {
  const r = new ByteReader(buf);
  if (r.ascii(4, "response magic") !== RESPONSE_MAGIC) {
    throw new Error("bad response magic");
  }
  const version = r.u16("version");
  if (version !== PROTOCOL_VERSION) {
    throw new Error(`unsupported protocol version ${version}`);
  }
  const seq = r.u32("sequence");
  const dim = r.u32("dim");
  const layerCount = r.u16("layer count");
  const layers: number[] = [];
  for (let i = 0; i < layerCount; i++) {
    layers.push(r.u16("layer id"));
  }
  const spec: LayerSpec = { dim, layers };
  const count = r.u32("record count");
  const results: RequestResult[] = [];
  for (let i = 0; i < count; i++) {
    const status = r.u8(`record ${i} status`);
    if (status === 0) {
      const rec = readRecord(r, spec, `record ${i}`);
      results.push({ ok: true, word: rec.word, vectors: rec.vectors });
    } else if (status === 1) {
      const len = r.u16(`record ${i} error length`);
      results.push({ ok: false, message: r.utf8(len, `record ${i} error`) });
    } else {
      throw new Error(`record ${i} has unknown status ${status}`);
    }
  }
  return { seq, spec, results };
}

export function frame(payload: Buffer): Buffer {
  const header = Buffer.alloc(4);
  header.writeUInt32LE(payload.length);
  return Buffer.concat([header, payload]);
}

/** Incremental length-prefixed frame splitter for a socket byte stream. */
export class FrameDecoder {
  private buffer = Buffer.alloc(0);

  push(data: Buffer): Buffer[] {
    this.buffer = Buffer.concat([this.buffer, data]);
    const frames: Buffer[] = [];
    for (;;) {
      if (this.buffer.length < 4) {
        break;
      }
      const length = this.buffer.readUInt32LE(0);
      if (this.buffer.length < 4 + length) {
        break;
      }
      frames.push(this.buffer.subarray(4, 4 + length));
      this.buffer = this.buffer.subarray(4 + length);
    }
    return frames;
  }
}
