/**
 * Deterministic encoder for tests and offline pipelines: whitespace words
 * split into <=3-byte subword chunks, hidden states hash-derived from
 * (seed, layer, token index, token bytes, sentence). No model, no I/O,
 * bit-stable across runs and platforms.
 */

import { createHash } from "node:crypto";

import type { Encoder, Encoding, LayerSpec, TokenStates } from "./types.js";
import { validateSpec } from "./types.js";

const SUBWORD_BYTES = 3;

export function hashFloats(material: string, n: number): Float32Array {
  const out = new Float32Array(n);
  let block = 0;
  let filled = 0;
  while (filled < n) {
    const digest = createHash("sha256").update(`${material}#${block}`).digest();
    for (let off = 0; off + 4 <= digest.length && filled < n; off += 4) {
      const u = digest.readUInt32LE(off);
      out[filled++] = Math.fround((u / 2 ** 32) * 2 - 1);
    }
    block += 1;
  }
  return out;
}

export class MockEncoder implements Encoder {
  readonly spec: LayerSpec;

  constructor(spec: LayerSpec, private readonly seed = 0) {
    validateSpec(spec);
    this.spec = spec;
  }

  async encode(sentence: string): Promise<Encoding> {
    const raw = Buffer.from(sentence, "utf8");
    const tokens: TokenStates[] = [];
    let i = 0;
    const isSpace = (b: number) => b === 0x20 || b === 0x09 || b === 0x0a || b === 0x0d;
    while (i < raw.length) {
      while (i < raw.length && isSpace(raw[i])) {
        i++;
      }
      if (i >= raw.length) {
        break;
      }
      let j = i;
      while (j < raw.length && !isSpace(raw[j])) {
        j++;
      }
      for (let s = i; s < j; s += SUBWORD_BYTES) {
        const end = Math.min(s + SUBWORD_BYTES, j);
        tokens.push({ span: { start: s, end }, states: new Map() });
      }
      i = j;
    }
    tokens.forEach((tok, index) => {
      const piece = raw.subarray(tok.span.start, tok.span.end).toString("hex");
      for (const layer of this.spec.layers) {
        tok.states.set(
          layer,
          hashFloats(`${this.seed}|${layer}|${index}|${piece}|${sentence}`, this.spec.dim));
      }
    });
    return { sentence, tokens };
  }
}
