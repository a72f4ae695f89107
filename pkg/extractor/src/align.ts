/**
 * Byte-span to token alignment and subword-to-word pooling.
 *
 * A word's vector at a layer is the arithmetic mean of the hidden states of
 * every model token overlapping its byte span. Sums run in float64 before
 * the final float32 cast.
 */

import type { ByteSpan, Encoding, LayerSpec } from "./types.js";

export function tokensInSpan(encoding: Encoding, span: ByteSpan): number[] {
  const hits: number[] = [];
  encoding.tokens.forEach((tok, i) => {
    if (tok.span.start < span.end && tok.span.end > span.start) {
      hits.push(i);
    }
  });
  return hits;
}

export class AlignmentError extends Error {}

export function averageSpan(encoding: Encoding, span: ByteSpan,
                            spec: LayerSpec): Map<number, Float32Array> {
  const byteLength = Buffer.byteLength(encoding.sentence, "utf8");
  if (!(span.start >= 0 && span.start < span.end && span.end <= byteLength)) {
    throw new AlignmentError(
      `span [${span.start}, ${span.end}) out of range for ${byteLength}-byte sentence`);
  }
  const indices = tokensInSpan(encoding, span);
  if (indices.length === 0) {
    throw new AlignmentError(`no tokens overlap span [${span.start}, ${span.end})`);
  }
  const out = new Map<number, Float32Array>();
  for (const layer of spec.layers) {
    const sum = new Float64Array(spec.dim);
    for (const i of indices) {
      const state = encoding.tokens[i].states.get(layer);
      if (!state) {
        throw new AlignmentError(`token ${i} has no layer ${layer} state`);
      }
      for (let d = 0; d < spec.dim; d++) {
        sum[d] += state[d];
      }
    }
    const mean = new Float32Array(spec.dim);
    for (let d = 0; d < spec.dim; d++) {
      mean[d] = sum[d] / indices.length;
    }
    out.set(layer, mean);
  }
  return out;
}
