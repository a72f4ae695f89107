import { describe, expect, it } from "vitest";

import { AlignmentError, averageSpan, tokensInSpan } from "../src/align.js";
import { MockEncoder } from "../src/mock.js";
import type { LayerSpec } from "../src/types.js";

const SPEC: LayerSpec = { dim: 12, layers: [1, 2, 3] };

function spanOf(sentence: string, word: string) {
  const start = Buffer.byteLength(sentence.slice(0, sentence.indexOf(word)), "utf8");
  return { start, end: start + Buffer.byteLength(word, "utf8") };
}

describe("subword averaging", () => {
  it("single-subword word equals the raw hidden state", async () => {
    const encoder = new MockEncoder(SPEC, 1);
    const sentence = "one cat two";   // "cat" is 3 bytes -> exactly one mock subword
    const encoding = await encoder.encode(sentence);
    const span = spanOf(sentence, "cat");
    const [index] = tokensInSpan(encoding, span);
    const mean = averageSpan(encoding, span, SPEC);
    for (const layer of SPEC.layers) {
      expect(Buffer.from(mean.get(layer)!.buffer))
        .toEqual(Buffer.from(encoding.tokens[index].states.get(layer)!.buffer));
    }
  });

  it("two-subword word equals the direct slice mean within 1e-6", async () => {
    const encoder = new MockEncoder(SPEC, 2);
    const sentence = "the greatest show";  // "greatest" -> subwords gre|ate|st
    const encoding = await encoder.encode(sentence);
    const span = spanOf(sentence, "greatest");
    const indices = tokensInSpan(encoding, span);
    expect(indices.length).toBe(3);
    const mean = averageSpan(encoding, span, SPEC);
    for (const layer of SPEC.layers) {
      for (let d = 0; d < SPEC.dim; d++) {
        let sum = 0;
        for (const i of indices) {
          sum += encoding.tokens[i].states.get(layer)![d];
        }
        expect(Math.abs(mean.get(layer)![d] - sum / indices.length)).toBeLessThan(1e-6);
      }
    }
  });

  it("averaging a multi-byte word respects byte spans", async () => {
    const encoder = new MockEncoder(SPEC, 3);
    const sentence = "il perché resta";
    const encoding = await encoder.encode(sentence);
    const span = spanOf(sentence, "perché");   // 7 bytes -> 3 subwords
    expect(tokensInSpan(encoding, span).length).toBe(3);
    const mean = averageSpan(encoding, span, SPEC);
    expect(mean.get(1)!.length).toBe(SPEC.dim);
  });

  it("span outside any token raises AlignmentError", async () => {
    const encoder = new MockEncoder(SPEC, 4);
    const encoding = await encoder.encode("some words");
    expect(() => averageSpan(encoding, { start: 4, end: 999 }, SPEC))
      .toThrow(AlignmentError);
  });

  it("encoding is deterministic", async () => {
    const encoder = new MockEncoder(SPEC, 5);
    const a = await encoder.encode("stable output please");
    const b = await encoder.encode("stable output please");
    expect(a.tokens.length).toBe(b.tokens.length);
    for (let i = 0; i < a.tokens.length; i++) {
      for (const layer of SPEC.layers) {
        expect(Buffer.from(a.tokens[i].states.get(layer)!.buffer))
          .toEqual(Buffer.from(b.tokens[i].states.get(layer)!.buffer));
      }
    }
  });
});
