/**
 * Real-model encoder backed by @huggingface/transformers (optional install).
 *
 * Words are tokenised individually so each subword token inherits its
 * word's byte span; "layer L" means the output of transformer block L
 * (hidden_states[L], with hidden_states[0] the embedding layer). Models
 * whose ONNX export only provides last_hidden_state can serve exactly the
 * top layer; anything else needs an export with hidden states enabled.
 */

import type { Encoder, Encoding, LayerSpec, TokenStates } from "./types.js";
import { validateSpec } from "./types.js";

interface WordPiece {
  start: number;
  end: number;
  ids: number[];
}

export class TransformersEncoder implements Encoder {
  readonly spec: LayerSpec;

  private constructor(spec: LayerSpec, private readonly tokenizer: any,
                      private readonly model: any, private readonly numLayers: number) {
    this.spec = spec;
  }

  static async load(modelId: string, layers: number[],
                    options: { dtype?: string } = {}): Promise<TransformersEncoder> {
    let transformers: any;
    try {
      const optional = "@huggingface/transformers";
      transformers = await import(optional);
    } catch {
      throw new Error(
        "@huggingface/transformers is not installed; use the mock encoder or " +
        "`npm install @huggingface/transformers`");
    }
    const tokenizer = await transformers.AutoTokenizer.from_pretrained(modelId);
    const model = await transformers.AutoModel.from_pretrained(modelId, {
      dtype: options.dtype ?? "fp32",
      output_hidden_states: true,
    });
    const config = model.config ?? {};
    const numLayers = config.num_hidden_layers ?? config.n_layer ?? 0;
    const dim = config.hidden_size ?? config.d_model ?? 0;
    if (!dim) {
      throw new Error(`cannot determine hidden size for ${modelId}`);
    }
    const spec: LayerSpec = { dim, layers };
    validateSpec(spec);
    if (numLayers && layers[layers.length - 1] > numLayers) {
      throw new Error(`layer ${layers[layers.length - 1]} exceeds model depth ${numLayers}`);
    }
    return new TransformersEncoder(spec, tokenizer, model, numLayers);
  }

  private async wordPieces(sentence: string): Promise<WordPiece[]> {
    const raw = Buffer.from(sentence, "utf8");
    const pieces: WordPiece[] = [];
    const isSpace = (b: number) => b === 0x20 || b === 0x09 || b === 0x0a || b === 0x0d;
    let i = 0;
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
      const word = raw.subarray(i, j).toString("utf8");
      const encoded = this.tokenizer(word, { add_special_tokens: false });
      const ids = Array.from(encoded.input_ids.data as Iterable<bigint>).map(Number);
      pieces.push({ start: i, end: j, ids });
      i = j;
    }
    return pieces;
  }

  async encode(sentence: string): Promise<Encoding> {
    const pieces = await this.wordPieces(sentence);
    const full = this.tokenizer(sentence);
    const output = await this.model(full);

    const states: Float32Array[][] = [];
    if (output.hidden_states) {
      for (const layer of this.spec.layers) {
        states[layer] = tensorRows(output.hidden_states[layer], this.spec.dim);
      }
    } else if (this.spec.layers.length === 1 &&
               (!this.numLayers || this.spec.layers[0] === this.numLayers) &&
               output.last_hidden_state) {
      states[this.spec.layers[0]] = tensorRows(output.last_hidden_state, this.spec.dim);
    } else {
      throw new Error(
        "model output lacks hidden_states; this export can only serve its last layer");
    }

    // map subword positions back to words: specials first, then each word's ids in order
    const fullIds = Array.from(full.input_ids.data as Iterable<bigint>).map(Number);
    const tokens: TokenStates[] = [];
    let cursor = 0;
    for (const piece of pieces) {
      const at = findSubsequence(fullIds, piece.ids, cursor);
      if (at < 0) {
        throw new Error(`cannot align word at bytes ${piece.start}..${piece.end}`);
      }
      cursor = at + piece.ids.length;
      for (let k = 0; k < piece.ids.length; k++) {
        const stateMap = new Map<number, Float32Array>();
        for (const layer of this.spec.layers) {
          stateMap.set(layer, states[layer][at + k]);
        }
        tokens.push({ span: { start: piece.start, end: piece.end }, states: stateMap });
      }
    }
    return { sentence, tokens };
  }
}

function tensorRows(tensor: any, dim: number): Float32Array[] {
  const data: Float32Array = tensor.data;
  const [, seq, width] = tensor.dims as number[];
  if (width !== dim) {
    throw new Error(`tensor width ${width} does not match dim ${dim}`);
  }
  const rows: Float32Array[] = [];
  for (let t = 0; t < seq; t++) {
    rows.push(data.subarray(t * dim, (t + 1) * dim) as Float32Array);
  }
  return rows;
}

function findSubsequence(haystack: number[], needle: number[], from: number): number {
  if (needle.length === 0) {
    return -1;
  }
  for (let i = from; i + needle.length <= haystack.length; i++) {
    let hit = true;
    for (let k = 0; k < needle.length; k++) {
      if (haystack[i + k] !== needle[k]) {
        hit = false;
        break;
      }
    }
    if (hit) {
      return i;
    }
  }
  return -1;
}
