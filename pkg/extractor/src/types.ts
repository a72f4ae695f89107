/** Embedding shape contract: vector width and the 1-based encoder layers emitted. */
export interface LayerSpec {
  dim: number;
  layers: number[]; // strictly increasing, 1-based ("layer L" = output of block L)
}

/** Byte span [start, end) into the UTF-8 encoding of a sentence. */
export interface ByteSpan {
  start: number;
  end: number;
}

/** One model token: its byte span plus one hidden-state vector per layer. */
export interface TokenStates {
  span: ByteSpan;
  /** layer id -> hidden state (length dim) */
  states: Map<number, Float32Array>;
}

export interface Encoding {
  sentence: string;
  tokens: TokenStates[];
}

export interface Encoder {
  readonly spec: LayerSpec;
  encode(sentence: string): Promise<Encoding>;
}

export interface ManifestRow {
  word: string;
  sentenceId: number;
  start: number;
  end: number;
}

export interface BatchRecord {
  word: string;
  sentenceId: bigint;
  /** layer id -> vector, keys exactly spec.layers */
  vectors: Map<number, Float32Array>;
}

export interface InContextRequest {
  sentence: string;
  start: number;
  end: number;
  replacement?: string;
}

export type RequestResult =
  | { ok: true; word: string; vectors: Map<number, Float32Array> }
  | { ok: false; message: string };

export function validateSpec(spec: LayerSpec): void {
  if (!Number.isInteger(spec.dim) || spec.dim < 1) {
    throw new Error(`dim must be a positive integer, got ${spec.dim}`);
  }
  if (spec.layers.length === 0) {
    throw new Error("layer set must be non-empty");
  }
  for (let i = 0; i < spec.layers.length; i++) {
    const layer = spec.layers[i];
    if (!Number.isInteger(layer) || layer < 1) {
      throw new Error(`layer ids must be positive integers, got ${layer}`);
    }
    if (i > 0 && layer <= spec.layers[i - 1]) {
      throw new Error("layer set must be strictly increasing");
    }
  }
}
