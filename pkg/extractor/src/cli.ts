#!/usr/bin/env node
/**
 * extract: corpus + manifest -> batch file.
 * serve:   answer in-context embedding requests over TCP.
 *
 * --model mock:SEED uses the deterministic mock encoder (no downloads);
 * any other value is a hub model id loaded via @huggingface/transformers.
 */

import { parseArgs } from "node:util";
import process from "node:process";

import { extractManifest } from "./extract.js";
import { MockEncoder } from "./mock.js";
import { serve } from "./server.js";
import type { Encoder } from "./types.js";

function parseLayers(text: string): number[] {
  const range = /^(\d+)\.\.(\d+)$/.exec(text);
  if (range) {
    const lo = Number(range[1]);
    const hi = Number(range[2]);
    if (lo > hi) {
      throw new Error(`empty layer range ${text}`);
    }
    return Array.from({ length: hi - lo + 1 }, (_, i) => lo + i);
  }
  const layers = text.split(",").map((p) => Number(p.trim())).filter((n) => !Number.isNaN(n));
  if (layers.length === 0) {
    throw new Error(`cannot parse layers ${text}`);
  }
  return layers;
}

async function makeEncoder(model: string, layers: number[], dim?: number): Promise<Encoder> {
  if (model.startsWith("mock")) {
    if (!dim) {
      throw new Error("mock encoder needs --dim");
    }
    const seed = model.includes(":") ? Number(model.split(":")[1]) : 0;
    return new MockEncoder({ dim, layers }, seed);
  }
  const { TransformersEncoder } = await import("./transformers.js");
  return TransformersEncoder.load(model, layers);
}

async function main(): Promise<void> {
  const [command, ...rest] = process.argv.slice(2);
  if (command === "extract") {
    const { values } = parseArgs({
      args: rest,
      options: {
        corpus: { type: "string" },
        manifest: { type: "string" },
        model: { type: "string", default: "mock:0" },
        layers: { type: "string" },
        dim: { type: "string" },
        output: { type: "string", short: "o" },
      },
    });
    if (!values.corpus || !values.manifest || !values.layers || !values.output) {
      console.error("extract needs --corpus, --manifest, --layers, --output");
      process.exit(2);
    }
    const encoder = await makeEncoder(values.model!, parseLayers(values.layers),
                                      values.dim ? Number(values.dim) : undefined);
    const result = await extractManifest(values.corpus, values.manifest, encoder,
                                         values.output, (m) => console.error(m));
    console.log(`${result.records} records -> ${values.output} `
                + `(${result.skipped.length} skipped)`);
    return;
  }
  if (command === "serve") {
    const { values } = parseArgs({
      args: rest,
      options: {
        host: { type: "string", default: "127.0.0.1" },
        port: { type: "string", default: "8641" },
        model: { type: "string", default: "mock:0" },
        layers: { type: "string" },
        dim: { type: "string" },
      },
    });
    if (!values.layers) {
      console.error("serve needs --layers");
      process.exit(2);
    }
    const encoder = await makeEncoder(values.model!, parseLayers(values.layers),
                                      values.dim ? Number(values.dim) : undefined);
    serve(encoder, values.host!, Number(values.port), (port) => {
      console.log(`listening on ${values.host}:${port} `
                  + `(dim=${encoder.spec.dim}, layers=${encoder.spec.layers.join(",")})`);
    });
    return;
  }
  console.error("usage: dlxsub-extractor <extract|serve> [options]");
  process.exit(2);
}

main().catch((err) => {
  console.error(err instanceof Error ? err.message : String(err));
  process.exit(1);
});
