import { createConnection, type Server, type Socket } from "node:net";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import {
  FrameDecoder,
  decodeResponseFrame,
  encodeRequestFrame,
  frame,
} from "../src/codec.js";
import { MockEncoder } from "../src/mock.js";
import { serve } from "../src/server.js";
import type { InContextRequest, LayerSpec, RequestResult } from "../src/types.js";

const SPEC: LayerSpec = { dim: 10, layers: [1, 3] };

let server: Server;
let port = 0;

beforeAll(async () => {
  await new Promise<void>((resolve) => {
    server = serve(new MockEncoder(SPEC, 7), "127.0.0.1", 0, (p) => {
      port = p;
      resolve();
    });
  });
});

afterAll(() => {
  server.close();
});

class Client {
  private socket: Socket;
  private decoder = new FrameDecoder();
  private waiting: ((payload: Buffer) => void)[] = [];
  private seq = 0;

  constructor(portNumber: number) {
    this.socket = createConnection({ host: "127.0.0.1", port: portNumber });
    this.socket.on("data", (data) => {
      for (const payload of this.decoder.push(data)) {
        this.waiting.shift()?.(payload);
      }
    });
  }

  async fetch(requests: InContextRequest[]): Promise<RequestResult[]> {
    this.seq += 1;
    const seq = this.seq;
    const payload = await new Promise<Buffer>((resolve) => {
      this.waiting.push(resolve);
      this.socket.write(frame(encodeRequestFrame(seq, requests)));
    });
    const decoded = decodeResponseFrame(payload);
    expect(decoded.seq).toBe(seq);
    return decoded.results;
  }

  close(): void {
    this.socket.destroy();
  }

  onClose(handler: () => void): void {
    this.socket.on("close", handler);
  }

  writeRaw(data: Buffer): void {
    this.socket.write(data);
  }
}

function vectorsEqual(a: Map<number, Float32Array>, b: Map<number, Float32Array>): boolean {
  for (const layer of SPEC.layers) {
    if (!Buffer.from(a.get(layer)!.buffer).equals(Buffer.from(b.get(layer)!.buffer))) {
      return false;
    }
  }
  return true;
}

describe("socket service", () => {
  it("identity replacement returns bit-identical vectors", async () => {
    const client = new Client(port);
    const sentence = "the cat sat on the mat";
    const results = await client.fetch([
      { sentence, start: 4, end: 7 },
      { sentence, start: 4, end: 7, replacement: "cat" },
    ]);
    expect(results[0].ok && results[1].ok).toBe(true);
    if (results[0].ok && results[1].ok) {
      expect(vectorsEqual(results[0].vectors, results[1].vectors)).toBe(true);
    }
    client.close();
  });

  it("real replacement changes the vectors", async () => {
    const client = new Client(port);
    const sentence = "the cat sat on the mat";
    const results = await client.fetch([
      { sentence, start: 4, end: 7 },
      { sentence, start: 4, end: 7, replacement: "dog" },
    ]);
    if (results[0].ok && results[1].ok) {
      expect(vectorsEqual(results[0].vectors, results[1].vectors)).toBe(false);
      expect(results[1].word).toBe("dog");
    }
    client.close();
  });

  it("answers a 50-request batch in order", async () => {
    const client = new Client(port);
    const sentence = "she gave a great speech";
    const requests = Array.from({ length: 50 }, (_, i) => ({
      sentence,
      start: 11,
      end: 16,
      replacement: `word${String(i).padStart(2, "0")}`,
    }));
    const results = await client.fetch(requests);
    expect(results).toHaveLength(50);
    results.forEach((res, i) => {
      expect(res.ok).toBe(true);
      if (res.ok) {
        expect(res.word).toBe(`word${String(i).padStart(2, "0")}`);
      }
    });
    client.close();
  });

  it("replacement changing subword count still yields one vector per layer", async () => {
    const client = new Client(port);
    const sentence = "a dog ran";
    const results = await client.fetch([
      { sentence, start: 2, end: 5, replacement: "extraordinarily" },
    ]);
    expect(results[0].ok).toBe(true);
    if (results[0].ok) {
      expect(results[0].vectors.size).toBe(SPEC.layers.length);
      for (const layer of SPEC.layers) {
        expect(results[0].vectors.get(layer)!.length).toBe(SPEC.dim);
      }
    }
    client.close();
  });

  it("per-request failures do not poison the batch", async () => {
    const client = new Client(port);
    const results = await client.fetch([
      { sentence: "tiny", start: 0, end: 4 },
      { sentence: "tiny", start: 2, end: 40 },
      { sentence: "tiny", start: 0, end: 4 },
    ]);
    expect(results.map((r) => r.ok)).toEqual([true, false, true]);
    client.close();
  });

  it("sequential batches on one connection", async () => {
    const client = new Client(port);
    for (let i = 0; i < 3; i++) {
      const results = await client.fetch([{ sentence: "a dog ran", start: 2, end: 5 }]);
      expect(results[0].ok).toBe(true);
    }
    client.close();
  });

  it("malformed frame closes the connection", async () => {
    const client = new Client(port);
    const closed = new Promise<void>((resolve) => client.onClose(resolve));
    client.writeRaw(frame(Buffer.from("GARBAGE-NOT-A-REQUEST")));
    await closed;
  });
});
