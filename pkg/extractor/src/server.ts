/**
 * Socket service answering in-context embedding requests.
 *
 * Replacement happens at the byte span before tokenisation; responses keep
 * request order; per-request failures are reported in-band; a malformed
 * frame closes the connection. Batches on one connection run sequentially;
 * open as many connections as you want concurrency.
 */

import { createServer, type Server, type Socket } from "node:net";

import { AlignmentError, averageSpan } from "./align.js";
import { FrameDecoder, decodeRequestFrame, encodeResponseFrame, frame } from "./codec.js";
import type { Encoder, InContextRequest, RequestResult } from "./types.js";

export function applyReplacement(req: InContextRequest): {
  sentence: string;
  start: number;
  end: number;
} {
  const raw = Buffer.from(req.sentence, "utf8");
  if (!(req.start >= 0 && req.start < req.end && req.end <= raw.length)) {
    throw new AlignmentError(
      `span [${req.start}, ${req.end}) out of range for ${raw.length}-byte sentence`);
  }
  if (req.replacement === undefined) {
    return { sentence: req.sentence, start: req.start, end: req.end };
  }
  if (req.replacement.length === 0) {
    throw new AlignmentError("replacement must be non-empty");
  }
  const repl = Buffer.from(req.replacement, "utf8");
  const spliced = Buffer.concat([raw.subarray(0, req.start), repl, raw.subarray(req.end)]);
  return { sentence: spliced.toString("utf8"), start: req.start, end: req.start + repl.length };
}

export async function answer(encoder: Encoder,
                             requests: InContextRequest[]): Promise<RequestResult[]> {
  const results: RequestResult[] = [];
  for (const req of requests) {
    try {
      const effective = applyReplacement(req);
      const encoding = await encoder.encode(effective.sentence);
      const vectors = averageSpan(encoding, effective, encoder.spec);
      const word = Buffer.from(effective.sentence, "utf8")
        .subarray(effective.start, effective.end)
        .toString("utf8");
      results.push({ ok: true, word, vectors });
    } catch (err) {
      if (err instanceof AlignmentError) {
        results.push({ ok: false, message: err.message });
      } else {
        results.push({ ok: false, message: `encoding failed: ${(err as Error).message}` });
      }
    }
  }
  return results;
}

export function serve(encoder: Encoder, host: string, port: number,
                      onListen?: (port: number) => void): Server {
  const server = createServer((socket: Socket) => {
    const decoder = new FrameDecoder();
    let busy = Promise.resolve();
    socket.on("data", (data) => {
      for (const payload of decoder.push(data)) {
        let seq: number;
        let requests: InContextRequest[];
        try {
          ({ seq, requests } = decodeRequestFrame(payload));
        } catch {
          socket.destroy();
          return;
        }
        busy = busy.then(async () => {
          const results = await answer(encoder, requests);
          if (!socket.destroyed) {
            socket.write(frame(encodeResponseFrame(seq, encoder.spec, results)));
          }
        });
      }
    });
    socket.on("error", () => socket.destroy());
  });
  server.listen(port, host, () => {
    const addr = server.address();
    if (onListen && addr && typeof addr === "object") {
      onListen(addr.port);
    }
  });
  return server;
}
