/**
 * Bulk extraction: corpus + manifest -> batch file.
 *
 * One record per manifest row; rows whose span cannot be aligned to any
 * token are skipped and reported, leaving the batch valid.
 */

import { readFile, writeFile } from "node:fs/promises";

import { AlignmentError, averageSpan } from "./align.js";
import { encodeBatch } from "./codec.js";
import type { BatchRecord, Encoder, Encoding, ManifestRow } from "./types.js";

export function parseManifest(text: string): ManifestRow[] {
  const rows: ManifestRow[] = [];
  text.split("\n").forEach((line, i) => {
    if (!line.trim()) {
      return;
    }
    const parts = line.split("\t");
    if (parts.length !== 4) {
      throw new Error(`manifest line ${i + 1}: expected 4 tab-separated fields`);
    }
    const [word, sid, start, end] = parts;
    rows.push({
      word,
      sentenceId: Number(sid),
      start: Number(start),
      end: Number(end),
    });
    const row = rows[rows.length - 1];
    if (![row.sentenceId, row.start, row.end].every(Number.isInteger)) {
      throw new Error(`manifest line ${i + 1}: non-integer field`);
    }
  });
  return rows;
}

export interface ExtractResult {
  records: number;
  skipped: { row: ManifestRow; reason: string }[];
}

export async function extractManifest(
  corpusPath: string,
  manifestPath: string,
  encoder: Encoder,
  outputPath: string,
  log: (message: string) => void = () => {},
): Promise<ExtractResult> {
  const sentences = (await readFile(corpusPath, "utf8")).split("\n");
  const rows = parseManifest(await readFile(manifestPath, "utf8"));

  const cache = new Map<number, Encoding>();
  const encodeSentence = async (sid: number): Promise<Encoding> => {
    const hit = cache.get(sid);
    if (hit) {
      return hit;
    }
    const encoding = await encoder.encode(sentences[sid]);
    cache.set(sid, encoding);
    if (cache.size > 4096) {
      const oldest = cache.keys().next().value as number;
      cache.delete(oldest);
    }
    return encoding;
  };

  const records: BatchRecord[] = [];
  const skipped: ExtractResult["skipped"] = [];
  for (const row of rows) {
    if (row.sentenceId < 0 || row.sentenceId >= sentences.length) {
      skipped.push({ row, reason: `sentence ${row.sentenceId} out of range` });
      log(`skip ${row.word}@${row.sentenceId}: sentence out of range`);
      continue;
    }
    try {
      const encoding = await encodeSentence(row.sentenceId);
      const vectors = averageSpan(encoding, { start: row.start, end: row.end },
                                  encoder.spec);
      records.push({ word: row.word, sentenceId: BigInt(row.sentenceId), vectors });
    } catch (err) {
      if (err instanceof AlignmentError) {
        skipped.push({ row, reason: err.message });
        log(`skip ${row.word}@${row.sentenceId}: ${err.message}`);
      } else {
        throw err;
      }
    }
  }

  await writeFile(outputPath, encodeBatch(encoder.spec, records));
  return { records: records.length, skipped };
}
