/**
 * Canonical line-delimited serialization. Key order is fixed by the
 * object literals here, numbers are rounded to 2 decimals, so extracting
 * the same PDF twice yields byte-identical files.
 */

import { HeaderRecord, WordRecord } from './types.js';

export function round2(value: number): number {
  return Math.round(value * 100) / 100;
}

export function serializeDocument(header: HeaderRecord, words: WordRecord[]): string {
  const lines: string[] = [
    JSON.stringify({
      schema_version: header.schema_version,
      doc_id: header.doc_id,
      pages: header.pages.map((p) => ({
        page: p.page,
        width: p.width,
        height: p.height,
      })),
    }),
  ];
  for (const w of words) {
    lines.push(
      JSON.stringify({
        text: w.text,
        font_name: w.font_name,
        font_size: w.font_size,
        bold: w.bold,
        underline: w.underline,
        x0: w.x0,
        y0: w.y0,
        x1: w.x1,
        y1: w.y1,
        page: w.page,
      }),
    );
  }
  return lines.join('\n') + '\n';
}

const WORD_FIELDS = new Set([
  'text', 'font_name', 'font_size', 'bold', 'underline',
  'x0', 'y0', 'x1', 'y1', 'page',
]);

/** Schema check mirroring the engine's strict loader. */
export function validateSerialized(payload: string): string[] {
  const problems: string[] = [];
  const lines = payload.split('\n').filter((l) => l.trim() !== '');
  if (lines.length === 0) return ['empty output'];
  let header: HeaderRecord;
  try {
    header = JSON.parse(lines[0]);
  } catch {
    return ['header line is not JSON'];
  }
  if (header.schema_version !== 1) problems.push('schema_version must be 1');
  if (!header.doc_id) problems.push('missing doc_id');
  if (!Array.isArray(header.pages) || header.pages.length === 0) {
    problems.push('missing pages');
  }
  const known = new Set((header.pages ?? []).map((p) => p.page));
  for (let i = 1; i < lines.length; i++) {
    let record: Record<string, unknown>;
    try {
      record = JSON.parse(lines[i]);
    } catch {
      problems.push(`line ${i + 1}: not JSON`);
      continue;
    }
    for (const field of WORD_FIELDS) {
      if (!(field in record)) problems.push(`line ${i + 1}: missing ${field}`);
    }
    for (const field of Object.keys(record)) {
      if (!WORD_FIELDS.has(field) && field !== 'kind') {
        problems.push(`line ${i + 1}: unknown field ${field}`);
      }
    }
    const { x0, x1, y0, y1, page } = record as unknown as {
      x0: number; x1: number; y0: number; y1: number; page: number;
    };
    if (typeof x0 === 'number' && typeof x1 === 'number' && x0 > x1) {
      problems.push(`line ${i + 1}: x0 > x1`);
    }
    if (typeof y0 === 'number' && typeof y1 === 'number' && y0 > y1) {
      problems.push(`line ${i + 1}: y0 > y1`);
    }
    if (!known.has(page)) problems.push(`line ${i + 1}: undeclared page ${page}`);
  }
  return problems;
}
