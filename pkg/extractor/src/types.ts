/**
 * Record shapes of the canonical document serialization (schema_version 1).
 *
 * The first line of an output file is a header record, every following
 * line is one word record in document order. Field names and order are
 * fixed; the analytics engine rejects unknown fields under strict mode.
 */

export interface PageRecord {
  page: number;
  width: number;
  height: number;
}

export interface HeaderRecord {
  schema_version: 1;
  doc_id: string;
  pages: PageRecord[];
}

export interface WordRecord {
  text: string;
  font_name: string;
  font_size: number;
  bold: boolean;
  underline: boolean;
  x0: number;
  y0: number;
  x1: number;
  y1: number;
  page: number;
}

export interface ExtractionManifest {
  input: string;
  output: string;
  word_count: number;
  page_count: number;
  warnings: string[];
}

export interface ExtractOptions {
  docId?: string;
  strict?: boolean;
  columnAware?: boolean;
}
