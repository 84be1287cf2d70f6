/**
 * PDF to word-record extraction built on pdfjs-dist.
 *
 * Every positioned text item is split into whitespace-delimited words with
 * per-word bounding boxes interpolated from the item's width (PDF stores
 * runs, not words, so intra-run word boxes are proportional estimates).
 * Bold comes from the resolved font name (Bold/Black/Heavy markers) or the
 * font descriptor flags; underline from Underline annotations overlapping
 * a word's baseline. Coordinates are PDF user-space points, rounded to two
 * decimals so repeated extraction is byte-identical.
 *
 * Reading order is the content-stream order pdfjs yields, which matches
 * visual order for single-column documents; --column-aware re-linearizes
 * by clustering x-extents into column bands first.
 */

import { createRequire } from 'module';
import * as path from 'path';

import { ExtractOptions, ExtractionManifest, HeaderRecord, PageRecord, WordRecord } from './types.js';
import { round2, serializeDocument, validateSerialized } from './serialize.js';

const require = createRequire(import.meta.url);

export class ExtractionError extends Error {}

interface PositionedWord extends WordRecord {
  /** content-stream sequence number, the default ordering key */
  seq: number;
}

interface UnderlineBox {
  page: number;
  x0: number;
  y0: number;
  x1: number;
  y1: number;
}

async function loadPdf(data: Uint8Array) {
  const pdfjs = await import('pdfjs-dist/legacy/build/pdf.mjs');
  const fontDir = path.join(
    path.dirname(require.resolve('pdfjs-dist/package.json')),
    'standard_fonts',
  ) + path.sep;
  try {
    return await pdfjs.getDocument({
      // pdf.js transfers the buffer to its worker (detaching it); hand
      // over a copy so callers can reuse their bytes
      data: data.slice(),
      standardFontDataUrl: fontDir,
      useSystemFonts: true,
    }).promise;
  } catch (err: unknown) {
    const name = (err as { name?: string }).name ?? '';
    if (name === 'PasswordException') {
      throw new ExtractionError('PDF is encrypted (password required)');
    }
    if (name === 'InvalidPDFException') {
      throw new ExtractionError(`not a valid PDF: ${(err as Error).message}`);
    }
    throw new ExtractionError(`failed to open PDF: ${(err as Error).message}`);
  }
}

const BOLD_MARKER = /bold|black|heavy|semibold|demibold/i;

function resolveFontName(page: { commonObjs: { has?: (n: string) => boolean; get: (n: string) => unknown } },
                         styles: Record<string, { fontFamily?: string }>,
                         internalName: string): { name: string; bold: boolean } {
  let name = internalName;
  let flagBold = false;
  try {
    const font = page.commonObjs.get(internalName) as
      { name?: string; bold?: boolean } | null;
    if (font?.name) name = font.name;
    flagBold = Boolean(font?.bold);
  } catch {
    const family = styles[internalName]?.fontFamily;
    if (family) name = family;
  }
  // embedded subsets look like "ABCDEF+Helvetica-Bold"
  const plus = name.indexOf('+');
  if (plus >= 0) name = name.slice(plus + 1);
  return { name, bold: flagBold || BOLD_MARKER.test(name) };
}

function splitIntoWords(str: string): Array<{ token: string; start: number }> {
  const out: Array<{ token: string; start: number }> = [];
  const re = /\S+/g;
  let match: RegExpExecArray | null;
  while ((match = re.exec(str)) !== null) {
    out.push({ token: match[0], start: match.index });
  }
  return out;
}

function overlapsUnderline(word: WordRecord, underlines: UnderlineBox[]): boolean {
  for (const u of underlines) {
    if (u.page !== word.page) continue;
    const xOverlap = word.x0 <= u.x1 && u.x0 <= word.x1;
    // underline rects sit at/below the baseline; allow a small margin
    const yOverlap = word.y0 - 3 <= u.y1 && u.y0 <= word.y1 + 1;
    if (xOverlap && yOverlap) return true;
  }
  return false;
}

function columnBands(words: PositionedWord[], gap = 18): Array<[number, number]> {
  const intervals = words
    .map((w) => [w.x0, w.x1] as [number, number])
    .sort((a, b) => a[0] - b[0]);
  const bands: Array<[number, number]> = [];
  for (const [x0, x1] of intervals) {
    const last = bands[bands.length - 1];
    if (last && x0 <= last[1] + gap) {
      last[1] = Math.max(last[1], x1);
    } else {
      bands.push([x0, x1]);
    }
  }
  return bands;
}

function columnAwareOrder(words: PositionedWord[]): PositionedWord[] {
  const byPage = new Map<number, PositionedWord[]>();
  for (const w of words) {
    const list = byPage.get(w.page) ?? [];
    list.push(w);
    byPage.set(w.page, list);
  }
  const out: PositionedWord[] = [];
  for (const page of [...byPage.keys()].sort((a, b) => a - b)) {
    const pageWords = byPage.get(page)!;
    const bands = columnBands(pageWords);
    const bandOf = (w: PositionedWord) =>
      bands.findIndex(([x0, x1]) => w.x0 >= x0 - 0.01 && w.x0 <= x1 + 0.01);
    pageWords.sort((a, b) =>
      bandOf(a) - bandOf(b) || b.y0 - a.y0 || a.x0 - b.x0 || a.seq - b.seq);
    out.push(...pageWords);
  }
  return out;
}

export async function extractWords(
  data: Uint8Array,
  docId: string,
  options: ExtractOptions = {},
): Promise<{ header: HeaderRecord; words: WordRecord[]; warnings: string[] }> {
  const doc = await loadPdf(data);
  const pages: PageRecord[] = [];
  const words: PositionedWord[] = [];
  const warnings: string[] = [];
  let seq = 0;

  for (let pageNo = 1; pageNo <= doc.numPages; pageNo++) {
    const page = await doc.getPage(pageNo);
    const view = page.getViewport({ scale: 1 });
    pages.push({ page: pageNo, width: round2(view.width), height: round2(view.height) });

    const underlines: UnderlineBox[] = [];
    for (const annotation of await page.getAnnotations()) {
      if (annotation.subtype === 'Underline' && Array.isArray(annotation.rect)) {
        const [ax0, ay0, ax1, ay1] = annotation.rect as number[];
        underlines.push({ page: pageNo, x0: ax0, y0: ay0, x1: ax1, y1: ay1 });
      }
    }

    // font objects resolve into commonObjs during rendering, not during
    // getTextContent; walking the operator list forces them to load
    await page.getOperatorList();
    const content = await page.getTextContent();
    const styles = (content.styles ?? {}) as
      Record<string, { fontFamily?: string; ascent?: number; descent?: number }>;
    let pageWords = 0;
    for (const item of content.items as Array<{
      str?: string; transform?: number[]; width?: number; fontName?: string;
    }>) {
      if (!item.str || item.str.trim() === '' || !item.transform) continue;
      const t = item.transform;
      const size = Math.hypot(t[2], t[3]) || Math.abs(t[0]);
      const tx = t[4];
      const ty = t[5];
      const style = styles[item.fontName ?? ''] ?? {};
      const ascent = typeof style.ascent === 'number' && style.ascent > 0
        ? style.ascent : 0.8;
      const descent = typeof style.descent === 'number' && style.descent < 0
        ? style.descent : -0.2;
      const { name, bold } = resolveFontName(page, styles, item.fontName ?? '');
      const itemWidth = item.width && item.width > 0
        ? item.width : item.str.length * size * 0.5;
      const perChar = itemWidth / Math.max(item.str.length, 1);

      for (const { token, start } of splitIntoWords(item.str)) {
        const x0 = tx + start * perChar;
        const x1 = x0 + token.length * perChar;
        const word: PositionedWord = {
          text: token,
          font_name: name,
          font_size: round2(size),
          bold,
          underline: false,
          x0: round2(x0),
          y0: round2(ty + descent * size),
          x1: round2(x1),
          y1: round2(ty + ascent * size),
          page: pageNo,
          seq: seq++,
        };
        word.underline = overlapsUnderline(word, underlines);
        words.push(word);
        pageWords++;
      }
    }
    if (pageWords === 0) {
      warnings.push(`page ${pageNo} has no extractable text`);
    }
  }
  await doc.cleanup();

  const ordered = options.columnAware ? columnAwareOrder(words) : words;
  const plain: WordRecord[] = ordered.map(({ seq: _seq, ...rest }) => rest);
  return {
    header: { schema_version: 1, doc_id: docId, pages },
    words: plain,
    warnings,
  };
}

export async function extractToString(
  data: Uint8Array,
  docId: string,
  options: ExtractOptions = {},
): Promise<{ payload: string; manifest: Omit<ExtractionManifest, 'input' | 'output'> }> {
  const { header, words, warnings } = await extractWords(data, docId, options);
  if (words.length === 0) {
    throw new ExtractionError('document has no extractable words');
  }
  const payload = serializeDocument(header, words);
  const problems = validateSerialized(payload);
  if (problems.length > 0) {
    throw new ExtractionError(`schema violation in output: ${problems[0]}`);
  }
  return {
    payload,
    manifest: {
      word_count: words.length,
      page_count: header.pages.length,
      warnings,
    },
  };
}
