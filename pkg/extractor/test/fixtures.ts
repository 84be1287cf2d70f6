/**
 * Hand-made PDF fixtures with known ground truth: a centered 20pt bold
 * title, a left-aligned bold section header, and regular body text, drawn
 * word by word so expected word counts are exact.
 */

import { PDFDocument, PDFFont, PDFPage, StandardFonts } from 'pdf-lib';

export interface FixtureTruth {
  wordCount: number;
  titleWords: string[];
  headerWords: string[];
  pageWidth: number;
}

async function drawWords(
  page: PDFPage, font: PDFFont, size: number,
  words: string[], x: number, y: number,
): Promise<number> {
  let cursor = x;
  for (const word of words) {
    page.drawText(word, { x: cursor, y, size, font });
    cursor += font.widthOfTextAtSize(word + ' ', size);
  }
  return cursor;
}

export async function buildFixturePdf(): Promise<{ bytes: Uint8Array; truth: FixtureTruth }> {
  const doc = await PDFDocument.create();
  const page = doc.addPage([612, 792]);
  const regular = await doc.embedFont(StandardFonts.Helvetica);
  const bold = await doc.embedFont(StandardFonts.HelveticaBold);

  const titleWords = ['Harbor', 'Annual', 'Report'];
  const title = titleWords.join(' ');
  const titleWidth = bold.widthOfTextAtSize(title, 20);
  await drawWords(page, bold, 20, titleWords, (612 - titleWidth) / 2, 740);

  const headerWords = ['Findings', 'Overview'];
  await drawWords(page, bold, 14, headerWords, 72, 700);

  const bodyWords = ('the inspection covered drainage culverts along the ' +
    'coastal corridor and found routine wear').split(' ');
  let y = 676;
  for (let i = 0; i < bodyWords.length; i += 6) {
    await drawWords(page, regular, 10, bodyWords.slice(i, i + 6), 72, y);
    y -= 14;
  }

  const bytes = await doc.save();
  return {
    bytes,
    truth: {
      wordCount: titleWords.length + headerWords.length + bodyWords.length,
      titleWords,
      headerWords,
      pageWidth: 612,
    },
  };
}

/** Right column drawn before the left one, to exercise --column-aware. */
export async function buildTwoColumnPdf(): Promise<Uint8Array> {
  const doc = await PDFDocument.create();
  const page = doc.addPage([612, 792]);
  const regular = await doc.embedFont(StandardFonts.Helvetica);
  await drawWords(page, regular, 10, ['right', 'top'], 360, 700);
  await drawWords(page, regular, 10, ['right', 'bottom'], 360, 650);
  await drawWords(page, regular, 10, ['left', 'top'], 72, 700);
  await drawWords(page, regular, 10, ['left', 'bottom'], 72, 650);
  return doc.save();
}

/** Page 2 carries no text at all: must produce a warning. */
export async function buildBlankPagePdf(): Promise<Uint8Array> {
  const doc = await PDFDocument.create();
  const page = doc.addPage([612, 792]);
  const regular = await doc.embedFont(StandardFonts.Helvetica);
  await drawWords(page, regular, 10, ['only', 'page', 'one', 'speaks'], 72, 700);
  doc.addPage([612, 792]);
  return doc.save();
}
