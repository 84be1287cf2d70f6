/**
 * doctables-extract <in.pdf> <out> [--strict] [--column-aware] [--doc-id ID]
 *
 * Converts a PDF into the canonical word-record serialization and prints
 * an extraction manifest (JSON) to stdout. Exit codes: 0 ok, 1 user or
 * file error (strict mode also fails on warnings).
 */

import * as fs from 'fs';
import * as path from 'path';

import { ExtractionError, extractToString } from './extract.js';
import { ExtractOptions, ExtractionManifest } from './types.js';

function usage(): never {
  console.error(
    'usage: doctables-extract <in.pdf> <out> [--strict] [--column-aware] [--doc-id ID]');
  process.exit(1);
}

export async function main(argv: string[]): Promise<number> {
  const positional: string[] = [];
  const options: ExtractOptions = {};
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    if (arg === '--strict') options.strict = true;
    else if (arg === '--column-aware') options.columnAware = true;
    else if (arg === '--doc-id') options.docId = argv[++i];
    else if (arg.startsWith('--')) usage();
    else positional.push(arg);
  }
  if (positional.length !== 2) usage();
  const [input, output] = positional;

  let data: Uint8Array;
  try {
    data = new Uint8Array(fs.readFileSync(input));
  } catch (err) {
    console.error(`error: cannot read ${input}: ${(err as Error).message}`);
    return 1;
  }
  const docId = options.docId ?? path.basename(input).replace(/\.pdf$/i, '');
  try {
    const { payload, manifest } = await extractToString(data, docId, options);
    fs.mkdirSync(path.dirname(path.resolve(output)), { recursive: true });
    fs.writeFileSync(output, payload, 'utf-8');
    const full: ExtractionManifest = { input, output, ...manifest };
    console.log(JSON.stringify(full));
    for (const warning of manifest.warnings) {
      console.error(`warning: ${warning}`);
    }
    if (options.strict && manifest.warnings.length > 0) {
      console.error('error: warnings present under --strict');
      return 1;
    }
    return 0;
  } catch (err) {
    if (err instanceof ExtractionError) {
      console.error(`error: ${err.message}`);
      return 1;
    }
    throw err;
  }
}

const invokedDirectly = process.argv[1] &&
  import.meta.url.endsWith(path.basename(process.argv[1]));
if (invokedDirectly) {
  main(process.argv.slice(2)).then(
    (code) => process.exit(code),
    (err) => {
      console.error(`internal error: ${err?.stack ?? err}`);
      process.exit(3);
    },
  );
}
