#!/usr/bin/env node
/** `nir-export <in.h5> <out.snngraph.json>`: manifest JSON to stdout. */

import { exportNir, NirExportError } from './index.js';

async function main(): Promise<number> {
  const args = process.argv.slice(2);
  if (args.length !== 2) {
    console.error('usage: nir-export <in.h5> <out.snngraph.json>');
    return 1;
  }
  try {
    const manifest = await exportNir(args[0], args[1]);
    console.log(JSON.stringify(manifest, null, 1));
    return 0;
  } catch (e) {
    if (e instanceof NirExportError) {
      console.error(`error: ${e.message}`);
      return 1;
    }
    throw e;
  }
}

main().then((code) => {
  process.exitCode = code;
});
