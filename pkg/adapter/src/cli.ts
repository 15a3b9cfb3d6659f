#!/usr/bin/env node
/** Command line entry: `adapter dump --model ... --layers ... --dataset ... --out ...`. */

import {pathToFileURL} from 'node:url';

import {Command} from 'commander';

import {dumpDataset} from './dump.js';

function splitList(raw: string): string[] {
  return raw.split(',').map((s) => s.trim()).filter((s) => s.length > 0);
}

function parseClasses(raw: string | undefined): number[] | undefined {
  if (raw === undefined) {
    return undefined;
  }
  return splitList(raw).map((s) => {
    const k = Number(s);
    if (!Number.isInteger(k) || k < 0) {
      throw new Error(`bad class index '${s}'`);
    }
    return k;
  });
}

export function buildProgram(): Command {
  const program = new Command();
  program.name('adapter')
      .description('dump per-image layer activations and logit gradients as ECTF files');
  program.command('dump')
      .description('walk a dataset manifest and write tap files for each image')
      .requiredOption('--model <ref>', 'directory holding model.json and weights.bin')
      .requiredOption('--layers <names>', 'comma-separated layer names to tap')
      .requiredOption('--dataset <dir>', 'dataset directory containing manifest.json')
      .requiredOption('--out <dir>', 'directory to write tap files into')
      .option('--classes <list>', 'comma-separated logit class indices (default: all)')
      .action(async (opts: {model: string; layers: string; dataset: string;
                            out: string; classes?: string}) => {
        const stats = await dumpDataset({
          modelDir: opts.model,
          layers: splitList(opts.layers),
          datasetDir: opts.dataset,
          outDir: opts.out,
          classes: parseClasses(opts.classes),
        });
        console.log(`wrote ${stats.written} tap files ` +
                    `(${stats.skipped} already present) over ${stats.images} images`);
      });
  return program;
}

export async function main(argv: string[]): Promise<number> {
  try {
    await buildProgram().parseAsync(argv, {from: 'user'});
    return 0;
  } catch (err) {
    console.error(`adapter: ${err instanceof Error ? err.message : String(err)}`);
    return 1;
  }
}

const invokedDirectly = process.argv[1] !== undefined &&
    import.meta.url === pathToFileURL(process.argv[1]).href;
if (invokedDirectly) {
  main(process.argv.slice(2)).then((code) => {
    process.exitCode = code;
  });
}
