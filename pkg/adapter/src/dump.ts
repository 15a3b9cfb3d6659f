/**
 * Batch tap dumper: walks a dataset manifest and writes per-image
 * activation and gradient files plus a `taps_manifest.json` index.
 *
 * Output layout, consumed downstream by record id:
 *   <id>.acts.ectf          one entry per tap layer, channel-last
 *   <id>.class<k>.grads.ectf  logit-k gradients, same entry order/shapes
 *
 * Existing files are kept as-is, so an interrupted run can be resumed
 * by invoking the dump again with the same arguments.
 */

import * as fs from 'node:fs';
import * as path from 'node:path';

import * as tf from '@tensorflow/tfjs';

import {loadImage, loadManifest, recordId} from './dataset.js';
import {toBytes} from './ectf.js';
import {loadModel} from './modelio.js';
import {makeSpec, tapActivations, tapGradients, toInput, TapSpec} from './taps.js';

export interface DumpOptions {
  modelDir: string;
  layers: string[];
  datasetDir: string;
  outDir: string;
  /** logit classes to take gradients for; defaults to every class */
  classes?: number[];
}

export interface DumpStats {
  images: number;
  written: number;
  skipped: number;
}

function tapShapes(spec: TapSpec, imageSize: number): Record<string, number[]> {
  const probe = tf.zeros([1, imageSize, imageSize, 3]) as tf.Tensor4D;
  const entries = tapActivations(spec, probe);
  probe.dispose();
  const shapes: Record<string, number[]> = {};
  for (const entry of entries) {
    shapes[entry.name] = [entry.height, entry.width, entry.channels];
  }
  return shapes;
}

export async function dumpDataset(opts: DumpOptions): Promise<DumpStats> {
  const model = await loadModel(opts.modelDir);
  const spec = makeSpec(model, opts.layers);
  const dataset = await loadManifest(opts.datasetDir);

  const classes = opts.classes ?? [...Array(spec.nClasses).keys()];
  for (const k of classes) {
    if (!Number.isInteger(k) || k < 0 || k >= spec.nClasses) {
      throw new Error(`class ${k} out of range [0, ${spec.nClasses})`);
    }
  }

  fs.mkdirSync(opts.outDir, {recursive: true});
  const stats: DumpStats = {images: dataset.files.length, written: 0, skipped: 0};

  for (const record of dataset.files) {
    const id = recordId(record);
    const targets = [
      {file: `${id}.acts.ectf`, classK: null as number | null},
      ...classes.map((k) => ({file: `${id}.class${k}.grads.ectf`, classK: k as number | null})),
    ];
    let input: tf.Tensor4D | null = null;
    for (const target of targets) {
      const dest = path.join(opts.outDir, target.file);
      if (fs.existsSync(dest)) {
        stats.skipped += 1;
        continue;
      }
      input = input ?? toInput(await loadImage(opts.datasetDir, record));
      const entries = target.classK === null
          ? tapActivations(spec, input)
          : tapGradients(spec, input, target.classK);
      fs.writeFileSync(dest, toBytes(entries));
      stats.written += 1;
    }
    input?.dispose();
  }

  const manifest = {
    model: opts.modelDir,
    layers: spec.layers,
    shapes: tapShapes(spec, dataset.image_size),
    n_classes: spec.nClasses,
    classes,
    dataset: dataset.name,
    image_count: dataset.files.length,
    preprocessing: 'rgb over 255, channel-last',
  };
  fs.writeFileSync(path.join(opts.outDir, 'taps_manifest.json'),
                   JSON.stringify(manifest, null, 2) + '\n');
  return stats;
}
