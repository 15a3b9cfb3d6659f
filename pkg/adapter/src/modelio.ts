/**
 * File round-trip for tfjs layers models without the native node binding:
 * a directory holding `model.json` (topology + weight specs) and
 * `weights.bin` (little-endian weight payload).
 */

import * as tf from '@tensorflow/tfjs';
import {promises as fs} from 'fs';
import * as path from 'path';

export async function saveModel(model: tf.LayersModel, dir: string): Promise<void> {
  await fs.mkdir(dir, {recursive: true});
  await model.save(tf.io.withSaveHandler(async (artifacts) => {
    const weightData = artifacts.weightData as ArrayBuffer;
    await fs.writeFile(path.join(dir, 'model.json'), JSON.stringify({
      modelTopology: artifacts.modelTopology,
      weightSpecs: artifacts.weightSpecs,
    }));
    await fs.writeFile(path.join(dir, 'weights.bin'), Buffer.from(weightData));
    return {modelArtifactsInfo: {dateSaved: new Date(), modelTopologyType: 'JSON'}};
  }));
}

export async function loadModel(dir: string): Promise<tf.LayersModel> {
  let doc: {modelTopology: {}; weightSpecs: tf.io.WeightsManifestEntry[]};
  try {
    doc = JSON.parse(await fs.readFile(path.join(dir, 'model.json'), 'utf-8'));
  } catch (err) {
    throw new Error(`cannot read model.json under '${dir}': ${(err as Error).message}`);
  }
  const weights = await fs.readFile(path.join(dir, 'weights.bin'));
  return tf.loadLayersModel(tf.io.fromMemory({
    modelTopology: doc.modelTopology,
    weightSpecs: doc.weightSpecs,
    weightData: weights.buffer.slice(
        weights.byteOffset, weights.byteOffset + weights.byteLength),
  }));
}
