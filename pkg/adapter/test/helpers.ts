import * as tf from '@tensorflow/tfjs';

/** Small deterministic PRNG so test models are identical run to run. */
export function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) | 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export function seedWeights(model: tf.LayersModel, seed: number): void {
  const rand = mulberry32(seed);
  for (const layer of model.layers) {
    const current = layer.getWeights();
    if (current.length === 0) {
      continue;
    }
    const fresh = current.map((w) => {
      const vals = new Float32Array(w.size);
      for (let i = 0; i < vals.length; i++) {
        vals[i] = (rand() * 2 - 1) * 0.5;
      }
      return tf.tensor(vals, w.shape);
    });
    layer.setWeights(fresh);
    fresh.forEach((t) => t.dispose());
  }
}

export type HeadKind = 'linear' | 'softmaxDense' | 'softmaxLayer';

/** conv/pool/conv/pool/flatten/dense-2 chain with stable layer names. */
export function tinyModel(inputSize: number, head: HeadKind = 'linear'): tf.LayersModel {
  const model = tf.sequential();
  model.add(tf.layers.conv2d({
    name: 'conv1', filters: 4, kernelSize: 3, padding: 'same',
    activation: 'relu', inputShape: [inputSize, inputSize, 3],
  }));
  model.add(tf.layers.maxPooling2d({name: 'pool1', poolSize: 2}));
  model.add(tf.layers.conv2d({
    name: 'conv2', filters: 6, kernelSize: 3, padding: 'same', activation: 'relu',
  }));
  model.add(tf.layers.maxPooling2d({name: 'pool2', poolSize: 2}));
  model.add(tf.layers.flatten({name: 'flat'}));
  model.add(tf.layers.dense({
    name: 'head', units: 2,
    activation: head === 'softmaxDense' ? 'softmax' : 'linear',
  }));
  if (head === 'softmaxLayer') {
    model.add(tf.layers.activation({name: 'probs', activation: 'softmax'}));
  }
  return model;
}

/** Copy weights layer-by-layer between models that share layer names. */
export function copyWeights(src: tf.LayersModel, dst: tf.LayersModel): void {
  for (const layer of src.layers) {
    const weights = layer.getWeights();
    if (weights.length > 0) {
      dst.getLayer(layer.name).setWeights(weights);
    }
  }
}

export function randomInput(size: number, seed: number): tf.Tensor4D {
  const rand = mulberry32(seed);
  const vals = new Float32Array(size * size * 3);
  for (let i = 0; i < vals.length; i++) {
    vals[i] = rand();
  }
  return tf.tensor4d(vals, [1, size, size, 3]);
}
