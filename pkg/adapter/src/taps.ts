/**
 * Activation and class-gradient extraction at named layers of a tfjs
 * layers model.
 *
 * The model is treated as a single layer chain (sequential topology);
 * activations come from one forward pass that caches every intermediate,
 * and the gradient of a class logit with respect to a tapped activation
 * is taken by differentiating the remaining chain from that activation.
 * When the network ends in a softmax (standalone activation layer or one
 * fused into the final dense layer), the gradient target is the
 * pre-softmax logit instead of the probability.
 */

import * as tf from '@tensorflow/tfjs';

import {Entry} from './ectf.js';

export interface TapSpec {
  model: tf.LayersModel;
  /** ordered tap layer names; this order is recorded in every output file */
  layers: string[];
  nClasses: number;
}

interface LogitsHead {
  /** chain prefix length whose output feeds the logit projection */
  upTo: number;
  project: (hidden: tf.Tensor) => tf.Tensor;
}

function logitsHead(layers: tf.layers.Layer[]): LogitsHead {
  const last = layers[layers.length - 1];
  const cfg = last.getConfig() as {activation?: string};
  if (last.getClassName() === 'Activation' && cfg.activation === 'softmax') {
    return {upTo: layers.length - 1, project: (hidden) => hidden};
  }
  if (last.getClassName() === 'Dense' && cfg.activation === 'softmax') {
    const [kernel, bias] = last.getWeights();
    return {
      upTo: layers.length - 1,
      project: (hidden) => {
        const z = tf.matMul(hidden as tf.Tensor2D, kernel as tf.Tensor2D);
        return bias === undefined ? z : tf.add(z, bias);
      },
    };
  }
  return {upTo: layers.length, project: (hidden) => hidden};
}

export function makeSpec(model: tf.LayersModel, layerNames: string[]): TapSpec {
  const known = model.layers.map((layer) => layer.name);
  for (const name of layerNames) {
    if (!known.includes(name)) {
      throw new Error(`unknown layer '${name}'; available: ${known.join(', ')}`);
    }
  }
  const logitShape = model.outputs[0].shape;
  const nClasses = logitShape[logitShape.length - 1] as number;

  // the gradient pass re-applies layers one after another, which is only
  // faithful for a single-chain graph; verify once against predict()
  const probeShape = model.inputs[0].shape.map((d) => d ?? 1);
  let chainGap = Infinity;
  try {
    tf.tidy(() => {
      const probe = tf.randomUniform(probeShape, 0, 1, 'float32', 7);
      let h: tf.Tensor = probe;
      for (const layer of model.layers) {
        h = layer.apply(h) as tf.Tensor;
      }
      const direct = model.predict(probe) as tf.Tensor;
      chainGap = tf.max(tf.abs(tf.sub(h, direct))).dataSync()[0];
    });
  } catch {
    chainGap = Infinity;
  }
  if (!(chainGap < 1e-5)) {
    throw new Error('model graph is not a single layer chain');
  }
  return {model, layers: layerNames, nClasses};
}

function asEntry(name: string, t: tf.Tensor): Entry {
  const squeezed = t.squeeze([0]);
  const [height, width, channels] =
      squeezed.rank === 3 ? squeezed.shape as [number, number, number]
                          : [1, 1, squeezed.size];
  const data = squeezed.dataSync() as Float32Array;
  squeezed.dispose();
  return {name, height, width, channels, data: Float32Array.from(data)};
}

function forwardAll(spec: TapSpec, input: tf.Tensor): tf.Tensor[] {
  const acts: tf.Tensor[] = [];
  let h = input;
  for (const layer of spec.model.layers) {
    h = layer.apply(h) as tf.Tensor;
    acts.push(h);
  }
  return acts;
}

/** One ECTF entry per tap layer, in spec order. */
export function tapActivations(spec: TapSpec, input: tf.Tensor4D): Entry[] {
  const entries: Entry[] = [];
  tf.tidy(() => {
    const acts = forwardAll(spec, input);
    for (const name of spec.layers) {
      const idx = spec.model.layers.findIndex((layer) => layer.name === name);
      entries.push(asEntry(name, acts[idx]));
    }
  });
  return entries;
}

/**
 * Gradients of the class-k logit with respect to each tapped activation,
 * same entry order and shapes as `tapActivations`.
 */
export function tapGradients(
    spec: TapSpec, input: tf.Tensor4D, classK: number): Entry[] {
  if (!Number.isInteger(classK) || classK < 0 || classK >= spec.nClasses) {
    throw new Error(`class ${classK} out of range [0, ${spec.nClasses})`);
  }
  const entries: Entry[] = [];
  tf.tidy(() => {
    const layers = spec.model.layers;
    const head = logitsHead(layers);
    const acts = forwardAll(spec, input);
    for (const name of spec.layers) {
      const idx = layers.findIndex((layer) => layer.name === name);
      const logitK = (tapped: tf.Tensor) => {
        let h = tapped;
        for (let i = idx + 1; i < head.upTo; i++) {
          h = layers[i].apply(h) as tf.Tensor;
        }
        const logits = head.project(h) as tf.Tensor2D;
        return logits.slice([0, classK], [1, 1]).reshape([]) as tf.Scalar;
      };
      entries.push(asEntry(name, tf.grad(logitK)(acts[idx])));
    }
  });
  return entries;
}

/** Image floats (h, w, 3) to the model's batched input tensor. */
export function toInput(
    image: {height: number; width: number; data: Float32Array}): tf.Tensor4D {
  return tf.tensor4d(image.data, [1, image.height, image.width, 3]);
}
