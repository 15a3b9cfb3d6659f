/**
 * Reader for the toolkit's dataset directory layout: `manifest.json`
 * listing image files with classes, plus 8-bit RGB PNGs under `images/`.
 */

import {promises as fs} from 'fs';
import * as path from 'path';
import {PNG} from 'pngjs';

export interface ManifestFile {
  path: string;
  class: string;
  mask_paths: Record<string, string>;
}

export interface Manifest {
  name: string;
  classes: string[];
  image_size: number;
  files: ManifestFile[];
}

export async function loadManifest(datasetDir: string): Promise<Manifest> {
  const raw = await fs.readFile(path.join(datasetDir, 'manifest.json'), 'utf-8');
  return JSON.parse(raw) as Manifest;
}

/** Stable image id `<class>_<stem>` matching the toolkit's convention. */
export function recordId(entry: ManifestFile): string {
  const stem = path.basename(entry.path).replace(/\.[^.]+$/, '');
  return `${entry.class}_${stem}`;
}

/** Decode a dataset PNG to float32 RGB in [0, 1], shape (h, w, 3) row-major. */
export async function loadImage(
    datasetDir: string, entry: ManifestFile):
    Promise<{height: number; width: number; data: Float32Array}> {
  const raw = await fs.readFile(path.join(datasetDir, entry.path));
  const png = PNG.sync.read(raw);
  const out = new Float32Array(png.height * png.width * 3);
  for (let i = 0; i < png.height * png.width; i++) {
    out[i * 3] = png.data[i * 4] / 255;
    out[i * 3 + 1] = png.data[i * 4 + 1] / 255;
    out[i * 3 + 2] = png.data[i * 4 + 2] / 255;
  }
  return {height: png.height, width: png.width, data: out};
}
