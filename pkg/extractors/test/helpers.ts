import { mkdirSync, writeFileSync } from 'fs'
import { join } from 'path'

import * as tf from '@tensorflow/tfjs'
import wav from 'node-wav'
import { PNG } from 'pngjs'

import { saveModelToDir, specFor } from '../src/models.js'

/** Deterministic sine-mix WAV clip on disk. */
export function writeWav(
  path: string,
  opts: { seconds?: number; sampleRate?: number; freqHz?: number; silent?: boolean } = {},
): void {
  const sampleRate = opts.sampleRate ?? 16000
  const seconds = opts.seconds ?? 1.2
  const freq = opts.freqHz ?? 440
  const n = Math.round(seconds * sampleRate)
  const samples = new Float32Array(n)
  if (!opts.silent) {
    for (let i = 0; i < n; i++) {
      samples[i] = 0.5 * Math.sin((2 * Math.PI * freq * i) / sampleRate)
    }
  }
  writeFileSync(path, wav.encode([samples], { sampleRate, float: false, bitDepth: 16 }))
}

/** Small deterministic RGB PNG (gradient keyed on a seed). */
export function writePng(path: string, seed = 0, size = 64): void {
  const png = new PNG({ width: size, height: size })
  for (let y = 0; y < size; y++) {
    for (let x = 0; x < size; x++) {
      const i = 4 * (y * size + x)
      png.data[i] = (x * 4 + seed * 37) % 256
      png.data[i + 1] = (y * 4 + seed * 11) % 256
      png.data[i + 2] = (x + y + seed * 53) % 256
      png.data[i + 3] = 255
    }
  }
  writeFileSync(path, PNG.sync.write(png))
}

/**
 * Tiny stand-in checkpoint with the published output dimension for a model
 * name: heavy pooling first keeps test inference cheap.
 */
export function buildStubModel(name: string, dim?: number): tf.LayersModel {
  const spec = specFor(name)
  const outDim = dim ?? spec.dim
  const model = tf.sequential()
  if (spec.modality === 'image') {
    model.add(
      tf.layers.averagePooling2d({
        poolSize: 32, strides: 32, inputShape: [spec.image!.size, spec.image!.size, 3],
      }),
    )
    model.add(tf.layers.conv2d({ filters: outDim, kernelSize: 1 }))
    model.add(tf.layers.globalAveragePooling2d({}))
  } else {
    const { patchFrames, melBands } = spec.audio!
    model.add(
      tf.layers.averagePooling2d({
        poolSize: [Math.ceil(patchFrames / 10), Math.ceil(melBands / 8)],
        inputShape: [patchFrames, melBands, 1],
      }),
    )
    model.add(tf.layers.flatten())
    model.add(tf.layers.dense({ units: outDim }))
  }
  return model
}

export async function writeStubModelDir(dir: string, name: string, dim?: number): Promise<void> {
  mkdirSync(dir, { recursive: true })
  await saveModelToDir(tf, buildStubModel(name, dim), dir)
}

export function writeManifest(path: string, entries: object[]): void {
  writeFileSync(path, entries.map(e => JSON.stringify(e)).join('\n') + '\n')
}

export function mediaEntry(
  clip: string,
  dir: string,
  overrides: Record<string, unknown> = {},
): Record<string, unknown> {
  return {
    clip_id: clip,
    audio_path: join(dir, `${clip}.wav`),
    image_path: join(dir, `${clip}.png`),
    labels: ['guitar'],
    split: 'train',
    ...overrides,
  }
}
