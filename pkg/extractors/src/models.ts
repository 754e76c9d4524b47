/**
 * Registry of supported pre-trained embedding models (name, modality,
 * output dimension, frontend parameters) plus directory-based model
 * loading/saving for tfjs LayersModels.
 *
 * Checkpoints are consumed from a local directory holding model.json +
 * weight shards (the tfjs-converter layout); the published dimension is
 * verified against the model's actual output before any extraction runs.
 */

import { mkdirSync, readFileSync, writeFileSync } from 'fs'
import { join } from 'path'

import type * as tfType from '@tensorflow/tfjs'

import type { AudioFrontendSpec } from './audio.js'
import type { ImageFrontendSpec } from './image.js'
import type { Modality } from './store.js'

export interface ModelSpec {
  modality: Modality
  dim: number
  image?: ImageFrontendSpec
  audio?: AudioFrontendSpec
}

const MEL_16K_96x64: AudioFrontendSpec = {
  sampleRate: 16000,
  windowSeconds: 0.025,
  hopSeconds: 0.01,
  melBands: 64,
  fminHz: 125,
  fmaxHz: 7500,
  patchFrames: 96,
  patchHopFrames: 48,
  logOffset: 0.01,
}

const MEL_48K_WIDE: AudioFrontendSpec = {
  sampleRate: 48000,
  windowSeconds: 0.0427, // 2048-sample window
  hopSeconds: 0.005,
  melBands: 128,
  fminHz: 0,
  fmaxHz: 24000,
  patchFrames: 190,
  patchHopFrames: 190,
  logOffset: 1e-3,
}

export const MODEL_SPECS: Record<string, ModelSpec> = {
  resnet50: { modality: 'image', dim: 2048, image: { size: 224, preprocess: 'caffe' } },
  vgg16: { modality: 'image', dim: 512, image: { size: 224, preprocess: 'caffe' } },
  'openl3-image': { modality: 'image', dim: 8192, image: { size: 224, preprocess: 'unit' } },
  vggish: { modality: 'audio', dim: 128, audio: MEL_16K_96x64 },
  yamnet: { modality: 'audio', dim: 1024, audio: MEL_16K_96x64 },
  'openl3-audio': { modality: 'audio', dim: 6144, audio: MEL_48K_WIDE },
}

export class ModelError extends Error {}

export function specFor(name: string): ModelSpec {
  const spec = MODEL_SPECS[name]
  if (!spec) {
    throw new ModelError(
      `unknown model ${name}; supported: ${Object.keys(MODEL_SPECS).join(', ')}`,
    )
  }
  return spec
}

/** Load a LayersModel from a directory of model.json + weight shards. */
export async function loadModelFromDir(
  tf: typeof tfType,
  dir: string,
): Promise<tfType.LayersModel> {
  const modelJson = JSON.parse(readFileSync(join(dir, 'model.json'), 'utf8'))
  const manifest = modelJson.weightsManifest ?? []
  const weightSpecs = manifest.flatMap((group: any) => group.weights)
  const buffers = manifest.flatMap((group: any) =>
    group.paths.map((p: string) => readFileSync(join(dir, p))),
  )
  const weightData = Buffer.concat(buffers)
  const handler: tfType.io.IOHandler = {
    load: async () => ({
      modelTopology: modelJson.modelTopology,
      format: modelJson.format,
      generatedBy: modelJson.generatedBy,
      convertedBy: modelJson.convertedBy,
      weightSpecs,
      weightData: weightData.buffer.slice(
        weightData.byteOffset,
        weightData.byteOffset + weightData.byteLength,
      ),
    }),
  }
  return tf.loadLayersModel(handler)
}

/** Save a LayersModel as model.json + weights.bin (inverse of the loader). */
export async function saveModelToDir(
  tf: typeof tfType,
  model: tfType.LayersModel,
  dir: string,
): Promise<void> {
  mkdirSync(dir, { recursive: true })
  await model.save(
    tf.io.withSaveHandler(async artifacts => {
      const weightData = Buffer.from(artifacts.weightData as ArrayBuffer)
      writeFileSync(join(dir, 'weights.bin'), weightData)
      writeFileSync(
        join(dir, 'model.json'),
        JSON.stringify({
          modelTopology: artifacts.modelTopology,
          format: artifacts.format,
          generatedBy: artifacts.generatedBy,
          convertedBy: artifacts.convertedBy,
          weightsManifest: [
            { paths: ['weights.bin'], weights: artifacts.weightSpecs },
          ],
        }),
      )
      return { modelArtifactsInfo: { dateSaved: new Date(), modelTopologyType: 'JSON' } }
    }),
  )
}

/**
 * Mean-pool a model output down to one embedding vector.  Spatial maps
 * (1, h, w, c) are averaged over space; per-patch outputs (n, c) are
 * averaged over patches.
 */
export function poolToEmbedding(tf: typeof tfType, output: tfType.Tensor): Float32Array {
  const pooled = tf.tidy(() => {
    let t = output
    if (t.rank === 4) {
      t = tf.mean(t, [1, 2])
    }
    if (t.rank !== 2) {
      throw new ModelError(`cannot pool model output of rank ${output.rank}`)
    }
    return tf.mean(t, 0)
  })
  const data = pooled.dataSync() as Float32Array
  pooled.dispose()
  return Float32Array.from(data)
}

/** One embedding from a prepared input batch, dimension-checked. */
export function embedBatch(
  tf: typeof tfType,
  model: tfType.LayersModel,
  name: string,
  input: tfType.Tensor4D,
): Float32Array {
  const spec = specFor(name)
  const output = model.predict(input) as tfType.Tensor
  const embedding = poolToEmbedding(tf, output)
  output.dispose()
  if (embedding.length !== spec.dim) {
    throw new ModelError(
      `${name} checkpoint emits ${embedding.length}-dim vectors, expected ${spec.dim}`,
    )
  }
  return embedding
}
