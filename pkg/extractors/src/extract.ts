/**
 * Manifest-driven embedding extraction: run one pre-trained model over the
 * media files a manifest lists and emit a spec-conformant store directory.
 *
 * Undecodable or missing files are skipped with a warning and excluded
 * from the output manifest; row order follows manifest order.
 */

import type * as tfType from '@tensorflow/tfjs'

import { wavToPatches } from './audio.js'
import { pngToInput } from './image.js'
import { MediaEntry, readMediaManifest } from './manifest.js'
import { embedBatch, specFor } from './models.js'
import { SampleMeta, writeStore } from './store.js'

export interface ExtractOptions {
  tf: typeof tfType
  model: tfType.LayersModel
  modelName: string
  manifestPath: string
  outDir: string
  warn?: (message: string) => void
}

export interface ExtractResult {
  written: number
  skipped: string[]
}

function mediaPath(entry: MediaEntry, modality: string): string | undefined {
  if (modality === 'audio') return entry.audio_path
  if (entry.image_path) return entry.image_path
  return undefined
}

export async function extractToStore(options: ExtractOptions): Promise<ExtractResult> {
  const { tf, model, modelName, manifestPath, outDir } = options
  const warn = options.warn ?? ((message: string) => console.warn(message))
  const spec = specFor(modelName)
  const entries = readMediaManifest(manifestPath)

  const metas: SampleMeta[] = []
  const rows: Float32Array[] = []
  const skipped: string[] = []

  for (const entry of entries) {
    const path = mediaPath(entry, spec.modality)
    if (!path) {
      const reason = entry.video_path
        ? 'video frame extraction is not supported; provide image_path'
        : `no ${spec.modality} path`
      warn(`skipping ${entry.clip_id}: ${reason}`)
      skipped.push(entry.clip_id)
      continue
    }
    let input: tfType.Tensor4D
    try {
      input =
        spec.modality === 'audio'
          ? wavToPatches(tf, path, spec.audio!)
          : pngToInput(tf, path, spec.image!)
    } catch (err) {
      warn(`skipping ${entry.clip_id}: cannot decode ${path} (${(err as Error).message})`)
      skipped.push(entry.clip_id)
      continue
    }
    try {
      rows.push(embedBatch(tf, model, modelName, input))
    } finally {
      input.dispose()
    }
    metas.push({
      sample_id: `${entry.clip_id}-${spec.modality}`,
      clip_id: entry.clip_id,
      modality: spec.modality,
      labels: entry.labels,
      split: entry.split,
      embedding_model: modelName,
    })
  }

  writeStore(outDir, metas, rows, spec.dim)
  return { written: metas.length, skipped }
}
