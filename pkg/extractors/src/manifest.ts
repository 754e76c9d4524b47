/**
 * Media manifests: one JSON object per line describing a clip's local
 * audio and image files plus its labels and split.
 *
 *   {"clip_id": "c1", "audio_path": "c1.wav", "image_path": "c1.png",
 *    "labels": ["guitar"], "split": "train"}
 *
 * Entries may carry video_path/frame_time instead of image_path; video
 * decoding is out of scope here, so such entries are skipped with a
 * warning when extracting images.
 */

import { readFileSync } from 'fs'

import type { Split } from './store.js'

export interface MediaEntry {
  clip_id: string
  audio_path?: string
  image_path?: string
  video_path?: string
  frame_time?: number
  labels: string[]
  split: Split
}

export class ManifestError extends Error {}

export function readMediaManifest(path: string): MediaEntry[] {
  const lines = readFileSync(path, 'utf8')
    .split('\n')
    .filter(line => line.trim().length)
  const seen = new Set<string>()
  return lines.map((line, i) => {
    let entry: MediaEntry
    try {
      entry = JSON.parse(line)
    } catch (err) {
      throw new ManifestError(`${path}:${i + 1}: not valid JSON`)
    }
    if (!entry.clip_id || !Array.isArray(entry.labels) || !entry.labels.length) {
      throw new ManifestError(`${path}:${i + 1}: needs clip_id and non-empty labels`)
    }
    if (!['train', 'val', 'test'].includes(entry.split)) {
      throw new ManifestError(`${path}:${i + 1}: bad split ${JSON.stringify(entry.split)}`)
    }
    if (seen.has(entry.clip_id)) {
      throw new ManifestError(`${path}:${i + 1}: duplicate clip_id ${entry.clip_id}`)
    }
    seen.add(entry.clip_id)
    return entry
  })
}
