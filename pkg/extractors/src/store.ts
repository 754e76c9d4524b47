/**
 * Embedding store directories in the xmodal on-disk format.
 *
 * manifest.jsonl: one JSON object per line with keys exactly
 *   {sample_id, clip_id, modality, labels, split, embedding_model}.
 * embeddings.xmeb (little-endian): magic "XMEB", version u16 = 1, dim u32,
 *   count u64, then count x dim IEEE-754 f32 row-major.  The file size must
 *   equal 18 + 4 * dim * count bytes.
 */

import { mkdirSync, readFileSync, writeFileSync } from 'fs'
import { join } from 'path'

export const MAGIC = 'XMEB'
export const VERSION = 1
const HEADER_BYTES = 18

export type Modality = 'audio' | 'image'
export type Split = 'train' | 'val' | 'test'

export interface SampleMeta {
  sample_id: string
  clip_id: string
  modality: Modality
  labels: string[]
  split: Split
  embedding_model: string
}

export class StoreFormatError extends Error {}
export class StoreValidationError extends Error {}

export function validateRows(metas: SampleMeta[], rows: Float32Array[], dim: number): void {
  if (metas.length !== rows.length) {
    throw new StoreFormatError(
      `manifest has ${metas.length} records but matrix has ${rows.length} rows`,
    )
  }
  const seen = new Set<string>()
  metas.forEach((meta, i) => {
    if (seen.has(meta.sample_id)) {
      throw new StoreValidationError(`duplicate sample_id ${meta.sample_id} at row ${i}`)
    }
    seen.add(meta.sample_id)
    if (!meta.labels.length) {
      throw new StoreValidationError(`row ${i} (${meta.sample_id}) has no labels`)
    }
  })
  rows.forEach((row, i) => {
    if (row.length !== dim) {
      throw new StoreFormatError(`row ${i} has dim ${row.length}, expected ${dim}`)
    }
    for (const value of row) {
      if (!Number.isFinite(value)) {
        throw new StoreValidationError(`non-finite embedding value at row ${i}`)
      }
    }
  })
}

export function writeStore(dir: string, metas: SampleMeta[], rows: Float32Array[], dim: number): void {
  validateRows(metas, rows, dim)
  mkdirSync(dir, { recursive: true })

  const manifest = metas
    .map(meta =>
      JSON.stringify({
        sample_id: meta.sample_id,
        clip_id: meta.clip_id,
        modality: meta.modality,
        labels: meta.labels,
        split: meta.split,
        embedding_model: meta.embedding_model,
      }),
    )
    .join('\n')
  writeFileSync(join(dir, 'manifest.jsonl'), manifest + (metas.length ? '\n' : ''))

  const payload = Buffer.alloc(HEADER_BYTES + 4 * dim * rows.length)
  payload.write(MAGIC, 0, 'ascii')
  payload.writeUInt16LE(VERSION, 4)
  payload.writeUInt32LE(dim, 6)
  payload.writeBigUInt64LE(BigInt(rows.length), 10)
  const view = new DataView(payload.buffer, payload.byteOffset)
  rows.forEach((row, i) => {
    const base = HEADER_BYTES + 4 * dim * i
    for (let j = 0; j < dim; j++) {
      view.setFloat32(base + 4 * j, row[j], true)
    }
  })
  writeFileSync(join(dir, 'embeddings.xmeb'), payload)
}

export interface LoadedStore {
  metas: SampleMeta[]
  rows: Float32Array[]
  dim: number
}

/** Read a store back, checking magic, version, and the promised byte count. */
export function readStore(dir: string): LoadedStore {
  const blob = readFileSync(join(dir, 'embeddings.xmeb'))
  if (blob.length < HEADER_BYTES) {
    throw new StoreFormatError(`${dir}: file shorter than the 18-byte header`)
  }
  if (blob.toString('ascii', 0, 4) !== MAGIC) {
    throw new StoreFormatError(`${dir}: bad magic`)
  }
  if (blob.readUInt16LE(4) !== VERSION) {
    throw new StoreFormatError(`${dir}: unsupported version ${blob.readUInt16LE(4)}`)
  }
  const dim = blob.readUInt32LE(6)
  const count = Number(blob.readBigUInt64LE(10))
  if (blob.length !== HEADER_BYTES + 4 * dim * count) {
    throw new StoreFormatError(
      `${dir}: payload is ${blob.length} bytes, header promises ${HEADER_BYTES + 4 * dim * count}`,
    )
  }
  const view = new DataView(blob.buffer, blob.byteOffset)
  const rows: Float32Array[] = []
  for (let i = 0; i < count; i++) {
    const row = new Float32Array(dim)
    for (let j = 0; j < dim; j++) {
      row[j] = view.getFloat32(HEADER_BYTES + 4 * (dim * i + j), true)
    }
    rows.push(row)
  }

  const lines = readFileSync(join(dir, 'manifest.jsonl'), 'utf8')
    .split('\n')
    .filter(line => line.trim().length)
  const metas = lines.map(line => JSON.parse(line) as SampleMeta)
  validateRows(metas, rows, dim)
  return { metas, rows, dim }
}
