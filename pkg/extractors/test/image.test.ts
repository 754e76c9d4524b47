import { mkdtempSync, writeFileSync } from 'fs'
import { tmpdir } from 'os'
import { join } from 'path'

import * as tf from '@tensorflow/tfjs'
import { PNG } from 'pngjs'
import { describe, expect, it } from 'vitest'

import { decodePng, imageToInput, pngToInput } from '../src/image.js'
import { writePng } from './helpers.js'

function tmp(): string {
  return mkdtempSync(join(tmpdir(), 'img-'))
}

function constantPng(path: string, rgb: [number, number, number], size = 16): void {
  const png = new PNG({ width: size, height: size })
  for (let i = 0; i < size * size; i++) {
    png.data[4 * i] = rgb[0]
    png.data[4 * i + 1] = rgb[1]
    png.data[4 * i + 2] = rgb[2]
    png.data[4 * i + 3] = 255
  }
  writeFileSync(path, PNG.sync.write(png))
}

describe('png decoding', () => {
  it('reads dimensions and channels', () => {
    const dir = tmp()
    writePng(join(dir, 'x.png'), 3, 32)
    const image = decodePng(join(dir, 'x.png'))
    expect(image.width).toBe(32)
    expect(image.height).toBe(32)
    expect(image.rgb.length).toBe(32 * 32 * 3)
  })
})

describe('preprocessing', () => {
  it('caffe mode reverses channels and subtracts the BGR means', () => {
    const dir = tmp()
    constantPng(join(dir, 'c.png'), [10, 20, 30])
    const input = pngToInput(tf, join(dir, 'c.png'), { size: 8, preprocess: 'caffe' })
    expect(input.shape).toEqual([1, 8, 8, 3])
    const [b, g, r] = Array.from(input.slice([0, 0, 0, 0], [1, 1, 1, 3]).dataSync())
    input.dispose()
    expect(b).toBeCloseTo(30 - 103.939, 3)
    expect(g).toBeCloseTo(20 - 116.779, 3)
    expect(r).toBeCloseTo(10 - 123.68, 3)
  })

  it('unit mode scales to [0, 1]', () => {
    const dir = tmp()
    constantPng(join(dir, 'u.png'), [255, 0, 128])
    const input = pngToInput(tf, join(dir, 'u.png'), { size: 4, preprocess: 'unit' })
    const values = input.dataSync()
    input.dispose()
    for (const v of values) {
      expect(v).toBeGreaterThanOrEqual(0)
      expect(v).toBeLessThanOrEqual(1)
    }
  })

  it('resizes any source to the model size', () => {
    const image = { width: 5, height: 9, rgb: new Float32Array(5 * 9 * 3).fill(128) }
    const input = imageToInput(tf, image, { size: 224, preprocess: 'unit' })
    expect(input.shape).toEqual([1, 224, 224, 3])
    input.dispose()
  })
})
