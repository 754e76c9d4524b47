/**
 * Image frontend: PNG file -> resized float tensor with the preprocessing
 * the embedding model family expects ("caffe" channel-mean subtraction in
 * BGR order for the ImageNet classifiers, plain [0, 1] scaling otherwise).
 */

import { readFileSync } from 'fs'

import { PNG } from 'pngjs'
import type * as tfType from '@tensorflow/tfjs'

export type ImagePreprocess = 'caffe' | 'unit'

export interface ImageFrontendSpec {
  size: number
  preprocess: ImagePreprocess
}

const CAFFE_BGR_MEANS = [103.939, 116.779, 123.68]

export function decodePng(path: string): { width: number; height: number; rgb: Float32Array } {
  const png = PNG.sync.read(readFileSync(path))
  const rgb = new Float32Array(png.width * png.height * 3)
  for (let i = 0; i < png.width * png.height; i++) {
    rgb[3 * i] = png.data[4 * i]
    rgb[3 * i + 1] = png.data[4 * i + 1]
    rgb[3 * i + 2] = png.data[4 * i + 2]
  }
  return { width: png.width, height: png.height, rgb }
}

/** Decoded image -> (1, size, size, 3) model input.  Caller owns the tensor. */
export function imageToInput(
  tf: typeof tfType,
  image: { width: number; height: number; rgb: Float32Array },
  spec: ImageFrontendSpec,
): tfType.Tensor4D {
  return tf.tidy(() => {
    const raw = tf.tensor3d(image.rgb, [image.height, image.width, 3])
    const resized = tf.image.resizeBilinear(raw, [spec.size, spec.size])
    let out: tfType.Tensor3D
    if (spec.preprocess === 'caffe') {
      const bgr = tf.reverse(resized, 2)
      out = tf.sub(bgr, tf.tensor1d(CAFFE_BGR_MEANS)) as tfType.Tensor3D
    } else {
      out = tf.div(resized, 255) as tfType.Tensor3D
    }
    return out.expandDims(0) as tfType.Tensor4D
  })
}

export function pngToInput(
  tf: typeof tfType,
  path: string,
  spec: ImageFrontendSpec,
): tfType.Tensor4D {
  return imageToInput(tf, decodePng(path), spec)
}
