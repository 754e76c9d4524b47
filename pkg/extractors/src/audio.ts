/**
 * Audio frontend: WAV file -> mono 1-second window -> log-mel patches.
 *
 * The mel pipeline follows the usual 25 ms / 10 ms framing with an HTK mel
 * filterbank and log(mel + offset) compression; per-model parameters live
 * in the registry (models.ts).  Frame patches are what the embedding
 * models consume; their per-patch outputs get mean-pooled downstream.
 */

import { readFileSync } from 'fs'

import wav from 'node-wav'
import type * as tfType from '@tensorflow/tfjs'

export interface AudioFrontendSpec {
  sampleRate: number
  windowSeconds: number
  hopSeconds: number
  melBands: number
  fminHz: number
  fmaxHz: number
  patchFrames: number
  patchHopFrames: number
  logOffset: number
}

export function decodeWavMono(path: string): { sampleRate: number; samples: Float32Array } {
  const decoded = wav.decode(readFileSync(path))
  const channels: Float32Array[] = decoded.channelData
  if (!channels.length) {
    throw new Error(`${path}: no audio channels`)
  }
  const n = channels[0].length
  const mono = new Float32Array(n)
  for (const channel of channels) {
    for (let i = 0; i < n; i++) mono[i] += channel[i] / channels.length
  }
  return { sampleRate: decoded.sampleRate, samples: mono }
}

export function resampleLinear(samples: Float32Array, srIn: number, srOut: number): Float32Array {
  if (srIn === srOut) return samples
  const n = Math.max(1, Math.round((samples.length * srOut) / srIn))
  const out = new Float32Array(n)
  for (let i = 0; i < n; i++) {
    const t = (i * srIn) / srOut
    const lo = Math.floor(t)
    const hi = Math.min(lo + 1, samples.length - 1)
    out[i] = samples[lo] + (t - lo) * (samples[hi] - samples[lo])
  }
  return out
}

/** Center 1-second window, zero-padded when the clip is shorter. */
export function centerSecond(samples: Float32Array, sampleRate: number): Float32Array {
  const out = new Float32Array(sampleRate)
  const start = Math.max(0, Math.floor((samples.length - sampleRate) / 2))
  const available = Math.min(sampleRate, samples.length)
  const pad = Math.floor((sampleRate - available) / 2)
  out.set(samples.subarray(start, start + available), pad)
  return out
}

const hzToMel = (hz: number) => 2595 * Math.log10(1 + hz / 700)
const melToHz = (mel: number) => 700 * (10 ** (mel / 2595) - 1)

/** Triangular HTK filterbank, (numFreqBins x melBands). */
export function melFilterbank(
  numFreqBins: number,
  sampleRate: number,
  melBands: number,
  fminHz: number,
  fmaxHz: number,
): Float32Array[] {
  const nyquist = sampleRate / 2
  const melEdges: number[] = []
  const lo = hzToMel(fminHz)
  const hi = hzToMel(Math.min(fmaxHz, nyquist))
  for (let i = 0; i < melBands + 2; i++) {
    melEdges.push(melToHz(lo + ((hi - lo) * i) / (melBands + 1)))
  }
  const binHz = nyquist / (numFreqBins - 1)
  const bank: Float32Array[] = []
  for (let k = 0; k < numFreqBins; k++) {
    const row = new Float32Array(melBands)
    const f = k * binHz
    for (let m = 0; m < melBands; m++) {
      const [left, center, right] = [melEdges[m], melEdges[m + 1], melEdges[m + 2]]
      if (f > left && f < right) {
        row[m] = f <= center ? (f - left) / (center - left) : (right - f) / (right - center)
      }
    }
    bank.push(row)
  }
  return bank
}

/**
 * Log-mel spectrogram patches of a 1-second window: (patches, frames,
 * melBands, 1).  Runs under tf.tidy; the caller owns the returned tensor.
 */
export function logMelPatches(
  tf: typeof tfType,
  samples: Float32Array,
  spec: AudioFrontendSpec,
): tfType.Tensor4D {
  const winLength = Math.round(spec.windowSeconds * spec.sampleRate)
  const hopLength = Math.round(spec.hopSeconds * spec.sampleRate)
  const fftLength = 2 ** Math.ceil(Math.log2(winLength))

  return tf.tidy(() => {
    const signal = tf.tensor1d(samples)
    const stft = tf.signal.stft(signal, winLength, hopLength, fftLength)
    const magnitude = tf.abs(stft) // (frames, fftLength/2 + 1)
    const bank = melFilterbank(
      fftLength / 2 + 1, spec.sampleRate, spec.melBands, spec.fminHz, spec.fmaxHz,
    )
    const filter = tf.tensor2d(
      bank.map(row => Array.from(row)), [fftLength / 2 + 1, spec.melBands],
    )
    const mel = tf.matMul(magnitude, filter)
    const logMel = tf.log(tf.add(mel, spec.logOffset)) as tfType.Tensor2D

    const frames = logMel.shape[0]
    const silence = Math.log(spec.logOffset)
    const padded =
      frames >= spec.patchFrames
        ? logMel
        : tf.pad(logMel, [[0, spec.patchFrames - frames], [0, 0]], silence)
    const total = padded.shape[0]
    const starts: number[] = []
    for (let s = 0; s + spec.patchFrames <= total; s += spec.patchHopFrames) {
      starts.push(s)
    }
    const patches = starts.map(s =>
      tf.slice(padded, [s, 0], [spec.patchFrames, spec.melBands]),
    )
    return tf.stack(patches).expandDims(3) as tfType.Tensor4D
  })
}

/** Full path to model input: decode, mono, resample, window, featurize. */
export function wavToPatches(
  tf: typeof tfType,
  path: string,
  spec: AudioFrontendSpec,
): tfType.Tensor4D {
  const { sampleRate, samples } = decodeWavMono(path)
  const resampled = resampleLinear(samples, sampleRate, spec.sampleRate)
  return logMelPatches(tf, centerSecond(resampled, spec.sampleRate), spec)
}
