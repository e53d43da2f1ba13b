/**
 * Export job: load a 224x224 single-channel map image, replicate it to
 * the three input channels with ImageNet normalization, run the frozen
 * conv stack, and write the activations as an FMAP tensor plus a
 * provenance sidecar.
 */

import * as fs from 'node:fs'

import * as tf from '@tensorflow/tfjs'

import { BadInputShape, NonFiniteValue } from './errors.js'
import { readFmap, writeFmap } from './fmap.js'
import { INPUT_SIZE, ModelId, ModelWeights, lastConvFeatures, loadWeights } from './model.js'

// standard ImageNet channel statistics used by both model families
const MEAN = [0.485, 0.456, 0.406]
const STD = [0.229, 0.224, 0.225]

export function loadMapImage(path: string): Float32Array {
  const gray = path.endsWith('.pgm') ? readPgm(path) : readFmapImage(path)
  if (gray.length !== INPUT_SIZE * INPUT_SIZE) {
    throw new BadInputShape(
      `${path}: expected ${INPUT_SIZE}x${INPUT_SIZE} pixels, got ${gray.length}`,
    )
  }
  return gray
}

function readFmapImage(path: string): Float32Array {
  const { dims, data } = readFmap(path)
  const squeezed = dims.filter((d) => d !== 1)
  if (squeezed.length !== 2 || squeezed.some((d) => d !== INPUT_SIZE)) {
    throw new BadInputShape(`${path}: dims [${dims}] is not a 224x224 map`)
  }
  return data
}

function readPgm(path: string): Float32Array {
  const blob = fs.readFileSync(path)
  const header = blob.toString('ascii', 0, 64)
  const match = /^P5\s+(\d+)\s+(\d+)\s+(\d+)\s/.exec(header)
  if (!match) throw new BadInputShape(`${path}: not a binary PGM file`)
  const [width, height, maxval] = [Number(match[1]), Number(match[2]), Number(match[3])]
  const offset = match[0].length
  const count = width * height
  if (blob.length < offset + count) {
    throw new BadInputShape(`${path}: truncated PGM payload`)
  }
  const out = new Float32Array(count)
  for (let i = 0; i < count; i++) out[i] = blob[offset + i] / maxval
  return out
}

/** Grayscale [0,1] -> normalized 3-channel HWC input tensor. */
export function preprocess(gray: Float32Array): tf.Tensor3D {
  const hwc = new Float32Array(INPUT_SIZE * INPUT_SIZE * 3)
  for (let p = 0; p < gray.length; p++) {
    for (let c = 0; c < 3; c++) {
      hwc[p * 3 + c] = (gray[p] - MEAN[c]) / STD[c]
    }
  }
  return tf.tensor3d(hwc, [INPUT_SIZE, INPUT_SIZE, 3])
}

export interface ExportJob {
  model: ModelId
  weightsDir: string
  input: string
  output: string
  sidecar?: string
}

export interface ExportResult {
  dims: number[]
  weightsHash: string
}

export function runExport(job: ExportJob, preloaded?: ModelWeights): ExportResult {
  const weights = preloaded ?? loadWeights(job.model, job.weightsDir)
  const image = preprocess(loadMapImage(job.input))
  const { dims, data } = lastConvFeatures(weights, image)
  image.dispose()
  for (let i = 0; i < data.length; i++) {
    if (!Number.isFinite(data[i])) {
      throw new NonFiniteValue(`${job.input}: non-finite activation at ${i}`)
    }
  }
  writeFmap(dims, data, job.output)
  if (job.sidecar) {
    fs.writeFileSync(
      job.sidecar,
      [
        `model=${job.model}`,
        `weights_hash=${weights.hash}`,
        `input=${job.input}`,
        `dims=${dims.join(',')}`,
        '',
      ].join('\n'),
    )
  }
  return { dims, weightsHash: weights.hash }
}
