/**
 * Convolutional stacks of the two supported model families, up to and
 * including the last convolution's ReLU (no pooling/flatten after it):
 *
 *   vgg16   224x224 -> 512 x 14 x 14   (conv5_3 after four 2x2 pools)
 *   alexnet 224x224 -> 256 x 13 x 13   (conv5 of the torchvision layout)
 *
 * Weights are one FMAP file per conv layer (kernel layout kh x kw x cin x
 * cout, bias-free) plus a model.txt sidecar recording the architecture id,
 * seed, and a SHA-256 over all kernel bytes so downstream runs can verify
 * provenance.
 */

import * as crypto from 'node:crypto'
import * as fs from 'node:fs'
import * as path from 'node:path'

import * as tf from '@tensorflow/tfjs'

import { DimMismatch, ModelUnavailable } from './errors.js'
import { readFmap, writeFmap } from './fmap.js'
import { deriveSeed, gaussianFill } from './prng.js'

export type ModelId = 'vgg16' | 'alexnet'

type Layer =
  | { kind: 'conv'; filters: number; kernel: number; stride: number; pad: number }
  | { kind: 'pool'; size: number; stride: number }

const ARCHITECTURES: Record<ModelId, Layer[]> = {
  vgg16: [
    { kind: 'conv', filters: 64, kernel: 3, stride: 1, pad: 1 },
    { kind: 'conv', filters: 64, kernel: 3, stride: 1, pad: 1 },
    { kind: 'pool', size: 2, stride: 2 },
    { kind: 'conv', filters: 128, kernel: 3, stride: 1, pad: 1 },
    { kind: 'conv', filters: 128, kernel: 3, stride: 1, pad: 1 },
    { kind: 'pool', size: 2, stride: 2 },
    { kind: 'conv', filters: 256, kernel: 3, stride: 1, pad: 1 },
    { kind: 'conv', filters: 256, kernel: 3, stride: 1, pad: 1 },
    { kind: 'conv', filters: 256, kernel: 3, stride: 1, pad: 1 },
    { kind: 'pool', size: 2, stride: 2 },
    { kind: 'conv', filters: 512, kernel: 3, stride: 1, pad: 1 },
    { kind: 'conv', filters: 512, kernel: 3, stride: 1, pad: 1 },
    { kind: 'conv', filters: 512, kernel: 3, stride: 1, pad: 1 },
    { kind: 'pool', size: 2, stride: 2 },
    { kind: 'conv', filters: 512, kernel: 3, stride: 1, pad: 1 },
    { kind: 'conv', filters: 512, kernel: 3, stride: 1, pad: 1 },
    { kind: 'conv', filters: 512, kernel: 3, stride: 1, pad: 1 },
  ],
  alexnet: [
    { kind: 'conv', filters: 64, kernel: 11, stride: 4, pad: 2 },
    { kind: 'pool', size: 3, stride: 2 },
    { kind: 'conv', filters: 192, kernel: 5, stride: 1, pad: 2 },
    { kind: 'pool', size: 3, stride: 2 },
    { kind: 'conv', filters: 384, kernel: 3, stride: 1, pad: 1 },
    { kind: 'conv', filters: 256, kernel: 3, stride: 1, pad: 1 },
    { kind: 'conv', filters: 256, kernel: 3, stride: 1, pad: 1 },
  ],
}

export const INPUT_SIZE = 224

export function modelIds(): ModelId[] {
  return Object.keys(ARCHITECTURES) as ModelId[]
}

export function isModelId(id: string): id is ModelId {
  return id in ARCHITECTURES
}

function convLayers(id: ModelId): Array<Layer & { kind: 'conv' }> {
  return ARCHITECTURES[id].filter((l: Layer) => l.kind === 'conv') as Array<
    Layer & { kind: 'conv' }
  >
}

function kernelShape(id: ModelId, index: number): [number, number, number, number] {
  const convs = convLayers(id)
  const layer = convs[index]
  const cin = index === 0 ? 3 : convs[index - 1].filters
  return [layer.kernel, layer.kernel, cin, layer.filters]
}

export interface ModelWeights {
  id: ModelId
  seed: number
  kernels: tf.Tensor4D[]
  hash: string
}

function weightHash(kernels: Float32Array[]): string {
  const h = crypto.createHash('sha256')
  for (const k of kernels) h.update(Buffer.from(k.buffer, k.byteOffset, k.byteLength))
  return h.digest('hex')
}

/** He-scaled gaussian kernels, deterministic per (model, seed). */
export function initWeights(id: ModelId, seed: number, dir: string): string {
  fs.mkdirSync(dir, { recursive: true })
  const raw: Float32Array[] = []
  convLayers(id).forEach((_, i) => {
    const shape = kernelShape(id, i)
    const fanIn = shape[0] * shape[1] * shape[2]
    const data = new Float32Array(shape[0] * shape[1] * shape[2] * shape[3])
    gaussianFill(data, deriveSeed(seed, i), Math.sqrt(2.0 / fanIn))
    raw.push(data)
    writeFmap(shape as unknown as number[], data, path.join(dir, layerFile(i)))
  })
  const hash = weightHash(raw)
  const sidecar = [
    `model=${id}`,
    `seed=${seed}`,
    `layers=${raw.length}`,
    `weights_hash=${hash}`,
    `input=${INPUT_SIZE}x${INPUT_SIZE}`,
    '',
  ].join('\n')
  fs.writeFileSync(path.join(dir, 'model.txt'), sidecar)
  return hash
}

function layerFile(i: number): string {
  return `layer_${String(i).padStart(2, '0')}.fmap`
}

export function loadWeights(id: ModelId, dir: string): ModelWeights {
  const sidecarPath = path.join(dir, 'model.txt')
  if (!fs.existsSync(sidecarPath)) {
    throw new ModelUnavailable(`no model.txt under ${dir}; run init-weights first`)
  }
  const side = new Map(
    fs
      .readFileSync(sidecarPath, 'ascii')
      .split('\n')
      .filter((l) => l.includes('='))
      .map((l) => l.split('=', 2) as [string, string]),
  )
  if (side.get('model') !== id) {
    throw new ModelUnavailable(
      `${dir} holds weights for ${side.get('model')}, not ${id}`,
    )
  }
  const convs = convLayers(id)
  const raw: Float32Array[] = []
  const kernels: tf.Tensor4D[] = []
  for (let i = 0; i < convs.length; i++) {
    const file = path.join(dir, layerFile(i))
    if (!fs.existsSync(file)) {
      throw new ModelUnavailable(`missing ${file}`)
    }
    const { dims, data } = readFmap(file)
    const expected = kernelShape(id, i)
    if (dims.length !== 4 || expected.some((d, j) => dims[j] !== d)) {
      throw new DimMismatch(`${file}: kernel shape [${dims}] != [${expected}]`)
    }
    raw.push(data)
    kernels.push(tf.tensor4d(data, expected))
  }
  const hash = weightHash(raw)
  if (side.has('weights_hash') && side.get('weights_hash') !== hash) {
    throw new ModelUnavailable(`${dir}: weights bytes do not match the recorded hash`)
  }
  return { id, seed: Number(side.get('seed') ?? -1), kernels, hash }
}

/**
 * Activations after the last convolution's ReLU, as a CHW Float32Array.
 * Input is a normalized HWC image tensor of shape [224, 224, 3].
 */
export function lastConvFeatures(
  weights: ModelWeights,
  image: tf.Tensor3D,
): { dims: number[]; data: Float32Array } {
  const result = tf.tidy(() => {
    let x = image.expandDims(0) as tf.Tensor4D
    let conv = 0
    for (const layer of ARCHITECTURES[weights.id]) {
      if (layer.kind === 'conv') {
        x = tf.conv2d(x, weights.kernels[conv], layer.stride, layer.pad)
        x = tf.relu(x)
        conv += 1
      } else {
        x = tf.maxPool(x, layer.size, layer.stride, 'valid')
      }
    }
    // NHWC -> CHW to match the FMAP channel-outermost convention
    return tf.transpose(x.squeeze([0]), [2, 0, 1])
  })
  const dims = result.shape.slice()
  const data = result.dataSync() as Float32Array
  result.dispose()
  return { dims, data: new Float32Array(data) }
}
