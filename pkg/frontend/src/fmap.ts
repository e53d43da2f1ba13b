/**
 * FMAP container, byte-compatible with the analysis pipeline:
 * "FMAP" magic, u32 LE version (=1), u32 LE ndim, ndim x u32 LE dims,
 * then float32 LE payload, row-major, no trailer.
 */

import * as fs from 'node:fs'

import { BadMagic, DimMismatch, NonFiniteValue, UnsupportedVersion } from './errors.js'

const MAGIC = 'FMAP'
const VERSION = 1

export interface FmapTensor {
  dims: number[]
  data: Float32Array
}

export function readFmap(path: string): FmapTensor {
  const blob = fs.readFileSync(path)
  if (blob.length < 4 || blob.toString('ascii', 0, 4) !== MAGIC) {
    throw new BadMagic(`${path}: not an FMAP file`)
  }
  if (blob.length < 12) throw new DimMismatch(`${path}: truncated header`)
  const version = blob.readUInt32LE(4)
  if (version !== VERSION) {
    throw new UnsupportedVersion(`${path}: FMAP version ${version}`)
  }
  const ndim = blob.readUInt32LE(8)
  if (ndim === 0) throw new DimMismatch(`${path}: zero-dimensional tensor`)
  const headerEnd = 12 + 4 * ndim
  if (blob.length < headerEnd) {
    throw new DimMismatch(`${path}: truncated dimension list`)
  }
  const dims: number[] = []
  let count = 1
  for (let i = 0; i < ndim; i++) {
    const d = blob.readUInt32LE(12 + 4 * i)
    if (d === 0) throw new DimMismatch(`${path}: non-positive extent`)
    dims.push(d)
    count *= d
  }
  if (blob.length !== headerEnd + 4 * count) {
    throw new DimMismatch(
      `${path}: dims [${dims}] need ${4 * count} payload bytes, got ${blob.length - headerEnd}`,
    )
  }
  const data = new Float32Array(count)
  for (let i = 0; i < count; i++) {
    data[i] = blob.readFloatLE(headerEnd + 4 * i)
  }
  for (let i = 0; i < count; i++) {
    if (!Number.isFinite(data[i])) {
      throw new NonFiniteValue(`${path}: payload contains NaN/Inf`)
    }
  }
  return { dims, data }
}

export function writeFmap(dims: number[], data: Float32Array, path: string): void {
  let count = 1
  for (const d of dims) {
    if (!Number.isInteger(d) || d < 1) throw new DimMismatch(`bad extent ${d}`)
    count *= d
  }
  if (count !== data.length) {
    throw new DimMismatch(`dims [${dims}] do not match ${data.length} values`)
  }
  for (let i = 0; i < data.length; i++) {
    if (!Number.isFinite(data[i])) {
      throw new NonFiniteValue('refusing to write NaN/Inf payload')
    }
  }
  const header = Buffer.alloc(12 + 4 * dims.length)
  header.write(MAGIC, 0, 'ascii')
  header.writeUInt32LE(VERSION, 4)
  header.writeUInt32LE(dims.length, 8)
  dims.forEach((d, i) => header.writeUInt32LE(d, 12 + 4 * i))
  const payload = Buffer.alloc(4 * data.length)
  for (let i = 0; i < data.length; i++) {
    payload.writeFloatLE(data[i], 4 * i)
  }
  fs.writeFileSync(path, Buffer.concat([header, payload]))
}
