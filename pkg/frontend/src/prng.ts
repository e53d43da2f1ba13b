/** Seeded PRNG for reproducible weight initialization (splitmix32 driving
 * a Box-Muller gaussian). */

export function splitmix32(seed: number): () => number {
  let state = seed >>> 0
  return () => {
    state = (state + 0x9e3779b9) >>> 0
    let z = state
    z = Math.imul(z ^ (z >>> 16), 0x21f0aaad)
    z = Math.imul(z ^ (z >>> 15), 0x735a2d97)
    z = z ^ (z >>> 15)
    return (z >>> 0) / 4294967296
  }
}

/** Deterministic sub-stream: hash the master seed with a stream index. */
export function deriveSeed(seed: number, stream: number): number {
  let z = (Math.imul(seed >>> 0, 0x85ebca6b) ^ Math.imul(stream + 1, 0xc2b2ae35)) >>> 0
  z = Math.imul(z ^ (z >>> 13), 0x27d4eb2f)
  return (z ^ (z >>> 15)) >>> 0
}

export function gaussianFill(out: Float32Array, seed: number, std: number): void {
  const uniform = splitmix32(seed)
  let i = 0
  while (i < out.length) {
    const u1 = Math.max(uniform(), 1e-12)
    const u2 = uniform()
    const radius = Math.sqrt(-2.0 * Math.log(u1))
    out[i++] = radius * Math.cos(2.0 * Math.PI * u2) * std
    if (i < out.length) {
      out[i++] = radius * Math.sin(2.0 * Math.PI * u2) * std
    }
  }
}
