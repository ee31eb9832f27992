/**
 * Deterministic offline encoders. A real vision-language checkpoint plugs in
 * through the same interface (id string -> ImageEncoder); in this sandbox no
 * pretrained weights are downloadable, so the built-ins are a seeded
 * random-projection image encoder over box-resized pixels ("patch:<dim>")
 * and a hashed character-trigram text encoder for the class anchors. Both
 * are pure functions of their inputs, so re-exports are byte-identical.
 */
import { EncoderUnavailable } from './errors.js'
import { fnv1a64String } from './fnv.js'
import { RasterImage, resizeBox } from './images.js'

export interface ImageEncoder {
  id: string
  dim: number
  encodeImage(img: RasterImage): Float64Array
  encodeText(text: string): Float64Array
}

const PATCH_SIDE = 8

function splitmix64(seed: bigint): () => bigint {
  const MASK = 0xffffffffffffffffn
  let state = seed & MASK
  return () => {
    state = (state + 0x9e3779b97f4a7c15n) & MASK
    let z = state
    z = ((z ^ (z >> 30n)) * 0xbf58476d1ce4e5b9n) & MASK
    z = ((z ^ (z >> 27n)) * 0x94d049bb133111ebn) & MASK
    return (z ^ (z >> 31n)) & MASK
  }
}

function gaussianMatrix(seed: bigint, rows: number, cols: number): Float64Array {
  const next = splitmix64(seed)
  const uniform = () => Number(next() >> 11n) / 2 ** 53
  const out = new Float64Array(rows * cols)
  for (let i = 0; i < out.length; i += 2) {
    // Box-Muller; u clamped away from zero
    const u = Math.max(uniform(), 1e-16)
    const v = uniform()
    const r = Math.sqrt(-2 * Math.log(u))
    out[i] = r * Math.cos(2 * Math.PI * v)
    if (i + 1 < out.length) out[i + 1] = r * Math.sin(2 * Math.PI * v)
  }
  return out
}

export function normalize(v: Float64Array): Float64Array {
  let sq = 0
  for (const x of v) sq += x * x
  const norm = Math.sqrt(sq)
  if (norm < 1e-12) {
    const out = new Float64Array(v.length)
    out[0] = 1
    return out
  }
  return v.map(x => x / norm)
}

function trigramTextVector(text: string, dim: number): Float64Array {
  const padded = `^${text.toLowerCase()}$`
  const out = new Float64Array(dim)
  for (let i = 0; i + 3 <= padded.length; i++) {
    const h = fnv1a64String(padded.slice(i, i + 3))
    const bucket = Number(h % BigInt(dim))
    const sign = (h >> 63n) & 1n ? -1 : 1
    out[bucket] += sign
  }
  return normalize(out)
}

function makePatchEncoder(id: string, dim: number): ImageEncoder {
  const inputDim = PATCH_SIDE * PATCH_SIDE * 3
  const projection = gaussianMatrix(fnv1a64String(id), dim, inputDim)
  return {
    id,
    dim,
    encodeImage(img: RasterImage): Float64Array {
      const patch = resizeBox(img, PATCH_SIDE)
      let mean = 0
      for (const x of patch) mean += x
      mean /= patch.length
      const centered = patch.map(x => x - mean)
      const out = new Float64Array(dim)
      for (let r = 0; r < dim; r++) {
        let acc = 0
        for (let cidx = 0; cidx < inputDim; cidx++) {
          acc += projection[r * inputDim + cidx] * centered[cidx]
        }
        out[r] = acc
      }
      return normalize(out)
    },
    encodeText(text: string): Float64Array {
      return trigramTextVector(`${id}|${text}`, dim)
    },
  }
}

export function getEncoder(id: string): ImageEncoder {
  const patch = /^patch:(\d+)$/.exec(id)
  if (patch) {
    const dim = Number(patch[1])
    if (dim >= 2 && dim <= 4096) return makePatchEncoder(id, dim)
  }
  throw new EncoderUnavailable(id)
}
