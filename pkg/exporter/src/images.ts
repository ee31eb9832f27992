/**
 * Minimal raster decoding: binary PPM (P6) and PGM (P5). These cover the
 * offline sandbox; anything richer should arrive through a real encoder
 * checkpoint with its own preprocessing.
 */
import { ImageDecodeError } from './errors.js'

export interface RasterImage {
  width: number
  height: number
  /** row-major RGB triples in [0, 1] */
  rgb: Float64Array
}

export function decodeNetpbm(file: string, data: Buffer): RasterImage {
  const magic = data.toString('ascii', 0, 2)
  if (magic !== 'P6' && magic !== 'P5') {
    throw new ImageDecodeError(file, `unsupported magic "${magic}" (want P5/P6)`)
  }
  // header tokens: magic, width, height, maxval; '#' comments allowed
  let pos = 2
  const tokens: number[] = []
  while (tokens.length < 3) {
    if (pos >= data.length) throw new ImageDecodeError(file, 'truncated header')
    const ch = String.fromCharCode(data[pos])
    if (ch === '#') {
      while (pos < data.length && data[pos] !== 0x0a) pos++
      pos++
    } else if (/\s/.test(ch)) {
      pos++
    } else {
      let start = pos
      while (pos < data.length && !/\s/.test(String.fromCharCode(data[pos]))) pos++
      const value = Number(data.toString('ascii', start, pos))
      if (!Number.isFinite(value)) throw new ImageDecodeError(file, 'bad header token')
      tokens.push(value)
    }
  }
  pos++ // single whitespace after maxval
  const [width, height, maxval] = tokens
  if (width < 1 || height < 1 || maxval < 1 || maxval > 255) {
    throw new ImageDecodeError(file, `bad dimensions ${width}x${height}/${maxval}`)
  }
  const channels = magic === 'P6' ? 3 : 1
  const need = width * height * channels
  if (data.length - pos < need) {
    throw new ImageDecodeError(file, `pixel data truncated (${data.length - pos}/${need})`)
  }
  const rgb = new Float64Array(width * height * 3)
  for (let i = 0; i < width * height; i++) {
    for (let ch = 0; ch < 3; ch++) {
      const src = channels === 3 ? pos + 3 * i + ch : pos + i
      rgb[3 * i + ch] = data[src] / maxval
    }
  }
  return { width, height, rgb }
}

/** Box-average resize onto a square grid; every cell covers >= 1 pixel. */
export function resizeBox(img: RasterImage, side: number): Float64Array {
  const out = new Float64Array(side * side * 3)
  for (let ty = 0; ty < side; ty++) {
    const y0 = Math.floor((ty * img.height) / side)
    const y1 = Math.max(y0 + 1, Math.floor(((ty + 1) * img.height) / side))
    for (let tx = 0; tx < side; tx++) {
      const x0 = Math.floor((tx * img.width) / side)
      const x1 = Math.max(x0 + 1, Math.floor(((tx + 1) * img.width) / side))
      const acc = [0, 0, 0]
      for (let y = y0; y < y1; y++) {
        for (let x = x0; x < x1; x++) {
          const at = 3 * (y * img.width + x)
          acc[0] += img.rgb[at]
          acc[1] += img.rgb[at + 1]
          acc[2] += img.rgb[at + 2]
        }
      }
      const count = (y1 - y0) * (x1 - x0)
      const at = 3 * (ty * side + tx)
      out[at] = acc[0] / count
      out[at + 1] = acc[1] / count
      out[at + 2] = acc[2] / count
    }
  }
  return out
}
