/**
 * Writer (and a verifying reader, used by tests) for the HOPS binary
 * dataset format. Independent implementation of the shared on-disk layout;
 * the canonical consumer is the training engine.
 *
 * Layout, little-endian: "HOPS" magic, u32 version=1, u32 n/d/C, u32 flags
 * (bit0 labels, bit1 candidates, bit2 anchors, bit3 class names), f32
 * features row-major, optional sections in flag order, u64 FNV-1a checksum
 * of all preceding bytes.
 */
import { fnv1a64 } from './fnv.js'
import { FormatWriteError } from './errors.js'

export const MAGIC = 'HOPS'
export const VERSION = 1

export interface HopsBundle {
  featureDim: number
  numClasses: number
  features: Float64Array[] // n rows, unit norm; stored as f32
  labels?: number[]
  candidates?: Uint8Array[] // n rows of C zero/one entries
  anchors?: Float64Array[] // C rows, unit norm
  classNames?: string[]
}

export function encodeBundle(bundle: HopsBundle): Buffer {
  const n = bundle.features.length
  const d = bundle.featureDim
  const c = bundle.numClasses
  if (bundle.features.some(row => row.length !== d)) {
    throw new FormatWriteError('feature rows disagree with featureDim')
  }
  let flags = 0
  if (bundle.labels) flags |= 1
  if (bundle.candidates) flags |= 2
  if (bundle.anchors) flags |= 4
  if (bundle.classNames) flags |= 8

  const parts: Buffer[] = []
  const header = Buffer.alloc(24)
  header.write(MAGIC, 0, 'ascii')
  header.writeUInt32LE(VERSION, 4)
  header.writeUInt32LE(n, 8)
  header.writeUInt32LE(d, 12)
  header.writeUInt32LE(c, 16)
  header.writeUInt32LE(flags, 20)
  parts.push(header)

  parts.push(packFloat32Rows(bundle.features, d))

  if (bundle.labels) {
    if (bundle.labels.length !== n) {
      throw new FormatWriteError(`expected ${n} labels, got ${bundle.labels.length}`)
    }
    const buf = Buffer.alloc(4 * n)
    bundle.labels.forEach((label, i) => {
      if (label < 0 || label >= c) throw new FormatWriteError(`label ${label} out of range`)
      buf.writeUInt32LE(label, 4 * i)
    })
    parts.push(buf)
  }

  if (bundle.candidates) {
    const rowBytes = Math.ceil(c / 8)
    const buf = Buffer.alloc(rowBytes * n)
    bundle.candidates.forEach((row, i) => {
      if (row.length !== c) throw new FormatWriteError('candidate row has wrong length')
      row.forEach((bit, j) => {
        if (bit) buf[i * rowBytes + (j >> 3)] |= 1 << (j & 7)
      })
    })
    parts.push(buf)
  }

  if (bundle.anchors) {
    if (bundle.anchors.length !== c) {
      throw new FormatWriteError(`expected ${c} anchors, got ${bundle.anchors.length}`)
    }
    parts.push(packFloat32Rows(bundle.anchors, d))
  }

  if (bundle.classNames) {
    if (bundle.classNames.length !== c) {
      throw new FormatWriteError(`expected ${c} class names`)
    }
    if (bundle.classNames.some(name => name.includes('\n'))) {
      throw new FormatWriteError('class names must not contain newlines')
    }
    const blob = Buffer.from(bundle.classNames.join('\n'), 'utf-8')
    const len = Buffer.alloc(4)
    len.writeUInt32LE(blob.length, 0)
    parts.push(len, blob)
  }

  const payload = Buffer.concat(parts)
  const tail = Buffer.alloc(8)
  tail.writeBigUInt64LE(fnv1a64(payload), 0)
  return Buffer.concat([payload, tail])
}

function packFloat32Rows(rows: Float64Array[], d: number): Buffer {
  const buf = Buffer.alloc(4 * rows.length * d)
  rows.forEach((row, i) => {
    for (let j = 0; j < d; j++) buf.writeFloatLE(row[j], 4 * (i * d + j))
  })
  return buf
}

/** Parse + checksum-verify a HOPS buffer (test aid; the engine is canonical). */
export function decodeBundle(buf: Buffer): HopsBundle {
  if (buf.length < 32) throw new Error('file too short')
  if (buf.toString('ascii', 0, 4) !== MAGIC) throw new Error('bad magic')
  if (buf.readUInt32LE(4) !== VERSION) throw new Error('unsupported version')
  const n = buf.readUInt32LE(8)
  const d = buf.readUInt32LE(12)
  const c = buf.readUInt32LE(16)
  const flags = buf.readUInt32LE(20)
  const stored = buf.readBigUInt64LE(buf.length - 8)
  const computed = fnv1a64(buf.subarray(0, buf.length - 8))
  if (stored !== computed) throw new Error('checksum mismatch')

  let pos = 24
  const readRows = (count: number): Float64Array[] => {
    const rows: Float64Array[] = []
    for (let i = 0; i < count; i++) {
      const row = new Float64Array(d)
      for (let j = 0; j < d; j++) {
        row[j] = buf.readFloatLE(pos)
        pos += 4
      }
      rows.push(row)
    }
    return rows
  }

  const bundle: HopsBundle = {
    featureDim: d,
    numClasses: c,
    features: readRows(n),
  }
  if (flags & 1) {
    bundle.labels = []
    for (let i = 0; i < n; i++) {
      bundle.labels.push(buf.readUInt32LE(pos))
      pos += 4
    }
  }
  if (flags & 2) {
    const rowBytes = Math.ceil(c / 8)
    bundle.candidates = []
    for (let i = 0; i < n; i++) {
      const row = new Uint8Array(c)
      for (let j = 0; j < c; j++) {
        row[j] = (buf[pos + (j >> 3)] >> (j & 7)) & 1
      }
      bundle.candidates.push(row)
      pos += rowBytes
    }
  }
  if (flags & 4) bundle.anchors = readRows(c)
  if (flags & 8) {
    const len = buf.readUInt32LE(pos)
    pos += 4
    bundle.classNames = buf.toString('utf-8', pos, pos + len).split('\n')
    pos += len
  }
  return bundle
}
