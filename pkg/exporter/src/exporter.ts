/**
 * Dataset export: walk a folder of class subdirectories, encode every image
 * with a frozen encoder, encode the templated class names into anchors, and
 * emit a HOPS file plus a manifest JSON.
 */
import * as fs from 'node:fs'
import * as path from 'node:path'

import { getEncoder } from './encoders.js'
import { FormatWriteError, ImageDecodeError } from './errors.js'
import { decodeNetpbm } from './images.js'
import { encodeBundle } from './hopsfile.js'

export const DEFAULT_TEMPLATE = 'a photo of a [class].'

export interface ExportManifest {
  dataset: string
  class_names: string[]
  encoder: string
  feature_dim: number
  instance_count: number
  template: string
}

export interface ExportResult {
  outPath: string
  manifestPath: string
  manifest: ExportManifest
}

export function applyTemplate(template: string, className: string): string {
  return template.replaceAll('[class]', className)
}

const IMAGE_EXTENSIONS = new Set(['.ppm', '.pgm'])

function listClassDirs(datasetDir: string): string[] {
  const entries = fs
    .readdirSync(datasetDir, { withFileTypes: true })
    .filter(e => e.isDirectory())
    .map(e => e.name)
    .sort()
  if (entries.length === 0) {
    throw new FormatWriteError(`no class subdirectories under ${datasetDir}`)
  }
  if (new Set(entries).size !== entries.length) {
    throw new FormatWriteError('class names must be unique')
  }
  return entries
}

function listImages(classDir: string): string[] {
  return fs
    .readdirSync(classDir, { withFileTypes: true })
    .filter(e => e.isFile() && IMAGE_EXTENSIONS.has(path.extname(e.name).toLowerCase()))
    .map(e => path.join(classDir, e.name))
    .sort()
}

export function exportFeatures(options: {
  datasetDir: string
  encoderId: string
  template?: string
  outPath: string
}): ExportResult {
  const { datasetDir, encoderId, outPath } = options
  const template = options.template ?? DEFAULT_TEMPLATE
  const encoder = getEncoder(encoderId)

  const classNames = listClassDirs(datasetDir)
  const features: Float64Array[] = []
  const labels: number[] = []
  classNames.forEach((name, cls) => {
    const images = listImages(path.join(datasetDir, name))
    if (images.length === 0) {
      throw new ImageDecodeError(name, 'class directory holds no decodable images')
    }
    for (const file of images) {
      const raster = decodeNetpbm(file, fs.readFileSync(file))
      features.push(encoder.encodeImage(raster))
      labels.push(cls)
    }
  })
  const anchors = classNames.map(name =>
    encoder.encodeText(applyTemplate(template, name)),
  )

  const blob = encodeBundle({
    featureDim: encoder.dim,
    numClasses: classNames.length,
    features,
    labels,
    anchors,
    classNames,
  })
  try {
    fs.writeFileSync(outPath, blob)
  } catch (err) {
    throw new FormatWriteError(`cannot write ${outPath}: ${String(err)}`)
  }

  const manifest: ExportManifest = {
    dataset: path.basename(path.resolve(datasetDir)),
    class_names: classNames,
    encoder: encoder.id,
    feature_dim: encoder.dim,
    instance_count: features.length,
    template,
  }
  const manifestPath = `${outPath}.manifest.json`
  fs.writeFileSync(manifestPath, JSON.stringify(manifest, null, 2) + '\n')
  return { outPath, manifestPath, manifest }
}
