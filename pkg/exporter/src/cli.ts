#!/usr/bin/env node
/**
 * hops-export: encode an image folder (one subdirectory per class) into the
 * HOPS binary dataset format consumed by the training engine.
 *
 *   hops-export --dataset <dir> --encoder patch:64 \
 *     --template "a photo of a [class]." --out features.hops
 */
import { parseArgs } from 'node:util'

import { DEFAULT_TEMPLATE, exportFeatures } from './exporter.js'

export function main(argv: string[]): number {
  let values
  try {
    ;({ values } = parseArgs({
      args: argv,
      options: {
        dataset: { type: 'string' },
        encoder: { type: 'string', default: 'patch:64' },
        template: { type: 'string', default: DEFAULT_TEMPLATE },
        out: { type: 'string' },
      },
    }))
  } catch (err) {
    console.error(String(err))
    return 2
  }
  if (!values.dataset || !values.out) {
    console.error('usage: hops-export --dataset <dir> [--encoder <id>] [--template <str>] --out <file>')
    return 2
  }
  try {
    const result = exportFeatures({
      datasetDir: values.dataset,
      encoderId: values.encoder!,
      template: values.template,
      outPath: values.out,
    })
    const m = result.manifest
    console.log(
      `wrote ${result.outPath}: n=${m.instance_count} d=${m.feature_dim} C=${m.class_names.length}`,
    )
    return 0
  } catch (err) {
    console.error(String(err))
    return 1
  }
}

if (import.meta.url === `file://${process.argv[1]}`) {
  process.exit(main(process.argv.slice(2)))
}
