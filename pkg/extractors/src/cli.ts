#!/usr/bin/env node
/**
 * extract --modality audio --model yamnet --manifest clips.jsonl \
 *         --model-dir checkpoints/yamnet --out stores/yamnet
 *
 * Emits a store directory (manifest.jsonl + embeddings.xmeb) that the
 * primary toolkit accepts as-is (`xmodal validate-store --store DIR`).
 */

import * as tf from '@tensorflow/tfjs'
import yargs from 'yargs'
import { hideBin } from 'yargs/helpers'

import { extractToStore } from './extract.js'
import { MODEL_SPECS, loadModelFromDir, specFor } from './models.js'

async function main(): Promise<number> {
  const argv = await yargs(hideBin(process.argv))
    .command('extract', 'run a pre-trained model over a media manifest')
    .option('modality', {
      choices: ['audio', 'image'] as const,
      demandOption: true,
      describe: 'which media files of each clip to embed',
    })
    .option('model', {
      choices: Object.keys(MODEL_SPECS),
      demandOption: true,
      describe: 'embedding model name',
    })
    .option('manifest', { type: 'string', demandOption: true, describe: 'media manifest (jsonl)' })
    .option('model-dir', {
      type: 'string',
      demandOption: true,
      describe: 'directory with model.json + weight shards',
    })
    .option('out', { type: 'string', demandOption: true, describe: 'output store directory' })
    .strict()
    .parse()

  const spec = specFor(argv.model as string)
  if (spec.modality !== argv.modality) {
    console.error(`error: ${argv.model} is an ${spec.modality} model, not ${argv.modality}`)
    return 1
  }

  const model = await loadModelFromDir(tf, argv['model-dir'] as string)
  const result = await extractToStore({
    tf,
    model,
    modelName: argv.model as string,
    manifestPath: argv.manifest as string,
    outDir: argv.out as string,
  })
  console.log(
    `wrote ${result.written} rows to ${argv.out}` +
      (result.skipped.length ? ` (skipped ${result.skipped.length})` : ''),
  )
  return 0
}

main().then(
  code => process.exit(code),
  err => {
    console.error(`error: ${err.message}`)
    process.exit(1)
  },
)
