/**
 * covfer-exporter CLI.
 *
 *   init-weights --model vgg16 --seed 0 --out weights/vgg16
 *   export --model vgg16 --weights weights/vgg16 \
 *          --in img.fmap --out feat.fmap --sidecar feat.txt
 */

import { exitCode } from './errors.js'
import { runExport } from './export.js'
import { initWeights, isModelId, modelIds } from './model.js'

function parseFlags(argv: string[]): Map<string, string> {
  const flags = new Map<string, string>()
  for (let i = 0; i < argv.length; i += 2) {
    const key = argv[i]
    if (!key.startsWith('--') || i + 1 >= argv.length) {
      throw new Error(`malformed arguments near ${key}`)
    }
    flags.set(key.slice(2), argv[i + 1])
  }
  return flags
}

function requireFlag(flags: Map<string, string>, name: string): string {
  const value = flags.get(name)
  if (value === undefined) throw new Error(`missing --${name}`)
  return value
}

function requireModel(flags: Map<string, string>): 'vgg16' | 'alexnet' {
  const id = requireFlag(flags, 'model')
  if (!isModelId(id)) {
    throw new Error(`unknown model ${id}; expected one of ${modelIds().join(', ')}`)
  }
  return id
}

export function main(argv: string[]): number {
  const [verb, ...rest] = argv
  try {
    if (verb === 'init-weights') {
      const flags = parseFlags(rest)
      const hash = initWeights(
        requireModel(flags),
        Number(flags.get('seed') ?? '0'),
        requireFlag(flags, 'out'),
      )
      console.log(hash)
      return 0
    }
    if (verb === 'export') {
      const flags = parseFlags(rest)
      const result = runExport({
        model: requireModel(flags),
        weightsDir: requireFlag(flags, 'weights'),
        input: requireFlag(flags, 'in'),
        output: requireFlag(flags, 'out'),
        sidecar: flags.get('sidecar'),
      })
      console.log(result.dims.join('x'))
      return 0
    }
    console.error('usage: cli.js <init-weights|export> [flags]')
    return 1
  } catch (err) {
    console.error(`error: ${err instanceof Error ? err.message : err}`)
    return exitCode(err)
  }
}

process.exit(main(process.argv.slice(2)))
