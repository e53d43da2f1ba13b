export class ExporterError extends Error {}

/** File is not a valid FMAP container. */
export class BadMagic extends ExporterError {}

export class UnsupportedVersion extends ExporterError {}

/** Declared dimensions disagree with the payload. */
export class DimMismatch extends ExporterError {}

export class NonFiniteValue extends ExporterError {}

/** Weights for the requested model id are missing or invalid. */
export class ModelUnavailable extends ExporterError {}

/** Input image is not a single-channel 224x224 map. */
export class BadInputShape extends ExporterError {}

export function exitCode(err: unknown): number {
  if (err instanceof ModelUnavailable) return 4;
  if (err instanceof BadInputShape) return 5;
  if (err instanceof ExporterError) return 2;
  return 1;
}
