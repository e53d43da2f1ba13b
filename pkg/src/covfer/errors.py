"""Exception taxonomy.

Errors are grouped into families so the CLI can map each family to a
distinct exit code.  Library code raises the leaf classes only.
"""


class CovferError(Exception):
    """Base class for all errors raised by this package."""


# --- file format family -------------------------------------------------


class FormatError(CovferError):
    """Malformed or unsupported on-disk data."""


class BadMagic(FormatError):
    pass


class UnsupportedVersion(FormatError):
    pass


class DimMismatch(FormatError):
    """Declared dimensions disagree with the actual data."""


class NonFiniteValue(FormatError):
    """NaN or Inf encountered where finite values are required."""


class ParseError(FormatError):
    pass


class NonTriangleFace(FormatError):
    pass


class DanglingIndex(FormatError):
    """Face references a vertex that does not exist."""


class DuplicateSampleId(FormatError):
    pass


class UnknownLabel(FormatError):
    pass


class MissingField(FormatError):
    pass


class IoFailure(CovferError):
    """Underlying OS-level read/write failure."""


# --- geometry family ----------------------------------------------------


class GeometryError(CovferError):
    """Mesh processing cannot proceed."""


class EmptyAfterCrop(GeometryError):
    pass


class EmptyMesh(GeometryError):
    pass


class DegenerateNeighborhood(GeometryError):
    """Too few neighbors to fit a local surface patch."""


class CurvaturesMissing(GeometryError):
    pass


class TooFewVertices(GeometryError):
    pass


class PatchTooSmall(GeometryError):
    pass


# --- numerics family ----------------------------------------------------


class NumericError(CovferError):
    """Linear-algebra precondition or convergence failure."""


class AsymmetricInput(NumericError):
    pass


class NoConvergence(NumericError):
    pass


class NonPositiveEigenvalue(NumericError):
    pass


class ShapeMismatch(NumericError):
    pass


class BadShape(NumericError):
    pass


class RegionOutOfBounds(NumericError):
    pass


class RegionTooSmall(NumericError):
    pass


# --- model / data family ------------------------------------------------


class ModelError(CovferError):
    """Invalid input to codebook training, quantization or classification."""


class TooFewDescriptors(ModelError):
    pass


class InconsistentLength(ModelError):
    pass


class EmptyInput(ModelError):
    pass


class LengthMismatch(ModelError):
    pass


class MissingStream(ModelError):
    pass


class SingleClass(ModelError):
    pass


class DegenerateFeatures(ModelError):
    pass


class TooFewSubjects(ModelError):
    pass


class MissingStreamArtifacts(ModelError):
    pass


# CLI exit codes, one per family.  0 is success, 1 is reserved for
# unexpected crashes.
EXIT_CODES = (
    (FormatError, 2),
    (IoFailure, 3),
    (GeometryError, 4),
    (NumericError, 5),
    (ModelError, 6),
)


def exit_code(exc: BaseException) -> int:
    for family, code in EXIT_CODES:
        if isinstance(exc, family):
            return code
    return 1
