"""Exception hierarchy shared across the package."""

from __future__ import annotations


class SpacePoseError(Exception):
    """Base class for all errors raised by this package."""


class NonPositiveDepth(SpacePoseError):
    """A 3D point sits at or behind the camera plane."""

    def __init__(self, index: int, depth: float | None = None):
        self.index = index
        self.depth = depth
        detail = f" (depth={depth:.6g})" if depth is not None else ""
        super().__init__(f"point {index} has non-positive depth{detail}")


class NotARotation(SpacePoseError):
    """A matrix failed the orthonormality / determinant check."""


class DegenerateHeatmap(SpacePoseError):
    """A heatmap with non-positive maximum cannot be decoded or normalized."""


class OutOfBounds(SpacePoseError):
    """A sampling position lies outside the grid."""


class TooFewPoints(SpacePoseError):
    """Fewer correspondences than the solver minimum."""


class DegenerateConfiguration(SpacePoseError):
    """Point configuration is rank-deficient for the requested solver."""


class PnPFailure(SpacePoseError):
    """The PnP solve inside a loss could not produce a usable pose."""


class IllConditionedHessian(SpacePoseError):
    """The 6x6 stationarity Hessian is too ill-conditioned to invert."""

    def __init__(self, condition_number: float):
        self.condition_number = condition_number
        super().__init__(
            f"hessian condition number {condition_number:.3e} exceeds 1e12"
        )


class ZeroGroundTruthPosition(SpacePoseError):
    """Ground-truth translation has zero norm; position score undefined."""


class NonUnitQuaternion(SpacePoseError):
    """Quaternion norm deviates from 1 beyond the metric tolerance."""


class IdMismatch(SpacePoseError):
    """Estimate and ground-truth sets do not cover the same image ids."""


class ParseError(SpacePoseError):
    """A file could not be parsed; carries position context when known."""


class SchemaViolation(SpacePoseError):
    """A document parsed but violates the schema; carries the field path."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


class InvalidRange(SpacePoseError):
    """A configured sampling range is empty or geometrically invalid."""


class BudgetExhausted(SpacePoseError):
    """The adaptation loop ran out of iterations before the target fraction."""

    def __init__(self, achieved_fraction: float, target_fraction: float):
        self.achieved_fraction = achieved_fraction
        self.target_fraction = target_fraction
        super().__init__(
            f"labelled fraction {achieved_fraction:.4f} below target "
            f"{target_fraction:.4f} after iteration budget"
        )
