"""Exception hierarchy.

Errors split into two families so the command line can map them onto exit
codes: input problems (``InputError``, exit 2) and geometric failures at a
point or along a curve (``GeometricError``, exit 3).
"""
from __future__ import annotations


class CausalGeoError(Exception):
    """Base class for every error raised by the package."""


class InputError(CausalGeoError, ValueError):
    """Malformed user input: expressions, structure files, point strings."""


class ParseError(InputError):
    """Tokenizer or parser failure at a byte offset of the source text."""

    def __init__(self, message: str, pos: int, source: str | None = None):
        self.pos = pos
        self.source = source
        self.message = message
        super().__init__(self._render())

    def _render(self) -> str:
        text = f"{self.message} at offset {self.pos}"
        if self.source is not None:
            caret = " " * self.pos + "^"
            text += f"\n  {self.source}\n  {caret}"
        return text


class ConfigError(InputError):
    """Inconsistent configuration (signature vs dimension, missing keys, ...)."""


class UnboundVariable(InputError):
    """An expression refers to a name not present in the evaluation env."""


class JetError(CausalGeoError, ValueError):
    """Misuse of the jet algebra: bad index, order overflow, mixed shapes."""


class GeometricError(CausalGeoError):
    """A geometric precondition failed at a point or along a curve."""


class DomainError(GeometricError, ArithmeticError):
    """An elementary function was applied outside its domain."""


class TangentiallyDegenerate(GeometricError):
    """The vertical Hessian is singular at the queried point."""


class SignatureMismatch(GeometricError):
    """Observed inertia differs from the declared signature."""


class DegeneratePivot(GeometricError):
    """Congruence normalization met a pivot below the degeneracy threshold."""


class ChartExit(GeometricError):
    """The cone direction left the affine chart y^n = 1."""


class StepSizeUnderflow(GeometricError):
    """The adaptive integrator could not meet the tolerance."""


class ConjugatePoint(GeometricError):
    """The Jacobi tensor became singular inside the reported window."""


class NoRealRoot(GeometricError):
    """The null-cone equation has no real solution for y^0."""


class BranchAmbiguity(GeometricError):
    """The two null-cone roots coalesce; the branch is not well defined."""


class DegenerateMetric(GeometricError):
    """The metric is singular at the queried point."""


class FrameDegeneracy(GeometricError):
    """A screen frame could not be built along a null geodesic."""


class PreconditionError(CausalGeoError, ValueError):
    """A documented precondition on arguments does not hold."""
