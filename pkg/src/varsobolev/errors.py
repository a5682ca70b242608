"""Exception hierarchy.

Every error carries a stable ``code`` string so reports and the CLI can
surface it without depending on the Python class name.
"""


class VarSobolevError(Exception):
    code = "error"


class InvalidArgument(VarSobolevError, ValueError):
    code = "invalid-argument"


class UnsupportedDimension(InvalidArgument):
    code = "unsupported-dimension"


class GridTooCoarse(InvalidArgument):
    code = "grid-too-coarse"


class SupportEscape(InvalidArgument):
    code = "support-escape"


class NotAHalfSpace(InvalidArgument):
    code = "not-a-half-space"


class IncompatibleGrids(InvalidArgument):
    code = "incompatible-grids"


class ExponentBelowOne(InvalidArgument):
    code = "exponent-below-one"


class ExponentReachesDimension(InvalidArgument):
    code = "exponent-reaches-dimension"


class ConjugateUnbounded(InvalidArgument):
    code = "conjugate-unbounded"


class InvalidIntegrabilityExponent(InvalidArgument):
    code = "invalid-integrability-exponent"


class NonnegativityViolation(InvalidArgument):
    code = "nonnegativity-violation"


class NormalizationViolation(InvalidArgument):
    code = "normalization-violation"


class EmptyMeasure(InvalidArgument):
    code = "empty-measure"


class EmptyFamily(InvalidArgument):
    code = "empty-family"


class UnboundedH(InvalidArgument):
    code = "unbounded-h"


class NormOverflow(VarSobolevError, ArithmeticError):
    code = "norm-overflow"


class ProblemTooLarge(VarSobolevError):
    code = "problem-too-large"


class NoConvergence(VarSobolevError):
    code = "no-convergence"


class ConstantChainFailure(VarSobolevError):
    """Raised when the constant chain cannot be closed.

    ``diagnostics`` holds the partial constants computed before failing.
    """

    code = "constant-chain-failure"

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class ConfigError(VarSobolevError):
    code = "config-error"

    def __init__(self, message, path=""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
