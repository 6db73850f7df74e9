"""Exception hierarchy shared by every module.

Each class carries the CLI exit code it maps to, so the front end can turn
any library failure into a deterministic status without a lookup table.
"""


class LyapModalError(Exception):
    exit_code = 1


class ParseError(LyapModalError):
    exit_code = 2


class DimensionMismatch(ParseError):
    pass


class NonSimpleSpectrum(LyapModalError):
    exit_code = 3


class SingularEigenbasis(NonSimpleSpectrum):
    pass


class DivergentPair(LyapModalError):
    """Raised when Re(conj(lam_i) + lam_j) >= 0 for a requested pair."""

    exit_code = 4

    def __init__(self, message, pairs=()):
        super().__init__(message)
        self.pairs = tuple(pairs)


class UnstableSystem(DivergentPair):
    pass


class ZeroEnergy(LyapModalError):
    exit_code = 5


class AssumptionViolated(LyapModalError):
    pass


class GenerationFailed(LyapModalError):
    pass


class HorizonTooShort(UserWarning):
    pass


class AmbiguousMatch(UserWarning):
    """Two mode-track assignments were equally good; the tie was broken by track id."""
