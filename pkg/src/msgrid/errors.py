"""Exception hierarchy shared by all msgrid modules.

The CLI maps these onto process exit codes: configuration and format
problems exit with 2, numerical failures with 3, and iterative
non-convergence with 4 (non-convergence is reported, not raised, by the
solver itself; the CLI decides the exit code).
"""


class MsgridError(Exception):
    """Base class for all msgrid errors."""


class ConfigError(MsgridError):
    """Invalid configuration or precondition violation (exit code 2)."""


class FormatError(MsgridError):
    """Malformed or corrupted dataset/weight file (exit code 2)."""


class CompatibilityError(MsgridError):
    """Input violates a compatibility constraint, e.g. a source vector
    with nonzero sum under no-flux boundary conditions (exit code 2)."""


class PlacementError(MsgridError):
    """Rejection sampling could not place the requested inclusions
    within the retry budget (exit code 3)."""


class EigenSolveError(MsgridError):
    """A dense or iterative eigensolver failed to converge (exit code 3)."""


class FactorizationError(MsgridError):
    """A matrix factorization failed, e.g. a non-SPD smoother block
    (exit code 3)."""


class RankDeficiencyError(MsgridError):
    """A basis block is numerically rank deficient even after the jitter
    fallback (exit code 3)."""

    def __init__(self, message, pivot=None):
        super().__init__(message)
        self.pivot = pivot


class ContractError(MsgridError):
    """An operator contract is violated, e.g. the prolongation does not
    contain the constant vector in its column span (exit code 3)."""
