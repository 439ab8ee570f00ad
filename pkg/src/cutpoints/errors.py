"""Exception hierarchy.

Every error carries a short machine-readable ``code`` used by the CLI's
error records.
"""


class CutpointsError(Exception):
    code = "error"


class InvalidProfile(CutpointsError, ValueError):
    code = "invalid-profile"


class DivergentTail(CutpointsError, ValueError):
    code = "divergent-tail"


class OutOfRange(CutpointsError, IndexError):
    code = "out-of-range"


class InvalidArguments(CutpointsError, ValueError):
    code = "invalid-arguments"


class InvalidInput(CutpointsError, ValueError):
    code = "invalid-input"


class NumericFailure(CutpointsError, ArithmeticError):
    code = "numeric-failure"


class InsufficientData(CutpointsError, ValueError):
    code = "insufficient-data"


class InconsistentOccupationField(CutpointsError, ValueError):
    code = "inconsistent-occupation-field"


class StackUnderflow(CutpointsError, RuntimeError):
    code = "stack-underflow"


class InvalidPermutation(CutpointsError, ValueError):
    code = "invalid-permutation"


class InconsistentStacks(CutpointsError, ValueError):
    code = "inconsistent-stacks"


class MemoryGuard(CutpointsError, ValueError):
    code = "memory-guard"
