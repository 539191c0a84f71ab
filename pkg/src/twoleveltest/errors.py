"""Exception types shared across the package."""


class TwoLevelError(Exception):
    """Base class for package errors."""


class DomainError(TwoLevelError, ValueError):
    """An argument is outside the mathematical domain of a function."""


class ValidationError(TwoLevelError, ValueError):
    """A structured input (spec, counts, probabilities) violates an invariant."""


class BlockTooShortError(TwoLevelError, ValueError):
    """A one-level test received fewer bits than it requires."""


class UnsupportedParameterError(TwoLevelError, ValueError):
    """A test parameter has no defined class layout (e.g. unknown block size)."""


class SourceExhaustedError(TwoLevelError, RuntimeError):
    """A finite bit source (file-backed) ran out of bits."""


class WorkBudgetError(TwoLevelError, RuntimeError):
    """An enumeration would exceed the configured composition budget."""

    def __init__(self, workload: int, budget: int):
        self.workload = workload
        self.budget = budget
        super().__init__(
            f"enumeration needs {float(workload):.3e} compositions, over the budget "
            f"of {float(budget):.3e}; raise the budget or enable checkpointing"
        )


class CheckpointError(TwoLevelError, RuntimeError):
    """A checkpoint file is corrupt or belongs to a different computation."""
