"""Exception hierarchy.

Two bases with distinct meanings:

* ``HypothesisError``: the caller handed us data that fails a stated
  precondition (bad domain, degenerate input, unsatisfiable request).
  These are expected, recoverable, and mapped to CLI exit code 3.

* ``InternalCheckError``: an invariant that the library itself promises
  was found violated mid-computation.  These indicate a bug or numerical
  breakdown and are mapped to CLI exit code 4.
"""

from __future__ import annotations


class HypothesisError(Exception):
    """Input violates a documented precondition."""


class InternalCheckError(Exception):
    """A library-maintained invariant failed; this is a bug if reachable."""


# --- hypothesis (input) failures -------------------------------------------


class OutOfDomain(HypothesisError):
    """Argument outside the validity domain of a modulus."""


class EmptyGrid(HypothesisError):
    """An evaluation grid or sample collection is empty."""


class ZeroT(HypothesisError):
    """A strictly positive argument was required but 0 was supplied."""


class GridTooCoarse(HypothesisError):
    """Sample spacing is too coarse for the requested separation scale."""


class Overflow(HypothesisError):
    """A requested size or exponent exceeds safe integer/float range."""


class MassOverflow(HypothesisError):
    """Requested total inserted length does not fit in the circle."""


class PrecisionLoss(HypothesisError):
    """Floating point cannot separate quantities the algorithm must distinguish."""


class DegenerateDerivative(HypothesisError):
    """Construction parameters force a non-positive derivative."""


class ScheduleMismatch(HypothesisError):
    """Array shapes or index schedules are inconsistent with each other."""


class PreconditionViolated(HypothesisError):
    """A stated lemma hypothesis does not hold for the given data."""


class BudgetOverflow(HypothesisError):
    """Removal budgets exceed what the selection lemma permits."""


class GuardFailed(HypothesisError):
    """A guard inequality in the witness chain failed after all retries."""

    def __init__(self, stage: int, guard: str, message: str = ""):
        self.stage = stage
        self.guard = guard
        super().__init__(
            f"guard {guard!r} failed at stage {stage}" + (f": {message}" if message else "")
        )


class Eq2Failed(HypothesisError):
    """The second witness inequality fails at the requested constant."""


class ChainAmbiguous(HypothesisError):
    """Monotone root finding in the witness chain brackets no root."""


class NoCoverWithin(HypothesisError):
    """No finite union of preimages up to the cap covers the circle."""


class NoPath(HypothesisError):
    """No admissible line sequence survives the removal sets."""


class DistortionViolated(HypothesisError):
    """An observed derivative ratio exceeds the certified distortion bound."""


# --- internal invariant failures --------------------------------------------


class NoColumn(InternalCheckError):
    """Selection found no column although the averaging bound guarantees one."""
