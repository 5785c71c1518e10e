"""Exception hierarchy.

Two families: :class:`InputError` for malformed data or configuration
(CLI exit code 1) and :class:`ComputeError` for numeric or runtime failures
(exit code 2).
"""

from __future__ import annotations


class CoexError(Exception):
    """Base class for every error raised by this package."""


class InputError(CoexError):
    """Rejected input file or configuration."""

    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)


class ComputeError(CoexError):
    """Numeric or runtime failure during a pipeline stage."""


# ingest
class MalformedLine(InputError):
    pass


class DuplicateEdge(InputError):
    pass


class SelfLoop(InputError):
    pass


class SubThresholdWeight(InputError):
    pass


class DuplicatePair(InputError):
    pass


class CycleDetected(InputError):
    def __init__(self, cycle, line: int | None = None, path: str | None = None):
        self.cycle = list(cycle)
        super().__init__("cycle " + " -> ".join(self.cycle), line=line, path=path)


class UnknownKey(InputError):
    pass


class InvalidValue(InputError):
    pass


# ontology
class UnknownTerm(InputError):
    pass


class ClosureViolation(InputError):
    pass


class NoSubHierarchies(ComputeError):
    pass


class ZeroAncestorGenes(ComputeError):
    pass


# graph
class DegenerateWeights(ComputeError):
    pass


class UnknownGene(InputError):
    pass


# spectral
class EigensolverFailure(ComputeError):
    pass


# enrichment
class InvalidCounts(ValueError, ComputeError):
    pass


class GeneSetMismatch(ComputeError):
    pass


class GeneOrderMismatch(ComputeError):
    pass


# learn / explain
class DegenerateLabels(ComputeError):
    pass


class FeatureMismatch(ComputeError):
    pass


class TooFewSamples(ComputeError):
    pass


class AllZeroImportance(UserWarning):
    """Every feature has zero attribution; the caller keeps all columns."""


class EmptyTrainingSplit(UserWarning):
    """A classifier unit saw no positive training rows and predicts 0."""


# eval
class NoPositives(ComputeError):
    pass


class NoPositivesForTerm(UserWarning):
    """A term has no positive genes; it is left out of macro averages."""


# synth
class InfeasibleSpec(InputError):
    pass
