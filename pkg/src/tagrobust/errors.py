"""Exception hierarchy shared by all tagrobust modules."""


class TagRobustError(Exception):
    """Base class for every error raised by the package."""


# dataset / graph-core
class DatasetError(TagRobustError):
    pass


class MissingFile(DatasetError):
    pass


class MalformedRow(DatasetError):
    def __init__(self, path, line, reason=""):
        self.path = str(path)
        self.line = line
        msg = f"{self.path}:{line}: malformed row"
        if reason:
            msg += f" ({reason})"
        super().__init__(msg)


class LabelOutOfRange(DatasetError):
    pass


class DuplicateEdge(DatasetError):
    pass


class SelfLoop(DatasetError):
    pass


class FeatureDimensionMismatch(DatasetError):
    pass


class GraphTooSmall(TagRobustError):
    pass


class EmptyCorpus(TagRobustError):
    pass


# models
class DimensionMismatch(TagRobustError):
    pass


class EmptySplit(TagRobustError):
    pass


class DivergedLoss(TagRobustError):
    pass


class EmptyNodeSet(TagRobustError):
    pass


# attacks
class EmptyCandidateSpace(TagRobustError):
    pass


class NoFeasibleSample(TagRobustError):
    pass


class BudgetViolation(TagRobustError):
    pass


class ExhaustedMoves(TagRobustError):
    """No legal DICE move remains; ``partial`` carries the flips made so far."""

    def __init__(self, msg, partial=None):
        super().__init__(msg)
        self.partial = partial


class NoDifferentClassSource(TagRobustError):
    pass


class RewriterUnavailable(TagRobustError):
    pass


# defenses / analysis
class EmptySimilarityClass(TagRobustError):
    pass


class SingleClass(TagRobustError):
    pass


class PredictorClassMismatch(TagRobustError):
    pass


class NoEdges(TagRobustError):
    pass


class ZeroVariance(TagRobustError):
    pass


# harness
class ScenarioPairingViolation(TagRobustError):
    pass


class EmptyTable(TagRobustError):
    pass


class StageError(TagRobustError):
    """Wraps an error raised inside one pipeline stage."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")


class IoFailure(TagRobustError):
    pass
