"""Exception hierarchy shared by every stage."""


class SpinGateError(Exception):
    """Base class for all package errors."""

    exit_code = 3

    def to_dict(self):
        return {"error": type(self).__name__, "message": str(self)}


class InputError(SpinGateError, ValueError):
    """Malformed or invalid user input (files, configs, arguments)."""

    exit_code = 2

    def __init__(self, message, *, line=None, column=None, path=None):
        super().__init__(message)
        self.line = line
        self.column = column
        self.path = path

    def to_dict(self):
        d = super().to_dict()
        for key in ("line", "column", "path"):
            value = getattr(self, key)
            if value is not None:
                d[key] = value
        return d


class BadDims(InputError):
    pass


class BadSpec(InputError):
    pass


class InvalidConfig(InputError):
    pass


class TopologyMismatch(InputError):
    pass


class NotInfecting(SpinGateError):
    """The gateway does not infect the graph.

    ``closure`` holds the maximal infected set reached (0-based nodes).
    """

    exit_code = 1

    def __init__(self, closure, node_count):
        self.closure = frozenset(closure)
        self.node_count = node_count
        missing = node_count - len(self.closure)
        super().__init__(
            f"gateway does not infect the graph: closure has {len(self.closure)} "
            f"of {node_count} nodes ({missing} never infected)"
        )

    def to_dict(self):
        d = super().to_dict()
        d["closure"] = sorted(n + 1 for n in self.closure)
        return d


class NotFound(SpinGateError):
    exit_code = 1


class CapExceeded(SpinGateError):
    exit_code = 2


class TooLarge(SpinGateError):
    exit_code = 2


class ConvergenceFailure(SpinGateError):
    pass


# spectral stage


class SpectralError(SpinGateError):
    pass


class RankAmbiguity(SpectralError):
    pass


class AliasingSuspected(SpectralError):
    pass


class IllConditioned(SpectralError):
    pass


class DarkLine(SpectralError):
    pass


class GaugeFailure(SpectralError):
    pass


# reconstruction stage


class ReconstructionError(SpinGateError):
    pass


class NonEdgeViolation(ReconstructionError):
    pass


class ZeroPivot(ReconstructionError):
    pass


class NormFailure(ReconstructionError):
    pass


class LineCountDeficit(ReconstructionError):
    """Fewer spectral lines than nodes: the spectrum is (nearly) degenerate."""

    def __init__(self, found, expected):
        self.found = found
        self.expected = expected
        super().__init__(
            f"found {found} spectral lines but the network has {expected} nodes; "
            "the single-excitation spectrum looks degenerate, apply a gateway lift "
            "(lift policy auto_random or constructive)"
        )


# degeneracy stage


class RankDeficient(SpinGateError):
    pass


class NoProgress(SpinGateError):
    pass


class Exhausted(SpinGateError):
    pass


class PipelineError(SpinGateError):
    """A stage failed; ``stage`` names it and ``cause`` is the original error."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 3)
        super().__init__(f"stage '{stage}' failed: {cause}")

    def to_dict(self):
        d = super().to_dict()
        d["stage"] = self.stage
        if isinstance(self.cause, SpinGateError):
            d["cause"] = self.cause.to_dict()
        else:
            d["cause"] = {"error": type(self.cause).__name__, "message": str(self.cause)}
        return d
