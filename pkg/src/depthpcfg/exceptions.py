"""Exception hierarchy shared by every module in the package."""


class PCFGError(Exception):
    """Base class for all errors raised by depthpcfg."""


class ParameterError(PCFGError, ValueError):
    """An argument or configuration value is outside its valid range."""


class DataError(PCFGError, ValueError):
    """Input data (counts, trees, corpora) violates a structural requirement."""


class ParseError(DataError):
    """A text file (grammar, tree, corpus) could not be parsed.

    ``line`` is 1-based when known; ``offset`` is a character offset within
    the line for bracketed-tree errors.
    """

    def __init__(self, message, line=None, offset=None):
        self.line = line
        self.offset = offset
        where = []
        if line is not None:
            where.append(f"line {line}")
        if offset is not None:
            where.append(f"offset {offset}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class DegenerateGrammarError(PCFGError):
    """The grammar cannot generate any sentence (e.g. its root row is unusable)."""


class SamplingError(PCFGError):
    """A tree could not be sampled, usually because the sentence is unparsable."""


class InternalInvariantError(PCFGError, RuntimeError):
    """A condition that the sampler guarantees by construction was violated."""
