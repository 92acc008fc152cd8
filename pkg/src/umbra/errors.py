"""Exception hierarchy shared by every umbra module."""


class UmbraError(Exception):
    """Base class for all errors raised by umbra."""


class ParseError(UmbraError):
    """Syntax error at a byte offset of the input text."""

    def __init__(self, message, offset, expected=(), text=None):
        self.offset = offset
        self.expected = tuple(sorted(set(expected)))
        self.text = text
        detail = f"{message} at offset {offset}"
        if self.expected:
            detail += f" (expected one of: {', '.join(self.expected)})"
        if text is not None:
            line = text.count("\n", 0, offset) + 1
            col = offset - (text.rfind("\n", 0, offset) + 1) + 1
            detail += f" [line {line}, column {col}]"
        super().__init__(detail)


class EvalError(UmbraError):
    """Expression evaluation failure (unbound name, division by zero, type)."""


class UnboundParameterError(EvalError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"unbound parameter '{name}'")


class ModelError(UmbraError):
    """Semantic error in a model: duplicate names, ranges, conflicts."""


class ProbabilityError(ModelError):
    """A fully-bound distribution is not a probability distribution."""


class StateSpaceError(ModelError):
    """The reachable state space exceeds the configured cap."""


class PropertyError(UmbraError):
    """Property is malformed or incompatible with the model kind."""


class EngineError(UmbraError):
    """Numeric model checking failure."""


class ParametricError(UmbraError):
    """Parametric model checking failure."""


class PoleError(ParametricError):
    """A rational function was evaluated at a zero of its denominator."""


class SolverError(UmbraError):
    """A nonlinear solver or optimiser did not produce an acceptable point."""

    def __init__(self, message, best=None, residual=None, iterations=None):
        self.best = best
        self.residual = residual
        self.iterations = iterations
        super().__init__(message)


class InferenceError(UmbraError):
    """Invalid inference specification or observation data."""


class ValidationError(UmbraError):
    """One or more world-model / manifest consistency errors."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class VerificationError(UmbraError):
    """Failure while verifying a multi-model system, with the dependency chain."""

    def __init__(self, message, chain=()):
        self.chain = tuple(chain)
        if self.chain:
            message = f"{message} (while resolving {' <- '.join(self.chain)})"
        super().__init__(message)
