"""Exception hierarchy.

Every error raised by the package derives from :class:`RebenchError`. The
three top-level families map onto the CLI exit codes (config 2, data 3,
numeric 4).
"""


class RebenchError(Exception):
    exit_code = 1
    module = "rebench"

    def __init__(self, message, **context):
        self.message = message
        self.context = dict(context)
        super().__init__(self._render())

    def _render(self):
        if not self.context:
            return self.message
        ctx = ", ".join(f"{k}={v}" for k, v in self.context.items())
        return f"{self.message} [{ctx}]"

    def with_context(self, **context):
        """Return the same error with extra context (split, trial, column...)."""
        self.context.update(context)
        self.args = (self._render(),)
        return self

    def __str__(self):
        return self._render()


class ConfigError(RebenchError, ValueError):
    exit_code = 2
    module = "cli"


class DataError(RebenchError, ValueError):
    exit_code = 3
    module = "data"


class ParseError(DataError):
    pass


class DuplicateYearError(DataError):
    pass


class GapError(DataError):
    pass


class NonFiniteError(DataError):
    pass


class AllMissingColumnError(DataError):
    pass


class ZeroVarianceError(DataError):
    pass


class MissingPredictorError(DataError):
    module = "reconstruct"


class NumericError(RebenchError, ArithmeticError):
    exit_code = 4
    module = "numeric"


class ConvergenceError(NumericError):
    module = "reconstruct"


class RankError(NumericError):
    module = "reconstruct"


class SingularCovarianceError(NumericError):
    module = "consistency"


class DegenerateHoldoutError(NumericError):
    module = "skill"
