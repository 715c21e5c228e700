"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class WSError(Exception):
    exit_code = 2

    def __init__(self, message: str, module: str = ""):
        self.module = module
        super().__init__(f"{module}: {message}" if module else message)


class DatasetError(WSError, ValueError):
    """Malformed or inconsistent weak-supervision input."""


class FeatureError(WSError, ValueError):
    """Feature component incompatible with the dataset it is evaluated on."""


class EstimateError(WSError, ValueError):
    """Expectation estimates cannot be formed (e.g. no labels and no prior)."""


class EmptyGroupError(WSError, ValueError):
    """A group of instances turned out empty."""


class FingerprintError(WSError, ValueError):
    """Model applied to features or estimates it was not fitted on."""


class InfeasibleError(WSError):
    """The uncertainty set is empty (primal infeasible / dual unbounded)."""

    exit_code = 3
