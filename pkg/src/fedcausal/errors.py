"""Exception types shared across the package."""


class MalformedWeightsError(ValueError):
    pass


class SupportError(ValueError):
    """A belief or likelihood violates the full-support requirement."""


class DomainError(ValueError):
    """An observation falls outside a model's support."""


class StreamFormatError(ValueError):
    def __init__(self, path, line: int, message: str):
        self.path = path
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


class UnsupportedOperationError(TypeError):
    pass


class InformativenessUnavailableError(RuntimeError):
    """d_k cannot be computed for an agent without a generative model."""


class ExhaustedStreamError(RuntimeError):
    def __init__(self, agent, available: int, requested: int):
        self.agent = agent
        super().__init__(
            f"likelihood stream for agent {agent!r} has {available} rows, "
            f"{requested} needed"
        )


class UndefinedThresholdError(ValueError):
    pass


class DegenerateConfigurationError(RuntimeError):
    pass


class FingerprintMismatchError(ValueError):
    pass


class ReplicaError(RuntimeError):
    def __init__(self, replica: int, cause: BaseException):
        self.replica = replica
        super().__init__(f"replica {replica} failed: {cause}")


class UsageError(ValueError):
    pass
