class ContractError(ValueError):
    """A caller violated an operation's precondition."""


class ResourceError(RuntimeError):
    """A configured size limit (qubits, enumeration width) was exceeded."""


class ConfigError(ValueError):
    """An experiment configuration failed validation."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid config: " + "; ".join(self.problems))
