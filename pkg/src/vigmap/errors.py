"""Exception hierarchy shared by all modules."""


class VigmapError(Exception):
    """Base class for every error raised by the package."""


class ConfigError(VigmapError, ValueError):
    """Invalid space, platform, engine or run configuration."""


class GenomeParseError(ConfigError):
    def __init__(self, message: str, column: int):
        super().__init__(f"column {column}: {message}")
        self.column = column


class ProfileError(VigmapError, ValueError):
    """Malformed or inconsistent cost table / platform file."""

    def __init__(self, message: str, line: int | None = None, path=None):
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)
        self.line = line


class LookupMissError(VigmapError, KeyError):
    """A (signature, CU, DVFS) triple has no cost entry."""

    def __str__(self) -> str:
        return str(self.args[0])


class InfeasibleError(VigmapError):
    """No mapping satisfies the capability predicates."""


class BudgetExceededError(VigmapError):
    def __init__(self, count: int, budget: int):
        super().__init__(f"instance has {count} feasible mappings, oracle budget is {budget}")
        self.count = count
        self.budget = budget
