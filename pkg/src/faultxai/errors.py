"""Exception types raised across the package."""


class FaultXAIError(Exception):
    """Base class for all package errors."""


class ShapeError(FaultXAIError, ValueError):
    """Raised when tensor shapes are inconsistent at a graph node."""

    def __init__(self, node: str, message: str):
        self.node = node
        super().__init__(f"node {node!r}: {message}")


class TrainingError(FaultXAIError):
    pass


class ModelFormatError(FaultXAIError, ValueError):
    pass


class SimulationError(FaultXAIError):
    """Raised when the process integration produces a non-finite state."""

    def __init__(self, step: int, message: str):
        self.step = step
        super().__init__(f"step {step}: {message}")


class SchemaError(FaultXAIError, ValueError):
    pass


class CSVParseError(FaultXAIError, ValueError):
    def __init__(self, row: int, col: int, value: str, path=None):
        self.row = row
        self.col = col
        self.value = value
        where = f"{path}: " if path is not None else ""
        super().__init__(f"{where}non-numeric cell {value!r} at row {row}, column {col}")


class DatasetError(FaultXAIError, ValueError):
    pass


class AttributionError(FaultXAIError):
    pass


class ConfigError(FaultXAIError, ValueError):
    pass


class MissingArtifactError(FaultXAIError):
    """An upstream pipeline artifact is missing; ``command`` names the stage that produces it."""

    def __init__(self, path, command: str):
        self.path = str(path)
        self.command = command
        super().__init__(f"missing artifact {self.path}; run `faultxai {command}` first")
