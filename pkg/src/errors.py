"""Exception hierarchy shared by every subpackage."""

from typing import Optional, Sequence


class ContractViolation(ValueError):
    """A documented pre-condition of an operation does not hold."""


class UndefinedMetricError(ContractViolation):
    """A metric is undefined for the supplied labels (e.g. AUC with one class)."""


class DataFormatError(ValueError):
    """A binary or text file does not follow its documented layout."""

    def __init__(self, message: str, offset: Optional[int] = None, path: Optional[str] = None):
        self.offset = offset
        self.path = path
        location = ""
        if path is not None:
            location += f" in {path}"
        if offset is not None:
            location += f" at byte offset {offset}"
        super().__init__(f"{message}{location}")


class GradCheckFailure(RuntimeError):
    """The objective returned a non-finite value during a finite-difference step."""

    def __init__(self, message: str, param_index: int, coordinate: Sequence[int]):
        self.param_index = param_index
        self.coordinate = tuple(coordinate)
        super().__init__(f"{message} (parameter {param_index}, coordinate {self.coordinate})")


class TrainingDivergedError(RuntimeError):
    """The training loss became non-finite."""

    def __init__(self, epoch: int, bag_id: str, value: float):
        self.epoch = epoch
        self.bag_id = bag_id
        self.value = value
        super().__init__(f"Non-finite loss {value} at epoch {epoch} on bag {bag_id}")
