from .config import load_config_file
from .database import get_connection, init_database, resolve_output_dir
from .repositories import (
    CsvTableRepository,
    GraphRepository,
    ProblemDataRepository,
    RunRecordRepository,
    TerminationRunRepository,
)

__all__ = [
    "load_config_file",
    "get_connection",
    "init_database",
    "resolve_output_dir",
    "CsvTableRepository",
    "GraphRepository",
    "ProblemDataRepository",
    "RunRecordRepository",
    "TerminationRunRepository",
]
