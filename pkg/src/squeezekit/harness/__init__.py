"""Declarative experiment runner, reporting, and trace replay."""

from .replay import export_task_trace, export_traces, replay
from .report import build_report, pareto_rows, write_report
from .runner import ResultsArchive, load_archive, run
from .runspec import DEFAULT_BUDGETS, RunSpec, TaskSuite, load_runspec, load_runspec_file

__all__ = [
    "DEFAULT_BUDGETS",
    "ResultsArchive",
    "RunSpec",
    "TaskSuite",
    "build_report",
    "export_task_trace",
    "export_traces",
    "load_archive",
    "load_runspec",
    "load_runspec_file",
    "pareto_rows",
    "replay",
    "run",
    "write_report",
]
