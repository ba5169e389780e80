"""
Base Experiment Runner Template

This module provides a base class for replicated experiments with:
- Buffered result rows flushed to CSV every ``save_interval`` rows
- Atomic rewrites (temp file + rename) so an interrupted run leaves a
  readable results.csv
- Resumption: tasks whose rows are already on disk are skipped
- A worker pool over tasks with a progress bar
- Dual-file system (results.csv + results_FINAL.xlsx for viewing)

Inherit from this class to create study-specific runners.

Example:
    class MyRunner(BaseExperimentRunner):
        def get_tasks(self):
            return [0, 1, 2]

        def task_key(self, task):
            return (task,)

        def run_task(self, task):
            return run_one(task)          # module-level, picklable

        def get_headers(self):
            return ["replication", "value"]

        def sort_columns(self):
            return ["replication"]
"""

from __future__ import annotations

import logging
import os
import tempfile
import time
from abc import ABC, abstractmethod
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

import pandas as pd
from openpyxl import Workbook
from openpyxl.utils import get_column_letter
from tqdm import tqdm

logger = logging.getLogger(__name__)

RESULTS_FILE = "results.csv"
TIMINGS_FILE = "timings.csv"
SUMMARY_FILE = "summary.csv"
FINAL_FILE = "results_FINAL.xlsx"


def atomic_write_csv(df: pd.DataFrame, path: Path) -> None:
    """Write a CSV through a temporary file in the same directory, then rename."""
    fd, tmp = tempfile.mkstemp(prefix=path.name + ".", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            df.to_csv(f, index=False)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


def _cell(value: Any) -> Any:
    """Plain Python value for a worksheet cell; NaN becomes an empty cell."""
    if hasattr(value, "item"):
        value = value.item()
    if isinstance(value, float) and value != value:
        return None
    return value


class BaseExperimentRunner(ABC):
    """
    Abstract base class for replicated experiments.

    Subclasses must implement:
        - get_tasks(): Units of work (picklable)
        - task_key(task): Tuple identifying a task's rows on disk
        - run_task(task): Result rows of one task, as dicts
        - get_headers(): Column order of results.csv
        - sort_columns(): Columns defining the canonical row order
    """

    def __init__(self, results_dir: str = "results", save_interval: int = 50, jobs: int = 1,
                 progress: bool = True):
        """
        Initialize the runner.

        Args:
            results_dir: Directory for result files (default: "results")
            save_interval: Number of rows before flushing to disk (default: 50)
            jobs: Worker processes; 1 runs in-process
            progress: Show a progress bar
        """
        self.results_dir = Path(results_dir)
        self.save_interval = max(int(save_interval), 1)
        self.jobs = max(int(jobs), 1)
        self.progress = progress

        self.results_path = self.results_dir / RESULTS_FILE
        self.timings_path = self.results_dir / TIMINGS_FILE
        self.summary_path = self.results_dir / SUMMARY_FILE
        self.final_path = self.results_dir / FINAL_FILE

        self.rows: List[Dict[str, Any]] = []
        self.timings: List[Dict[str, Any]] = []
        self.data_buffer: List[Dict[str, Any]] = []
        self.row_count = 0
        self.start_time: Optional[datetime] = None

        self.results_dir.mkdir(parents=True, exist_ok=True)

    @abstractmethod
    def get_tasks(self) -> List[Any]:
        """Return every task of the experiment in a fixed order."""

    @abstractmethod
    def task_key(self, task: Any) -> Tuple:
        """Return the values of ``key_columns()`` shared by a task's rows."""

    @abstractmethod
    def run_task(self, task: Any) -> Tuple[List[Dict[str, Any]], List[Dict[str, Any]]]:
        """
        Execute one task.

        Returns:
            (result rows, timing rows). Must be a picklable call when jobs > 1.
        """

    @abstractmethod
    def get_headers(self) -> List[str]:
        """Return the column order of results.csv."""

    @abstractmethod
    def sort_columns(self) -> List[str]:
        """Columns that order results.csv canonically."""

    def key_columns(self) -> List[str]:
        """Columns of ``task_key``; defaults to all sort columns."""
        return self.sort_columns()

    def is_complete(self, row: Dict[str, Any]) -> bool:
        """Whether a row found on disk counts as done."""
        return True

    def summarize(self, results: pd.DataFrame) -> pd.DataFrame:
        """Summary table written next to the results; empty by default."""
        return pd.DataFrame()

    # ========== Files ==========

    def frame(self, rows: Sequence[Dict[str, Any]]) -> pd.DataFrame:
        df = pd.DataFrame(list(rows))
        headers = self.get_headers()
        extra = sorted(c for c in df.columns if c not in headers)
        df = df.reindex(columns=headers + extra)
        if len(df):
            df = df.sort_values(self.sort_columns(), kind="mergesort").reset_index(drop=True)
        return df

    def load_completed(self) -> set:
        """Read results.csv from an earlier run and keep its completed rows."""
        if not self.results_path.exists():
            return set()
        try:
            previous = pd.read_csv(self.results_path, float_precision="round_trip")
        except (pd.errors.EmptyDataError, pd.errors.ParserError) as e:
            logger.warning("ignoring unreadable %s: %s", self.results_path, e)
            return set()
        keys = self.key_columns()
        if not set(keys).issubset(previous.columns):
            logger.warning("%s has a different layout; starting over", self.results_path)
            return set()
        kept = [r for r in previous.to_dict("records") if self.is_complete(r)]
        done_rows: Dict[Tuple, List[Dict[str, Any]]] = {}
        for row in kept:
            done_rows.setdefault(tuple(row[k] for k in keys), []).append(row)
        self.rows = kept
        self.row_count = len(kept)
        return set(done_rows)

    def buffer_data(self, rows: Iterable[Dict[str, Any]]) -> None:
        """Add rows to the buffer and flush when full."""
        for row in rows:
            self.data_buffer.append(row)
            self.row_count += 1
        if len(self.data_buffer) >= self.save_interval:
            self.flush_buffer()

    def flush_buffer(self) -> None:
        """Rewrite results.csv with every row so far, in canonical order."""
        if not self.data_buffer and self.results_path.exists():
            return
        self.rows.extend(self.data_buffer)
        self.data_buffer.clear()
        atomic_write_csv(self.frame(self.rows), self.results_path)

    def copy_to_final(self) -> pd.DataFrame:
        """Write summary.csv, timings.csv and the results_FINAL.xlsx viewing copy."""
        self.flush_buffer()
        results = self.frame(self.rows)
        summary = self.summarize(results)
        atomic_write_csv(summary, self.summary_path)
        if self.timings:
            timings = pd.DataFrame(self.timings)
            atomic_write_csv(timings.sort_values(list(timings.columns[:-1]), kind="mergesort"),
                             self.timings_path)

        wb = Workbook()
        for title, df in (("raw", results), ("summary", summary)):
            ws = wb.active if title == "raw" else wb.create_sheet()
            ws.title = title
            ws.append([str(c) for c in df.columns])
            for values in df.itertuples(index=False):
                ws.append([_cell(v) for v in values])
            for i, header in enumerate(df.columns, 1):
                ws.column_dimensions[get_column_letter(i)].width = max(len(str(header)) + 2, 12)
        wb.save(self.final_path)
        wb.close()
        print(f"[{datetime.now().strftime('%H:%M:%S')}] Updated FINAL file ({self.row_count} rows)")
        return summary

    # ========== Execution ==========

    def _execute(self, tasks: List[Any], worker: Callable[[Any], Any]) -> Iterator[Any]:
        if self.jobs == 1 or len(tasks) <= 1:
            for task in tasks:
                yield worker(task)
            return
        with ProcessPoolExecutor(max_workers=self.jobs) as pool:
            yield from pool.map(worker, tasks)

    def worker(self) -> Callable[[Any], Any]:
        """Picklable callable running one task; subclasses with state override it."""
        return self.run_task

    def run(self) -> pd.DataFrame:
        """Run the pending tasks and return the summary table."""
        self.start_time = datetime.now()
        done = self.load_completed()
        tasks = [t for t in self.get_tasks() if self.task_key(t) not in done]

        print("\n" + "=" * 60)
        print("Starting experiment")
        print("=" * 60)
        print(f"Results directory: {self.results_dir}")
        print(f"Tasks: {len(tasks)} pending, {len(done)} already on disk")
        print(f"Workers: {self.jobs}")
        print(f"Save interval: every {self.save_interval} rows")
        print("=" * 60 + "\n")

        started = time.time()
        try:
            results = self._execute(tasks, self.worker())
            for rows, timings in tqdm(results, total=len(tasks), disable=not self.progress,
                                      desc="tasks", unit="task"):
                self.timings.extend(timings)
                self.buffer_data(rows)
        except KeyboardInterrupt:
            print("\n\nStopping experiment...")
            raise
        finally:
            print("Flushing buffered rows...")
            self.flush_buffer()

        summary = self.copy_to_final()
        print("Experiment completed!")
        print(f"Total rows: {self.row_count} ({time.time() - started:.1f} s)")
        return summary

