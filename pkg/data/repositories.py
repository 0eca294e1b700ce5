from __future__ import annotations

import csv
import json
import math
import sqlite3
from collections.abc import Iterable, Sequence
from datetime import datetime
from pathlib import Path
from typing import TextIO

import numpy as np

from models import RUN_RECORD_COLUMNS, Graph, InvalidArgumentError, RunRecord, TerminationResult


def format_cell(value: object) -> str:
    """CSV text for a value; floats use repr so output is reproducible bit for bit."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        number = float(value)
        return "nan" if math.isnan(number) else repr(number)
    return str(value)


def _beta_key(beta: float) -> float:
    return round(float(beta), 10)


class TerminationRunRepository:
    def __init__(self, connection: sqlite3.Connection) -> None:
        self.connection = connection

    def record(
        self,
        experiment: str,
        beta: float,
        run_index: int,
        method: str,
        result: TerminationResult,
        seed: int,
    ) -> None:
        self.connection.execute(
            """
            INSERT OR REPLACE INTO termination_runs(experiment, beta, run_index, method, iterations, capped, seed)
            VALUES(?, ?, ?, ?, ?, ?, ?)
            """,
            (experiment, _beta_key(beta), run_index, method, result.iterations, int(result.capped), seed),
        )
        self.connection.commit()

    def completed_indices(self, experiment: str, beta: float, method: str) -> set[int]:
        rows = self.connection.execute(
            "SELECT run_index FROM termination_runs WHERE experiment = ? AND beta = ? AND method = ?",
            (experiment, _beta_key(beta), method),
        ).fetchall()
        return {int(row["run_index"]) for row in rows}

    def iterations(self, experiment: str, beta: float, method: str, runs: int | None = None) -> list[int]:
        query = """
            SELECT iterations FROM termination_runs
            WHERE experiment = ? AND beta = ? AND method = ?
        """
        params: list[object] = [experiment, _beta_key(beta), method]
        if runs is not None:
            query += " AND run_index < ?"
            params.append(runs)
        query += " ORDER BY run_index"
        return [int(row["iterations"]) for row in self.connection.execute(query, params).fetchall()]

    def capped_runs(self, experiment: str, beta: float, runs: int | None = None) -> int:
        query = "SELECT COUNT(*) AS count FROM termination_runs WHERE experiment = ? AND beta = ? AND capped = 1"
        params: list[object] = [experiment, _beta_key(beta)]
        if runs is not None:
            query += " AND run_index < ?"
            params.append(runs)
        row = self.connection.execute(query, params).fetchone()
        return int(row["count"])

    def clear(self, experiment: str) -> None:
        self.connection.execute("DELETE FROM termination_runs WHERE experiment = ?", (experiment,))
        self.connection.commit()

    def count(self) -> int:
        row = self.connection.execute("SELECT COUNT(*) AS count FROM termination_runs").fetchone()
        return int(row["count"])


class CsvTableRepository:
    def __init__(self, out_dir: str | Path) -> None:
        self.out_dir = Path(out_dir)

    def path_for(self, name: str) -> Path:
        # names may contain dots, e.g. beta0.75
        return self.out_dir / (name if name.lower().endswith(".csv") else f"{name}.csv")

    def write(
        self,
        name: str,
        header: Sequence[str],
        rows: Iterable[Sequence[object]],
        footer: Sequence[str] = (),
    ) -> Path:
        target = self.path_for(name)
        target.parent.mkdir(parents=True, exist_ok=True)
        with target.open("w", newline="", encoding="utf-8") as handle:
            self.write_stream(handle, header, rows, footer)
        return target

    @staticmethod
    def write_stream(
        handle: TextIO,
        header: Sequence[str],
        rows: Iterable[Sequence[object]],
        footer: Sequence[str] = (),
    ) -> None:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_cell(value) for value in row])
        for line in footer:
            handle.write(f"{line}\n")

    def read(self, name: str) -> tuple[list[str], list[dict[str, str]]]:
        target = self.path_for(name)
        if not target.exists():
            raise InvalidArgumentError(f"File does not exist: {target}")
        with target.open("r", encoding="utf-8", newline="") as handle:
            reader = csv.DictReader(handle)
            return list(reader.fieldnames or []), list(reader)


class RunRecordRepository:
    """RunRecord as `<name>.csv` plus a `<name>.meta.json` sidecar."""

    def __init__(self, out_dir: str | Path) -> None:
        self.tables = CsvTableRepository(out_dir)

    def save(self, record: RunRecord, name: str, extra: dict[str, object] | None = None) -> Path:
        target = self.tables.write(name, RUN_RECORD_COLUMNS, record.rows())
        metadata = dict(record.metadata)
        metadata.update(extra or {})
        metadata["generated_at"] = datetime.now().strftime("%Y-%m-%d %H:%M:%S")
        sidecar = target.with_suffix(".meta.json")
        sidecar.write_text(json.dumps(metadata, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
        return target

    def load(self, name: str) -> RunRecord:
        header, rows = self.tables.read(name)
        missing = set(RUN_RECORD_COLUMNS) - set(header)
        if missing:
            raise InvalidArgumentError(f"CSV missing required columns: {', '.join(sorted(missing))}")
        columns = {column: np.array([float(row[column]) for row in rows]) for column in RUN_RECORD_COLUMNS}
        columns["t"] = columns["t"].astype(int)
        sidecar = self.tables.path_for(name).with_suffix(".meta.json")
        metadata = json.loads(sidecar.read_text(encoding="utf-8")) if sidecar.exists() else {}
        return RunRecord(**columns, metadata=metadata)


class GraphRepository:
    """Edge-list text: a `n <count>` line, then one `i j` line per edge."""

    def __init__(self, out_dir: str | Path) -> None:
        self.out_dir = Path(out_dir)

    def save(self, graph: Graph, name: str) -> Path:
        target = self.out_dir / f"{name}.edges"
        target.parent.mkdir(parents=True, exist_ok=True)
        lines = [f"n {graph.n_nodes}"] + [f"{i} {j}" for i, j in graph.sorted_edges()]
        target.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return target

    @staticmethod
    def load(path: str | Path) -> Graph:
        source = Path(path)
        if not source.exists():
            raise InvalidArgumentError(f"Edge list does not exist: {source}")
        lines = [line.split() for line in source.read_text(encoding="utf-8").splitlines() if line.strip()]
        if not lines or len(lines[0]) != 2 or lines[0][0] != "n":
            raise InvalidArgumentError(f"Edge list {source} must start with 'n <count>'.")
        try:
            n_nodes = int(lines[0][1])
            pairs = [(int(i), int(j)) for i, j in lines[1:]]
        except ValueError as exc:
            raise InvalidArgumentError(f"Invalid edge list {source}: {exc}") from exc
        return Graph.from_pairs(n_nodes, pairs)


class ProblemDataRepository:
    """Quartic problem draws as `i,a_1..a_d,b,agent` rows."""

    def __init__(self, out_dir: str | Path) -> None:
        self.tables = CsvTableRepository(out_dir)

    def save(self, A: np.ndarray, b: np.ndarray, assignment: np.ndarray, name: str) -> Path:
        d = A.shape[1]
        header = ["i", *(f"a_{k}" for k in range(1, d + 1)), "b", "agent"]
        rows = ([i, *A[i], b[i], assignment[i]] for i in range(A.shape[0]))
        return self.tables.write(name, header, rows)

    def load(self, name: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        header, rows = self.tables.read(name)
        a_columns = [column for column in header if column.startswith("a_")]
        if not a_columns or "b" not in header or "agent" not in header:
            raise InvalidArgumentError("Problem data needs a_1..a_d, b and agent columns.")
        A = np.array([[float(row[column]) for column in a_columns] for row in rows])
        b = np.array([float(row["b"]) for row in rows])
        assignment = np.array([int(row["agent"]) for row in rows])
        return A, b, assignment
