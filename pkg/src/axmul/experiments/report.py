from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


def _quote(text: str) -> str:
    if any(ch in text for ch in ',"\n\r'):
        return '"' + text.replace('"', '""') + '"'
    return text


def format_column(values) -> list[str]:
    """Round-trip text for a CSV column: 9 significant digits for float32, 17 for float64."""
    arr = np.asarray(values)
    if arr.dtype == np.bool_:
        return np.where(arr, "1", "0").tolist()
    if np.issubdtype(arr.dtype, np.integer):
        return [str(v) for v in arr.tolist()]
    if arr.dtype == np.float32:
        return np.char.mod("%.9g", arr.astype(np.float64)).tolist()
    if np.issubdtype(arr.dtype, np.floating):
        return np.char.mod("%.17g", arr).tolist()
    return [_quote(str(v)) for v in arr.tolist()]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    return obj


@dataclass
class EvalReport:
    """Experiment output with its config echo; rows go to CSV and the summary to JSON."""

    experiment: str
    seed: int | None
    config: dict
    table: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    reference: dict = field(default_factory=dict)

    def csv_text(self) -> str:
        cols = [format_column(v) for v in self.table.values()]
        lines = [",".join(_quote(name) for name in self.table)]
        lines.extend(",".join(cells) for cells in zip(*cols))
        return "\n".join(lines) + "\n"

    def json_doc(self) -> dict:
        doc = {"experiment": self.experiment, "seed": self.seed, "config": self.config,
               "summary": self.summary}
        if self.reference:
            doc["reference"] = self.reference
        return _jsonable(doc)

    def json_text(self) -> str:
        return json.dumps(self.json_doc(), indent=2, sort_keys=False, allow_nan=False) + "\n"

    def write(self, out) -> dict[str, Path]:
        """Write the report; returns the paths written keyed by kind.

        ``out`` names the primary file.  For a ``.json`` path the summary
        goes there and the table (if any) to the same stem with ``.csv``;
        for any other path the table goes to ``out`` and the summary to the
        ``.json`` sibling.  A directory gets ``<experiment>-seed<seed>.csv``.
        """
        out = Path(out)
        if out.is_dir():
            out = out / f"{self.experiment}-seed{self.seed}.csv"
        written = {}
        if out.suffix == ".json":
            json_path, csv_path = out, out.with_suffix(".csv")
        else:
            json_path, csv_path = out.with_suffix(".json"), out
        if self.table:
            csv_path.write_text(self.csv_text(), newline="")
            written["csv"] = csv_path
        json_path.write_text(self.json_text())
        written["json"] = json_path
        return written


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, list(reader)
