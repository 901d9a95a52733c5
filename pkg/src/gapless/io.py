"""CSV and JSON plumbing shared by the CLI and the experiment drivers.

Floats are written with ``repr`` (shortest round-trip form), so a file read
back with :func:`float` reproduces every value bit for bit.
"""

from __future__ import annotations

import csv
import io
import json
import math
from typing import Iterable, Mapping, Sequence

from . import __version__

__all__ = ["fmt", "header_lines", "write_csv", "csv_text", "read_csv_rows", "dump_json"]


def fmt(x) -> str:
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        return repr(float(x))
    if hasattr(x, "item"):  # numpy scalar
        return fmt(x.item())
    return str(x)


def header_lines(subcommand: str, config: Mapping, seed=None) -> list[str]:
    lines = [f"# gapless {__version__}", f"# subcommand: {subcommand}"]
    lines.append("# config: " + json.dumps(config, sort_keys=True, default=str))
    lines.append(f"# seed: {seed}")
    return lines


def write_csv(fh, columns: Sequence[str], rows: Iterable[Sequence], header: Sequence[str] = ()) -> None:
    for line in header:
        fh.write(line + "\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([fmt(v) for v in row])


def csv_text(columns, rows, header=()) -> str:
    buf = io.StringIO()
    write_csv(buf, columns, rows, header)
    return buf.getvalue()


def read_csv_rows(fh) -> tuple[list[str], list[list[str]]]:
    """Columns and rows of a CSV file, skipping ``#`` comment lines."""
    lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(lines)
    columns = next(reader)
    return columns, [r for r in reader if r]


def dump_json(data, fh) -> None:
    json.dump(data, fh)
    fh.write("\n")
