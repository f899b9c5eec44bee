"""Plot-ready CSV tables and JSON run metadata.

Data files are UTF-8 CSV with a header row, '.' decimal separator,
17-significant-digit floats, LF line endings and deterministic row
order, so identical runs produce byte-identical files.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field


@dataclass
class Table:
    """A named column layout plus rows of plain Python values."""

    columns: list[str]
    rows: list[list] = field(default_factory=list)

    def append(self, *values):
        if len(values) != len(self.columns):
            raise ValueError(
                f"row has {len(values)} values for {len(self.columns)} columns"
            )
        self.rows.append(list(values))


def format_cell(value) -> str:
    """Deterministic text form: bools as 0/1, floats at 17 significant digits."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, (int,)):
        return str(value)
    if isinstance(value, float):
        return format(value, ".17g")
    if isinstance(value, str):
        return value
    # numpy scalars and anything else numeric
    try:
        as_float = float(value)
    except (TypeError, ValueError):
        return str(value)
    if as_float == int(as_float) and hasattr(value, "dtype") and "int" in str(value.dtype):
        return str(int(as_float))
    return format(as_float, ".17g")


def write_table(table: Table, path) -> None:
    """Write a table as CSV (header row, LF endings)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(table.columns)
        for row in table.rows:
            writer.writerow([format_cell(v) for v in row])


def write_metadata(path, config: dict, rng_seed: int, timings: dict, outputs: list[str],
                   tool_name: str, tool_version: str) -> None:
    """Write the run manifest.

    The embedded ``config`` block has every default materialized and can
    be fed back to the CLI to reproduce the run byte for byte.
    """
    payload = {
        "tool": {"name": tool_name, "version": tool_version},
        "rng_seed": rng_seed,
        "config": config,
        "timings": timings,
        "outputs": outputs,
    }
    with open(path, "w", encoding="utf-8", newline="") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
