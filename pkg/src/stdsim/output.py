"""CSV and manifest emission.

All files are UTF-8 with LF line endings.  Floats are serialised with
``repr`` (shortest round-trip form), so identical runs produce identical
bytes.
"""

from __future__ import annotations

import json
import math
import time
from pathlib import Path

from .metrics import MetricsSeries


class OutputError(OSError):
    pass


def fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def fmt_sweep_value(value) -> str:
    """Sweep axis values: integers stay integral, infinity prints as inf."""
    if value is None or (isinstance(value, float) and math.isinf(value)):
        return "inf"
    if isinstance(value, float) and value.is_integer():
        return str(int(value))
    return fmt(value)


def emit_series_csv(series: MetricsSeries, path) -> None:
    """One row per step with the documented column order."""
    if len(series) == 0:
        raise OutputError(f"refusing to write empty series to {path}")
    names = series.column_names
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(names) + "\n")
            cols = [series.columns[name] for name in names]
            for i in range(len(series)):
                fh.write(",".join(fmt(col[i].item()) for col in cols) + "\n")
    except OSError as e:
        raise OutputError(f"cannot write series CSV {path}: {e}") from e


def emit_long_csv(rows, path) -> None:
    """Sweep long format: ``sweep_value,rep,e_rt`` per replication."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("sweep_value,rep,e_rt\n")
        for value, rep, e_rt in rows:
            fh.write(f"{fmt_sweep_value(value)},{rep},{fmt(float(e_rt))}\n")


def emit_summary_csv(rows, path) -> None:
    """Sweep summary: ``sweep_value,mean_e_rt,std_e_rt`` per sweep point."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("sweep_value,mean_e_rt,std_e_rt\n")
        for value, mean, std in rows:
            fh.write(f"{fmt_sweep_value(value)},{fmt(float(mean))},{fmt(float(std))}\n")


def write_manifest(out_dir, payload: dict) -> Path:
    """Write the run manifest (before any results are produced)."""
    path = Path(out_dir) / "manifest.json"
    payload = dict(payload)
    payload.setdefault("created_unix", time.time())
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
    return path


def update_manifest(path, **updates) -> None:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    payload.update(updates)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
