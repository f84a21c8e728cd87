"""Manifest and trace-CSV loading.

The benchmark writes one CSV per solver x seed cell with a fixed header and
floats at 17 significant digits (lossless for binary64), one meta JSON per
cell, and a manifest listing them.  This module reads those files and nothing
else; inputs are never mutated.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

EXPECTED_COLUMNS = ["solver", "seed", "t", "wall_time_ms", "f_gap", "grad_norm",
                    "dist_to_ref", "eta", "gamma", "ls_steps", "backtracked"]

_FLOAT_COLUMNS = ("wall_time_ms", "f_gap", "grad_norm", "dist_to_ref", "eta", "gamma")
_INT_COLUMNS = ("seed", "t", "ls_steps")


@dataclass
class Trace:
    """One run's rows as column arrays plus its manifest entry."""

    label: str
    seed: int
    columns: dict
    disable_extragradient: bool = False
    solver: str = ""

    def __len__(self):
        return len(self.columns["t"])


@dataclass
class TraceSet:
    manifest: dict
    traces: list = field(default_factory=list)

    def labels(self):
        seen = []
        for tr in self.traces:
            if tr.label not in seen:
                seen.append(tr.label)
        return seen

    def by_label(self, label):
        return [tr for tr in self.traces if tr.label == label]


def parse_trace_csv(path) -> dict:
    """Columns of one trace file; raises naming any missing column."""
    lines = [ln for ln in Path(path).read_text(encoding="utf-8").split("\n") if ln]
    header = lines[0].split(",")
    for col in EXPECTED_COLUMNS:
        if col not in header:
            raise ValueError(f"trace {path} is missing column {col!r}")
    idx = {col: header.index(col) for col in header}
    columns = {col: [] for col in header}
    for ln in lines[1:]:
        parts = ln.split(",")
        for col in header:
            raw = parts[idx[col]]
            if col in _FLOAT_COLUMNS:
                columns[col].append(float(raw))
            elif col in _INT_COLUMNS:
                columns[col].append(int(raw))
            elif col == "backtracked":
                columns[col].append(raw == "true")
            else:
                columns[col].append(raw)
    return columns


def load_traces(manifest_path) -> TraceSet:
    manifest_path = Path(manifest_path)
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    base = manifest_path.parent
    out = TraceSet(manifest=manifest)
    for entry in manifest.get("runs", []):
        if entry.get("status") != "ok":
            continue
        columns = parse_trace_csv(base / entry["trace"])
        out.traces.append(Trace(
            label=entry.get("label", entry.get("solver", "run")),
            seed=int(entry.get("seed", 0)),
            columns=columns,
            disable_extragradient=bool(entry.get("disable_extragradient", False)),
            solver=entry.get("solver", "")))
    if not out.traces:
        raise ValueError(f"manifest {manifest_path} lists no successful runs")
    return out
