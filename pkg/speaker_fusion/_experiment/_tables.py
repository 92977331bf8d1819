import csv
import io
import json

from speaker_fusion._exceptions import ConfigInvalidError
from speaker_fusion._experiment._grid import ResultsGrid

TABLE_FORMATS = ("text", "csv", "json")

_SYSTEM_NAMES = {1: "System 1", 2: "System 2", 3: "System 3"}
_CSV_COLUMNS = ("feature", "system", "correct", "total", "ir_percent", "status", "error")


def _feature_label(feature_set: str) -> str:
    return f"Feature {feature_set[1:]}"


def _render_text(grid: ResultsGrid) -> str:
    label_width = max(len(_feature_label(f)) for f in grid.features)
    column_width = 10
    header = " " * label_width + "".join(
        f"{_SYSTEM_NAMES[s]:>{column_width}}" for s in grid.systems
    )
    lines = ["Identification rates IR (%)", header]
    for feature_set in grid.features:
        cells = []
        for system in grid.systems:
            cell = grid.cell(feature_set, system)
            value = cell.rate.formatted() if cell.rate is not None else "failed"
            cells.append(f"{value:>{column_width}}")
        lines.append(f"{_feature_label(feature_set):<{label_width}}" + "".join(cells))
    return "\n".join(lines) + "\n"


def _rows(grid: ResultsGrid):
    for feature_set in grid.features:
        for system in grid.systems:
            cell = grid.cell(feature_set, system)
            if cell.rate is None:
                yield (feature_set, system, None, None, None, cell.status, cell.error)
            else:
                rate = cell.rate
                yield (feature_set, system, rate.correct, rate.total, rate.formatted(), "ok", None)


def _render_csv(grid: ResultsGrid) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(_CSV_COLUMNS)
    for row in _rows(grid):
        writer.writerow(["" if value is None else value for value in row])
    return buffer.getvalue()


def _render_json(grid: ResultsGrid) -> str:
    cells = []
    for row in _rows(grid):
        record = dict(zip(_CSV_COLUMNS, row))
        if record["ir_percent"] is not None:
            record["ir_percent"] = float(record["ir_percent"])
        cells.append(record)
    document = {
        "features": list(grid.features),
        "systems": list(grid.systems),
        "cells": cells,
    }
    return json.dumps(document, indent=2, sort_keys=True) + "\n"


def emit_tables(grid: ResultsGrid, format: str = "text") -> str:
    """
    Render a results grid

    Rates are truncated to two decimals. CSV and JSON also carry the exact
    correct and total counts of each cell.

    Args:
        grid: Populated results grid
        format: "text", "csv" or "json"

    Returns:
        str: The rendered tables
    """
    if format == "text":
        return _render_text(grid)
    if format == "csv":
        return _render_csv(grid)
    if format == "json":
        return _render_json(grid)
    raise ConfigInvalidError(f"Unknown table format: {format}")
