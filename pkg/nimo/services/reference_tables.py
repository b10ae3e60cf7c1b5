"""Published reference values for the synthetic benchmark settings.

Values live in ``nimo/resources/reference_tables.json``; lookups degrade to
``None`` with a logged warning instead of raising.
"""

import json
import logging
from enum import Enum
from functools import lru_cache
from pathlib import Path
from typing import Literal, Optional, overload


_logger = logging.getLogger(__name__)

RESOURCE_PATH = Path(__file__).resolve().parents[1] / "resources" / "reference_tables.json"


class ReferenceTable(Enum):
    REGRESSION_MSE = "regression_mse"
    CLASSIFICATION_ACCURACY = "classification_accuracy"


class ReferenceQuery(Enum):
    VALUE = "value"
    ROW = "row"
    CITATION = "citation"


@lru_cache(maxsize=4)
def _load(path: Path) -> dict[str, object]:
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        _logger.warning("Reference tables unavailable at %s: %s", path, exc)
        return {}
    return payload.get("tables", {})


def clear_cache() -> None:
    _load.cache_clear()


@overload
def lookup(
    table: ReferenceTable, row: str, query: Literal[ReferenceQuery.VALUE], column: str
) -> Optional[float]: ...

@overload
def lookup(
    table: ReferenceTable, row: str, query: Literal[ReferenceQuery.ROW], column: None = None
) -> Optional[dict[str, float]]: ...

@overload
def lookup(
    table: ReferenceTable, row: str, query: Literal[ReferenceQuery.CITATION], column: None = None
) -> Optional[str]: ...

def lookup(
    table: ReferenceTable,
    row: str,
    query: ReferenceQuery,
    column: Optional[str] = None,
) -> Optional[object]:
    """Return a reference value, a whole row, or the table citation.

    Unknown tables, rows or columns give ``None``. A missing cell (a method
    the benchmark did not report) is also ``None``, never zero.
    """
    entry = _load(RESOURCE_PATH).get(table.value)
    if not entry:
        _logger.warning("Reference table %s not found", table.value)
        return None

    if query is ReferenceQuery.CITATION:
        return entry.get("citation")

    values = entry.get("rows", {}).get(row)
    if values is None:
        _logger.info("Reference table %s has no row %s", table.value, row)
        return None

    if query is ReferenceQuery.ROW:
        return {
            name: float(values[name]) for name in entry.get("columns", []) if name in values
        }

    if column is None:
        raise ValueError("a column is required for value lookups")
    value = values.get(column)
    return None if value is None else float(value)
