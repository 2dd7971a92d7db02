"""Line-delimited JSON reading and writing.

Rows are serialized with sorted keys and compact separators so that
identical data always produces identical bytes.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Iterable, Iterator


def dumps_canonical(row: dict[str, Any]) -> str:
    return json.dumps(row, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def write_jsonl(path: str | Path, rows: Iterable[dict[str, Any]]) -> int:
    """Write rows to path, one JSON object per line. Returns the row count."""
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(dumps_canonical(row))
            fh.write("\n")
            n += 1
    return n


def iter_jsonl(path: str | Path) -> Iterator[dict[str, Any]]:
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield json.loads(line)


def read_records(path: str | Path, schema: str | None = None) -> list[dict[str, Any]]:
    """Read a record file, skipping a leading header row if present.

    A header row is any object carrying a "schema" key. When `schema` is
    given and a header exists, the names must agree.
    """
    rows = list(iter_jsonl(path))
    if rows and "schema" in rows[0]:
        header = rows[0]
        if schema is not None and header["schema"] != schema:
            raise ValueError(
                f"expected schema {schema!r}, file declares {header['schema']!r}"
            )
        return rows[1:]
    return rows
