"""Output formatting for fracflow.

Terminal output supports three formats:
- table: Rich-formatted tables (default, human-friendly)
- json:  Machine-readable JSON
- plain: Simple text output for piping/scripting

Data products (solution curves, exit-law tables, path dumps) are written
as CSV files with a mandatory header row.
"""

from __future__ import annotations

import csv
import json
import math
import sys
import warnings
from collections.abc import Iterator, Sequence
from contextlib import contextmanager
from pathlib import Path
from typing import Any

from rich.console import Console
from rich.panel import Panel
from rich.table import Table

console = Console()
error_console = Console(stderr=True)


def render(
    data: list[dict[str, Any]],
    format: str = "table",
    title: str | None = None,
    columns: list[str] | None = None,
) -> None:
    """Render a list of dicts in the chosen format.

    Args:
        data: List of dictionaries to display.
        format: Output format: 'table', 'json', or 'plain'.
        title: Optional title for table output.
        columns: Optional ordered list of column keys to show. If None, uses all keys.
    """
    if not data:
        info("No results.")
        return

    if format == "json":
        _render_json(data)
    elif format == "plain":
        _render_plain(data, columns)
    else:
        _render_table(data, title, columns)


def render_detail(data: dict[str, Any], format: str = "table", title: str | None = None) -> None:
    """Render a single record's details."""
    if format == "json":
        _render_json(data)
    elif format == "plain":
        for key, value in data.items():
            print(f"{key}: {format_number(value)}")
    else:
        _render_detail_panel(data, title)


def success(message: str) -> None:
    """Print a success message."""
    console.print(f"[bold green]✓[/] {message}")


def error(message: str) -> None:
    """Print an error message to stderr."""
    error_console.print(f"[bold red]✗[/] {message}")


def warning(message: str) -> None:
    """Print a warning message to stderr."""
    error_console.print(f"[bold yellow]⚠[/] {message}")


def info(message: str, *, stderr: bool = False) -> None:
    """Print an info message."""
    (error_console if stderr else console).print(f"[bold blue]ℹ[/] {message}")


def format_number(value: Any) -> str:
    """Shortest round-tripping text for floats, str() for everything else.

    ``repr`` of a Python float is locale independent and reproduces the same
    bits, so identical runs give byte-identical files.
    """
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path: Path | str, columns: Sequence[str], rows: Sequence[Sequence[Any]]) -> Path:
    """Write rows to a CSV file with a header row.

    Args:
        path: Destination file; parent directories are created.
        columns: Header names.
        rows: Row values, formatted with ``format_number``.

    Returns:
        The path written.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_number(v) for v in row])
    return path


@contextmanager
def forward_warnings() -> Iterator[list[warnings.WarningMessage]]:
    """Collect library warnings raised inside the block and print them afterwards."""
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            yield caught
        finally:
            seen: set[str] = set()
            for w in caught:
                text = f"{w.category.__name__}: {w.message}"
                if text not in seen:
                    seen.add(text)
                    warning(text)


# ─── Renderers ───────────────────────────────────────────────────────────────


def _jsonable(value: Any) -> Any:
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def _render_json(data: Any) -> None:
    # NaN and inf are not JSON; they become null.
    print(json.dumps(_jsonable(data), indent=2, default=str, allow_nan=False))


def _render_plain(data: list[dict[str, Any]], columns: list[str] | None) -> None:
    cols = columns or list(data[0])
    writer = csv.writer(sys.stdout, delimiter="\t", lineterminator="\n")
    writer.writerow(cols)
    writer.writerows([format_number(row.get(col, "")) for col in cols] for row in data)


def _is_numeric(data: list[dict[str, Any]], col: str) -> bool:
    return all(
        isinstance(row.get(col), (int, float)) and not isinstance(row.get(col), bool)
        for row in data
    )


def _cell(value: Any) -> str:
    if isinstance(value, bool):
        return "[green]yes[/]" if value else "[bold red]no[/]"
    if isinstance(value, float):
        return f"{value:.10g}"
    return str(value)


def _render_table(
    data: list[dict[str, Any]], title: str | None, columns: list[str] | None
) -> None:
    cols = columns or list(data[0])
    table = Table(title=title, show_header=True, header_style="bold cyan", border_style="dim")
    for col in cols:
        justify = "right" if _is_numeric(data, col) else "left"
        table.add_column(col.replace("_", " ").title(), justify=justify, overflow="fold")
    for row in data:
        table.add_row(*(_cell(row.get(col, "")) for col in cols))
    console.print(table)


def _render_detail_panel(data: dict[str, Any], title: str | None) -> None:
    grid = Table.grid(padding=(0, 2))
    grid.add_column(style="bold cyan")
    grid.add_column()
    for key, value in data.items():
        grid.add_row(key.replace("_", " ").title(), _cell(value))
    console.print(Panel(grid, title=title, border_style="blue", padding=(1, 2)))
