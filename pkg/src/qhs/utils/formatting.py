"""
Output formatting utilities for qhs
"""
import csv
import io
import json
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, List, Sequence, Union

from rich.console import Console
from rich.table import Table


def format_output(data: Any, format_type: str) -> str:
    """
    Format command results as JSON or human-readable text.

    Args:
        data: The data to format (dict, list, or primitive)
        format_type: Either 'json' or 'text'

    Returns:
        str: Formatted output string
    """
    if format_type == 'json':
        return json.dumps(data, indent=2)
    return format_text(data)


def format_text(data: Any) -> str:
    """
    Render data as a rich table captured to a string.

    Dicts become a Field/Value table; a list of dicts with the same keys
    becomes one row per item.

    Args:
        data: The data to format

    Returns:
        str: Human-readable text output
    """
    if isinstance(data, dict):
        table = Table(show_header=True, header_style="bold cyan")
        table.add_column("Field", style="green")
        table.add_column("Value", style="white")
        for key, value in data.items():
            table.add_row(key.replace('_', ' ').title(), _cell(value))
        return _render(table)

    if isinstance(data, list) and data and all(isinstance(item, dict) for item in data):
        table = Table(show_header=True, header_style="bold cyan")
        columns = list(data[0].keys())
        for column in columns:
            table.add_column(column.replace('_', ' ').title())
        for item in data:
            table.add_row(*(_cell(item.get(column)) for column in columns))
        return _render(table)

    if isinstance(data, list):
        return '\n'.join(str(item) for item in data)
    return str(data)


def _cell(value: Any) -> str:
    if isinstance(value, (list, tuple)):
        return ', '.join(str(v) for v in value)
    if isinstance(value, dict):
        return ', '.join(f"{k}={v}" for k, v in value.items())
    return str(value)


def _render(table: Table) -> str:
    string_io = io.StringIO()
    Console(file=string_io, force_terminal=True, width=120).print(table)
    return string_io.getvalue()


def format_error(error_message: str, format_type: str) -> str:
    """
    Format error messages consistently.

    Args:
        error_message: The error message
        format_type: Either 'json' or 'text'

    Returns:
        str: Formatted error output
    """
    if format_type == 'json':
        return json.dumps({"error": error_message}, indent=2)
    return f"ERROR: {error_message}"


def format_seconds(ticks: Union[int, Fraction]) -> str:
    """Milliseconds as seconds with exactly three decimals, rounding half to even."""
    millis = round(Fraction(ticks))
    sign = '-' if millis < 0 else ''
    millis = abs(millis)
    return f"{sign}{millis // 1000}.{millis % 1000:03d}"


def format_ratio(value: Union[int, Fraction], digits: int = 6) -> str:
    """Exact fraction rendered with a fixed number of decimals."""
    scale = 10 ** digits
    scaled = round(Fraction(value) * scale)
    sign = '-' if scaled < 0 else ''
    scaled = abs(scaled)
    return f"{sign}{scaled // scale}.{scaled % scale:0{digits}d}"


def write_csv(path: Union[str, Path], columns: Sequence[str], rows: List[Dict[str, str]]) -> None:
    """Comma-separated, header first, LF line endings, UTF-8."""
    with open(path, 'w', encoding='utf-8', newline='') as handle:
        writer = csv.DictWriter(handle, fieldnames=list(columns), lineterminator='\n')
        writer.writeheader()
        writer.writerows(rows)


def write_json(path: Union[str, Path], data: Any) -> None:
    with open(path, 'w', encoding='utf-8', newline='') as handle:
        handle.write(json.dumps(data, indent=2, sort_keys=True))
        handle.write('\n')
