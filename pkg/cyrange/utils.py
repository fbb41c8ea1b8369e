"""Utility functions."""

import csv
import io
import json
import os
import tempfile
from contextlib import contextmanager
from pathlib import Path
from typing import IO, Any, Dict, Iterable, Iterator, Mapping, Sequence, Union

from tomlkit import load
from tomlkit.items import Array, Item, Table

from cyrange.logger import get_logger

LOG = get_logger(__name__)


@contextmanager
def atomic_write(
    filename: Union[str, Path], mode: str = "w", encoding: str = "utf-8"
) -> Iterator[IO]:
    """Create a context manager that writes to a temporary file and renames it.

    The destination only ever holds a complete file: the temporary file lives in
    the same directory and replaces the destination with ``os.replace`` once the
    block exits without an error.

    Parameters
    ----------
    filename : str or Path
        The destination path.
    mode : str, optional (default "w")
        ``"w"`` for text or ``"wb"`` for binary output.
    encoding : str, optional (default "utf-8")
        Encoding for text mode. Ignored in binary mode.
    """
    target = Path(filename)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmpname = tempfile.mkstemp(dir=target.parent, prefix=f".{target.name}.")
    kwargs: Dict[str, Any] = {} if "b" in mode else {"encoding": encoding, "newline": ""}
    try:
        with os.fdopen(fd, mode, **kwargs) as outfile:
            yield outfile
            outfile.flush()
            os.fsync(outfile.fileno())
        os.replace(tmpname, target)
    except BaseException:
        if os.path.exists(tmpname):
            os.unlink(tmpname)
        raise
    LOG.debug(f"Wrote {target}")


def write_jsonl(filename: Union[str, Path], records: Iterable[Mapping]) -> None:
    """Write one compact JSON object per line, atomically.

    Parameters
    ----------
    filename : str or Path
        The destination path.
    records : iterable
        The records to write. Keys keep their insertion order.
    """
    with atomic_write(filename) as outfile:
        for record in records:
            outfile.write(json.dumps(record, separators=(",", ":")))
            outfile.write("\n")


def write_json(filename: Union[str, Path], document: Mapping) -> None:
    """Write a pretty-printed JSON document atomically."""
    with atomic_write(filename) as outfile:
        json.dump(document, outfile, indent=2)
        outfile.write("\n")


def write_csv(
    filename: Union[str, Path], header: Sequence[str], rows: Iterable[Sequence]
) -> None:
    """Write a CSV file with a header row, atomically.

    ``None`` cells are written as empty strings.

    Parameters
    ----------
    filename : str or Path
        The destination path.
    header : list
        The column names.
    rows : iterable
        The data rows.
    """
    with atomic_write(filename) as outfile:
        writer = csv.writer(outfile, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(["" if cell is None else cell for cell in row])


def format_csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    """Render a header and rows as CSV text."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)

    return buffer.getvalue()


def _convert_toml_item(item: Union[Item, Any]) -> Any:
    if isinstance(item, Array):
        return [_convert_toml_item(value) for value in item]
    if isinstance(item, Table):
        return {key: _convert_toml_item(value) for key, value in item.items()}
    if hasattr(item, "unwrap"):
        return item.unwrap()
    return item


def parse_toml(filename: Union[str, Path], algo: str) -> Dict[str, Any]:
    """Read the hyperparameter table for an algorithm from a TOML file.

    Values live under ``[cyrange.<algo>]``. A file without that table yields an
    empty mapping so the defaults apply.

    Parameters
    ----------
    filename : str or Path
        The name of the TOML file.
    algo : str
        ``"dqn"`` or ``"ce"``.

    Returns
    -------
    dict
        The raw hyperparameter mapping.

    Raises
    ------
    ValueError
        If ``[cyrange]`` or ``[cyrange.<algo>]`` is not a table.
    """
    with open(filename) as infile:
        config = load(infile)
    if "cyrange" not in config:
        LOG.info(f"No [cyrange] table in {filename}; using default hyperparameters")
        return {}
    section = config["cyrange"]
    if not isinstance(section, Table):
        raise ValueError(f"[cyrange] in {filename} must be a table")
    if algo not in section:
        return {}
    table = section[algo]
    if not isinstance(table, Table):
        raise ValueError(f"[cyrange.{algo}] in {filename} must be a table")

    return {key: _convert_toml_item(value) for key, value in table.items()}


def parse_overrides(pairs: Sequence[str]) -> Dict[str, str]:
    """Parse repeated ``key=value`` flags into a mapping.

    Values stay strings; the hyperparameter schema coerces them.

    Parameters
    ----------
    pairs : list
        The raw ``--hp`` values.

    Returns
    -------
    dict
        The overrides, later flags winning.

    Raises
    ------
    ValueError
        If a flag has no ``=`` or an empty key.
    """
    overrides: Dict[str, str] = {}
    for pair in pairs:
        key, sep, value = pair.partition("=")
        if not sep or not key.strip():
            raise ValueError(f"Expected key=value, got {pair!r}")
        overrides[key.strip()] = value.strip()

    return overrides


def merge_layers(*layers: Mapping[str, Any]) -> Dict[str, Any]:
    """Merge mappings left to right; later layers win."""
    merged: Dict[str, Any] = {}
    for layer in layers:
        merged.update(layer)

    return merged

