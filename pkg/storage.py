"""
Artifact storage: output directories plus deterministic JSON and CSV files.
Every file is UTF-8 with '\\n' line endings so reruns are byte-identical.
"""
import os
import csv
import json
import logging
from pathlib import Path

logger = logging.getLogger(__name__)


def initialize_output_dir(path):
    """
    Create an output directory if it does not exist.

    Args:
        path (str | Path): Directory to create

    Returns:
        Path: The directory
    """
    out_dir = Path(path)
    os.makedirs(out_dir, exist_ok=True)
    return out_dir


def load_json(path):
    """
    Read a JSON document.

    Args:
        path (str | Path): File to read

    Returns:
        object: Decoded document

    Raises:
        OSError: If the file cannot be read
        json.JSONDecodeError: If the content is not JSON
    """
    with open(path, 'r', encoding='utf-8') as f:
        return json.load(f)


def save_json(path, data):
    """
    Write a JSON document with stable formatting.

    Args:
        path (str | Path): Destination file
        data (object): JSON-serialisable document

    Returns:
        Path: The written file
    """
    path = Path(path)
    if path.parent != Path('.'):
        initialize_output_dir(path.parent)
    text = json.dumps(data, indent=2, allow_nan=False)
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        f.write(text)
        f.write('\n')
    logger.debug(f"Wrote {path}")
    return path


def save_csv(path, header, rows):
    """
    Write a CSV table.

    Args:
        path (str | Path): Destination file
        header (sequence): Column names
        rows (iterable): Row sequences, already formatted or plain values

    Returns:
        Path: The written file
    """
    path = Path(path)
    if path.parent != Path('.'):
        initialize_output_dir(path.parent)
    with open(path, 'w', encoding='utf-8', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)
    logger.debug(f"Wrote {path}")
    return path


def format_real(value):
    """Format a float with 17 significant digits (round-trip exact)."""
    return format(float(value), '.17g')
