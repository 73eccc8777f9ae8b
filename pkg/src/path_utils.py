"""Path utilities for campaign report output.

A verify run writes three files into one report directory:
records.csv, summary.txt and effective_config.json.
"""

from pathlib import Path
from typing import Optional, Union
import os


RECORDS_FILENAME = "records.csv"
SUMMARY_FILENAME = "summary.txt"
EFFECTIVE_CONFIG_FILENAME = "effective_config.json"


def get_output_directory(base_dir: Optional[Union[str, Path]] = None) -> Path:
    """Get the report directory.

    Args:
        base_dir: Optional directory path. If None, uses the current directory.

    Returns:
        Path object for the report directory
    """
    if base_dir is None:
        return Path.cwd()
    return Path(base_dir)


def get_output_filepath(filename: str, base_dir: Optional[Union[str, Path]] = None) -> Path:
    return get_output_directory(base_dir) / filename


def records_filepath(base_dir: Optional[Union[str, Path]] = None) -> Path:
    return get_output_filepath(RECORDS_FILENAME, base_dir)


def summary_filepath(base_dir: Optional[Union[str, Path]] = None) -> Path:
    return get_output_filepath(SUMMARY_FILENAME, base_dir)


def effective_config_filepath(base_dir: Optional[Union[str, Path]] = None) -> Path:
    return get_output_filepath(EFFECTIVE_CONFIG_FILENAME, base_dir)


def ensure_parent_directory(filepath: Path) -> Path:
    """Ensure the parent directory of a filepath exists.

    Args:
        filepath: Path to a file

    Returns:
        The same filepath (for chaining)
    """
    filepath.parent.mkdir(parents=True, exist_ok=True)
    return filepath


def is_valid_output_path(path: Path) -> bool:
    """Check whether ``path`` can serve as a report directory.

    An existing path must be a writable directory. A missing path is
    accepted when its closest existing ancestor is a writable directory.
    """
    try:
        resolved = Path(path).resolve()
        if resolved.exists():
            return resolved.is_dir() and os.access(resolved, os.W_OK)

        ancestor = resolved.parent
        while not ancestor.exists():
            if ancestor == ancestor.parent:
                return False
            ancestor = ancestor.parent
        return ancestor.is_dir() and os.access(ancestor, os.W_OK)

    except (OSError, ValueError):
        return False


def safe_write_text(filepath: Path, text: str) -> bool:
    """Write UTF-8 text with '\\n' line endings, replacing any existing file.

    Returns:
        True if the write succeeded, False otherwise
    """
    try:
        with open(ensure_parent_directory(filepath), "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        return True
    except (OSError, IOError):
        return False
