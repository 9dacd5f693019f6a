"""
Output helpers for the sweep runner and the CLI: CSV tables through pandas
with a fixed float format, and JSON dumps of numpy and complex data.
"""

import json
import math
import os
from typing import Any, List, Union

import numpy as np
import pandas as pd

# Type aliases
PathLike = Union[str, os.PathLike]

# Constants
FLOAT_FORMAT = "%.17g"


def _ensure_parent(file_path: PathLike) -> None:
    parent = os.path.dirname(os.fspath(file_path))
    if parent:
        os.makedirs(parent, exist_ok=True)


# CSV/Pandas conversion tools
def csv_to_pandas(file_path: PathLike) -> pd.DataFrame:
    """
    Read a CSV table written by pandas_to_csv.

    Args:
        file_path: The path to the CSV file
    Returns:
        A pandas dataframe
    """
    return pd.read_csv(file_path, keep_default_na=True)


def pandas_to_csv(df: pd.DataFrame, file_path: PathLike) -> str:
    """
    Save a dataframe with a header row, "\\n" line endings and floats at 17
    significant digits, so equal results give byte-identical files.

    Returns:
        The path written
    """
    _ensure_parent(file_path)
    df.to_csv(file_path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return os.fspath(file_path)


def append_files(file_paths: List[PathLike]) -> pd.DataFrame:
    """Concatenate several CSV tables (e.g. sweeps run in pieces) into one dataframe."""
    if not file_paths:
        return pd.DataFrame()
    return pd.concat([csv_to_pandas(path) for path in file_paths], ignore_index=True)


# JSON tools
def make_json_safe(value: Any) -> Any:
    """
    Convert numpy arrays and scalars, complex numbers and dataframes into
    plain JSON types. Complex values become [re, im]; complex arrays become
    {"re": ..., "im": ...}; non-finite floats become None.
    """
    if isinstance(value, pd.DataFrame):
        return make_json_safe(value.to_dict(orient="records"))
    if isinstance(value, dict):
        return {str(k): make_json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [make_json_safe(v) for v in value]
    if isinstance(value, np.ndarray):
        if np.iscomplexobj(value):
            return {"re": make_json_safe(value.real.tolist()), "im": make_json_safe(value.imag.tolist())}
        return make_json_safe(value.tolist())
    if isinstance(value, np.generic):
        return make_json_safe(value.item())
    if isinstance(value, complex):
        return [make_json_safe(value.real), make_json_safe(value.imag)]
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def write_json(data: Any, file_path: PathLike) -> str:
    _ensure_parent(file_path)
    with open(file_path, "w", encoding="utf-8", newline="\n") as handle:
        json.dump(make_json_safe(data), handle, indent=2)
        handle.write("\n")
    return os.fspath(file_path)


def read_json(file_path: PathLike) -> Any:
    with open(file_path, "r", encoding="utf-8") as handle:
        return json.load(handle)


def parse_complex(value: Any) -> complex:
    """
    Read a wave number or other complex parameter from a config value: a
    number, an [re, im] pair, a {"re", "im"} mapping or a string such as
    "1.5", "0+2j" or "2i".

    Raises:
        ValueError: If the value cannot be read as a complex number.
    """
    if isinstance(value, bool):
        raise ValueError(f"cannot read {value!r} as a complex number")
    if isinstance(value, (int, float, complex, np.number)):
        return complex(value)
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return complex(float(value[0]), float(value[1]))
    if isinstance(value, dict) and set(value) == {"re", "im"}:
        return complex(float(value["re"]), float(value["im"]))
    if isinstance(value, str):
        text = value.strip().replace(" ", "").replace("i", "j")
        try:
            return complex(text)
        except ValueError as exc:
            raise ValueError(f"cannot read {value!r} as a complex number") from exc
    raise ValueError(f"cannot read {value!r} as a complex number")
