"""Plain-text and binary file formats shared by the modules.

* portable graymaps (binary P5, 8 bit)
* CSV tables with ``#`` comment headers
* flat ``key = value`` files whose keys carry a unit suffix
"""

from __future__ import annotations

import hashlib
import os
from pathlib import Path

import numpy as np


class FormatError(ValueError):
    """Malformed input file. ``line`` is 1-based when known."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}" if where else message)


def to_graymap(values, lo=None, hi=None) -> np.ndarray:
    """Linear map of ``values`` onto 0..255 (min -> 0, max -> 255)."""
    v = np.asarray(values, dtype=float)
    lo = np.nanmin(v) if lo is None else lo
    hi = np.nanmax(v) if hi is None else hi
    if hi <= lo:
        return np.zeros(v.shape, dtype=np.uint8)
    scaled = np.round((v - lo) / (hi - lo) * 255.0)
    return np.clip(scaled, 0, 255).astype(np.uint8)


def write_pgm(path, image, comment=None) -> Path:
    img = np.asarray(image)
    if img.dtype != np.uint8 or img.ndim != 2:
        raise ValueError("P5 export needs a 2D uint8 array")
    rows, cols = img.shape
    header = b"P5\n"
    if comment:
        for line in str(comment).splitlines():
            header += b"# " + line.encode("ascii", "replace") + b"\n"
    header += f"{cols} {rows}\n255\n".encode()
    path = Path(path)
    path.write_bytes(header + np.ascontiguousarray(img).tobytes())
    return path


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    if tokens[0] != b"P5":
        raise FormatError("not a binary graymap", path)
    cols, rows, maxval = (int(t) for t in tokens[1:])
    if maxval != 255:
        raise FormatError("only 8-bit graymaps are supported", path)
    pixels = np.frombuffer(data, dtype=np.uint8, count=rows * cols, offset=pos + 1)
    return pixels.reshape(rows, cols).copy()


def write_csv(path, columns: dict, header_lines=()) -> Path:
    """Write equal-length columns. Floats use ``repr`` so reads are bit exact."""
    names = list(columns)
    cols = [np.asarray(columns[n]).ravel() for n in names]
    n = len(cols[0]) if cols else 0
    if any(len(c) != n for c in cols):
        raise ValueError("columns differ in length")
    path = Path(path)
    with open(path, "w") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write(",".join(names) + "\n")
        for row in zip(*cols):
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    return path


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def read_csv(path):
    """Return (header_lines, column_names, float array of shape (rows, cols))."""
    headers, names, rows = [], None, []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                headers.append(line[1:].strip())
                continue
            if names is None:
                names = [c.strip() for c in line.split(",")]
                continue
            parts = line.split(",")
            if len(parts) != len(names):
                raise FormatError(f"expected {len(names)} fields, got {len(parts)}", path, lineno)
            try:
                rows.append([float(p) for p in parts])
            except ValueError as exc:
                raise FormatError(str(exc), path, lineno) from None
    if names is None:
        raise FormatError("missing column header", path)
    data = np.array(rows, dtype=float).reshape(-1, len(names))
    return headers, names, data


def write_xyz_csv(path, x, y, values, value_name="value", units="") -> Path:
    """(x, y, value) rows for a 2D map sampled on axes ``x`` (cols), ``y`` (rows)."""
    xx, yy = np.meshgrid(x, y)
    return write_csv(path, {"x_m": xx, "y_m": yy, value_name: values},
                     header_lines=[f"units: x_m=m, y_m=m, {value_name}={units}"])


def format_kv(mapping: dict, comments=()) -> str:
    lines = [f"# {c}" for c in comments]
    for key, value in mapping.items():
        if isinstance(value, bool):
            text = "true" if value else "false"
        elif isinstance(value, (int, np.integer)):
            text = str(int(value))
        elif isinstance(value, (float, np.floating)):
            text = repr(float(value))
        elif isinstance(value, (list, tuple, np.ndarray)):
            text = "[" + ", ".join(v if isinstance(v, str) else _fmt(v) for v in value) + "]"
        else:
            text = str(value)
        lines.append(f"{key} = {text}")
    return "\n".join(lines) + "\n"


def write_kv(path, mapping: dict, comments=()) -> Path:
    path = Path(path)
    path.write_text(format_kv(mapping, comments))
    return path


def parse_kv_value(text: str):
    text = text.strip()
    if text in ("true", "false"):
        return text == "true"
    if text.startswith("[") and text.endswith("]"):
        inner = text[1:-1].strip()
        return [parse_kv_value(p) for p in inner.split(",")] if inner else []
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def parse_kv(text: str, source=None) -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise FormatError("expected 'key = value'", source, lineno)
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise FormatError("empty key", source, lineno)
        if key in out:
            raise FormatError(f"duplicate key {key!r}", source, lineno)
        out[key] = parse_kv_value(value)
    return out


def read_kv(path) -> dict:
    return parse_kv(Path(path).read_text(), source=path)


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def manifest_line(inputs=()) -> str:
    """``manifest`` header line listing sha256 digests of the input files."""
    parts = [f"{os.path.basename(str(p))}:{sha256_file(p)[:16]}" for p in inputs]
    return "manifest inputs=" + (";".join(parts) if parts else "none")

