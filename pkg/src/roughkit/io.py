"""CSV serialisation of paths and lifted paths (17 significant digits)."""
from __future__ import annotations

import io as _io
import itertools

import numpy as np

from . import __version__
from .path import LiftedPath, PiecewiseLinearPath

__all__ = ["path_header", "lifted_header", "write_csv", "read_csv", "to_csv_text"]

FMT = "%.17g"


def _idx(parts, d: int) -> str:
    sep = "" if d < 10 else "."
    return sep.join(str(i + 1) for i in parts)


def path_header(d: int) -> list[str]:
    return ["t"] + [f"x{i + 1}" for i in range(d)]


def lifted_header(d: int, level: int) -> list[str]:
    cols = ["t"]
    for k in range(1, level + 1):
        cols += [f"g{k}_" + _idx(ix, d) for ix in itertools.product(range(d), repeat=k)]
    return cols


def _table(obj) -> tuple[list[str], np.ndarray]:
    if isinstance(obj, PiecewiseLinearPath):
        return path_header(obj.dim), np.column_stack([obj.times, obj.values])
    if isinstance(obj, LiftedPath):
        n = len(obj)
        blocks = [obj.times[:, None]] + [c.reshape(n, -1) for c in obj.components() if c is not None]
        return lifted_header(obj.dim, obj.level), np.hstack(blocks)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def to_csv_text(obj, comments: list[str] | None = None) -> str:
    cols, data = _table(obj)
    buf = _io.StringIO()
    buf.write(f"# roughkit {__version__}\n")
    for c in comments or ():
        buf.write(f"# {c}\n")
    buf.write(",".join(cols) + "\n")
    np.savetxt(buf, data, fmt=FMT, delimiter=",")
    return buf.getvalue()


def write_csv(obj, filename, comments: list[str] | None = None) -> None:
    with open(filename, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(to_csv_text(obj, comments))


def read_csv(filename) -> tuple[PiecewiseLinearPath | LiftedPath, list[str]]:
    """Read a path or lifted path; returns the object and its comment lines."""
    comments, header, rows = [], None, []
    with open(filename, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                comments.append(line[1:].strip())
            elif header is None:
                header = [c.strip() for c in line.split(",")]
            else:
                rows.append([float(v) for v in line.split(",")])
    if header is None or header[0] != "t":
        raise ValueError(f"{filename}: missing 't,...' header")
    data = np.array(rows, dtype=np.float64).reshape(-1, len(header))
    t = data[:, 0]
    if all(c.startswith("x") for c in header[1:]):
        return PiecewiseLinearPath(t, data[:, 1:]), comments
    d = sum(c.startswith("g1_") for c in header)
    level = max(int(c[1]) for c in header[1:])
    if header != lifted_header(d, level):
        raise ValueError(f"{filename}: unrecognised lifted-path columns")
    n = len(t)
    comps, pos = [], 1
    for k in range(1, level + 1):
        comps.append(data[:, pos:pos + d**k].reshape((n,) + (d,) * k))
        pos += d**k
    if level == 2:
        comps.append(None)
    return LiftedPath.from_components(t, comps), comments
