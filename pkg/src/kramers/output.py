"""Deterministic CSV / PGM writers and the thread-pool helper.

All numeric output is formatted with 9 significant digits, '.' decimal
separator and ',' field separator, so identical inputs give byte-identical
files on any platform.  The KRAMERS_THREADS environment variable caps
parallelism (default 1 = serial); results are assembled in input order
either way.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

VERSION = "0.1.0"
STAMP = f"# kramers {VERSION}"


def max_workers() -> int:
    raw = os.environ.get("KRAMERS_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        n = 1
    return max(1, n)


def parallel_map(fn, items):
    """Order-preserving map, threaded when KRAMERS_THREADS > 1."""
    items = list(items)
    n = max_workers()
    if n <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def format_number(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.9g}"


def csv_text(header: list[str], rows, stamp: bool = True) -> str:
    lines = []
    if stamp:
        lines.append(STAMP)
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(format_number(v) if not isinstance(v, str) else v for v in row))
    return "\n".join(lines) + "\n"


def write_csv(path, header: list[str], rows, stamp: bool = True) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(csv_text(header, rows, stamp))


def pgm_bytes(amplitudes: np.ndarray, stamp: bool = True) -> bytes:
    """8-bit binary PGM of a signed map; 0 maps to mid-gray (128).

    Rows of the array become image rows; values are scaled symmetrically by
    the maximum absolute amplitude, so holes (negative) render dark and
    antiholes (positive) render bright.
    """
    a = np.asarray(amplitudes, dtype=float)
    if a.ndim != 2:
        raise ValueError("expected a 2-D map")
    peak = np.abs(a).max()
    if peak == 0:
        pixels = np.full(a.shape, 128, dtype=np.uint8)
    else:
        pixels = np.clip(np.rint(128.0 + 127.0 * a / peak), 0, 255).astype(np.uint8)
    header = "P5\n"
    if stamp:
        header += STAMP + "\n"
    header += f"{a.shape[1]} {a.shape[0]}\n255\n"
    return header.encode("ascii") + pixels.tobytes()


def write_pgm(path, amplitudes: np.ndarray, stamp: bool = True) -> None:
    with open(path, "wb") as fh:
        fh.write(pgm_bytes(amplitudes, stamp))
