"""Plain-text and binary serialization of grids, form factors and matrices.

Dense binary matrix layout: two little-endian ``uint64`` (rows, cols) followed by
``rows * cols`` little-endian ``complex128`` values (real, imag pairs) in row-major order.
"""

from __future__ import annotations

import io as _io
from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse as sps

from .modes import FormFactor, ModeGrid

TABLE_COLUMNS = ("k", "w", "omega", "re_f", "im_f")
_HEADER_DTYPE = np.dtype("<u8")
_DATA_DTYPE = np.dtype("<c16")


def format_number(x: float) -> str:
    """Shortest-stable text for a float; used for every emitted number."""
    return "%.17g" % float(x)


def write_grid_table(path, grid: ModeGrid, f: FormFactor | None = None) -> None:
    """One row per node: ``k w omega re_f im_f``; the declared tail and mass floor go in the header."""
    f = FormFactor.zeros(grid) if f is None else f
    f.check_on(grid)
    tail = "none" if f.tail is None else f"{format_number(f.tail[0])} {format_number(f.tail[1])}"
    lines = [
        f"# dispersion {grid.dispersion}",
        f"# mass_floor {format_number(grid.mass_floor)}",
        f"# tail {tail}",
        f"# label {f.label}",
        " ".join(TABLE_COLUMNS),
    ]
    for row in zip(grid.nodes, grid.weights, grid.omega, f.values.real, f.values.imag):
        lines.append(" ".join(format_number(x) for x in row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_grid_table(path) -> tuple[ModeGrid, FormFactor]:
    meta, rows = {}, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition(" ")
            meta[key] = value
        elif line.strip() and not line.startswith(TABLE_COLUMNS[0]):
            rows.append([float(x) for x in line.split()])
    data = np.array(rows, dtype=float).reshape(-1, len(TABLE_COLUMNS))
    mass = float(meta["mass_floor"]) if "mass_floor" in meta else None
    grid = ModeGrid(data[:, 0], data[:, 1], data[:, 2], mass, meta.get("dispersion", "custom"))
    tail = None if meta.get("tail", "none") == "none" else tuple(float(x) for x in meta["tail"].split())
    return grid, FormFactor(data[:, 3] + 1j * data[:, 4], tail, meta.get("label", ""))


def write_matrix_binary(path, X) -> None:
    X = np.asarray(X.toarray() if sps.issparse(X) else X, dtype=complex)
    if X.ndim != 2:
        raise ValueError("expected a matrix")
    with open(path, "wb") as fh:
        fh.write(np.array(X.shape, dtype=_HEADER_DTYPE).tobytes())
        fh.write(np.ascontiguousarray(X, dtype=_DATA_DTYPE).tobytes())


def read_matrix_binary(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    rows, cols = np.frombuffer(raw[:16], dtype=_HEADER_DTYPE)
    data = np.frombuffer(raw[16:], dtype=_DATA_DTYPE)
    if data.size != rows * cols:
        raise ValueError(f"expected {rows * cols} entries, found {data.size}")
    return data.reshape(int(rows), int(cols)).astype(complex)


def write_matrix_market(path, X) -> None:
    """Coordinate MatrixMarket text (complex general), via scipy."""
    X = sps.coo_matrix(X.toarray() if sps.issparse(X) else np.asarray(X, dtype=complex))
    buf = _io.BytesIO()
    scipy.io.mmwrite(buf, X.astype(complex), precision=17)
    Path(path).write_bytes(buf.getvalue())


def read_matrix_market(path) -> np.ndarray:
    m = scipy.io.mmread(str(path))
    return np.asarray(m.toarray() if sps.issparse(m) else m, dtype=complex)


def complex_text(z) -> str:
    z = complex(z)
    return f"{format_number(z.real)}{'+' if z.imag >= 0 or np.isnan(z.imag) else '-'}{format_number(abs(z.imag))}j"


def parse_complex(x) -> complex:
    """Accept numbers or strings such as ``"-1+5j"``."""
    if isinstance(x, str):
        return complex(x.replace(" ", ""))
    return complex(x)


def matrix_text(X) -> list:
    return [[complex_text(v) for v in row] for row in np.asarray(X)]


def parse_matrix(rows) -> np.ndarray:
    return np.array([[parse_complex(v) for v in row] for row in rows], dtype=complex)
