"""Artifact serialization: ASCII PGM masks, CSV tables, raw binary fields.

All floats are serialized with 17 significant digits so that identical runs
produce bit-identical text artifacts.
"""

from __future__ import annotations

import struct

import numpy as np

from .fields import GridDomain, GridField

__all__ = ["fmt", "write_pgm", "write_csv", "write_field_csv",
           "read_field_csv", "write_field_raw", "read_field_raw"]


def fmt(x) -> str:
    """17-significant-digit decimal rendering of a float."""
    return format(float(x), ".17g")


def write_pgm(path, mask: np.ndarray) -> None:
    """ASCII PGM (P2, maxval 255) with mask cells at 255.

    2D masks are indexed (x, y); image rows run top to bottom, so row j of
    the file is the y index ny-1-j.  1D masks become a one-row image.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim == 1:
        img = mask[None, :]
    elif mask.ndim == 2:
        img = mask.T[::-1, :]
    else:
        raise ValueError("PGM export supports 1D and 2D masks")
    rows, cols = img.shape
    with open(path, "w") as fh:
        fh.write(f"P2\n{cols} {rows}\n255\n")
        for r in range(rows):
            fh.write(" ".join("255" if v else "0" for v in img[r]) + "\n")


def write_csv(path, header, rows) -> None:
    """CSV with formatted floats; non-floats are written verbatim."""
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            cells = [fmt(v) if isinstance(v, (int, float, np.floating)) else str(v)
                     for v in row]
            fh.write(",".join(cells) + "\n")


def write_field_csv(path, field: GridField) -> None:
    """Node table: coordinates then components (x, y, u1, u2 in 2D)."""
    pts = field.domain.centers()
    vals = field.values.reshape(len(pts), -1)
    n = field.domain.dimension
    header = [f"x{i+1}" for i in range(n)] + [f"u{i+1}" for i in range(vals.shape[1])]
    rows = (list(p) + list(v) for p, v in zip(pts, vals))
    write_csv(path, header, rows)


def read_field_csv(path, domain: GridDomain) -> GridField:
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    n = domain.dimension
    vals = data[:, n:]
    return GridField(domain, vals.reshape(domain.shape + (vals.shape[1],)))


def write_field_raw(path, field: GridField) -> None:
    """Raw binary field: little-endian float64 header then C-order values.

    Header layout: n, lo_1..lo_n, hi_1..hi_n, spacing, count_1..count_n,
    ncomp (counts and ncomp stored as floats).
    """
    dom = field.domain
    n = dom.dimension
    header = [float(n), *map(float, dom.lo), *map(float, dom.hi),
              float(dom.spacing), *map(float, dom.shape), float(field.ncomp)]
    with open(path, "wb") as fh:
        fh.write(struct.pack(f"<{len(header)}d", *header))
        fh.write(field.values.astype("<f8").tobytes(order="C"))


def read_field_raw(path) -> GridField:
    with open(path, "rb") as fh:
        raw = fh.read()
    n = int(struct.unpack_from("<d", raw, 0)[0])
    head_len = 1 + 2 * n + 1 + n + 1
    header = struct.unpack_from(f"<{head_len}d", raw, 0)
    lo = header[1:1 + n]
    spacing = header[1 + 2 * n]
    shape = tuple(int(c) for c in header[2 + 2 * n:2 + 3 * n])
    ncomp = int(header[-1])
    dom = GridDomain(tuple(lo), spacing, shape)
    vals = np.frombuffer(raw[8 * head_len:], dtype="<f8").reshape(shape + (ncomp,))
    return GridField(dom, vals.copy())
