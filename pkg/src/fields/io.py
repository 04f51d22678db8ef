"""
File formats for fields.

PGM: 8-bit binary (P5), values affinely mapped to 0-255. The original range and
grid spacing are recorded in a header comment so images can be decoded back to
their physical scale (up to 8-bit quantisation).

Text matrix: one grid row per line in full double precision. Vector fields are
written as their channels stacked along the first axis. A leading comment line
records spacing, dims and channel count, which makes the round-trip lossless.
"""

import io
import os
import re
from typing import Optional, Union

import numpy as np
from PIL import Image

from src.fields.grid import GridShape, ScalarField, VectorField


_PGM_META = re.compile(
    rb"#\s*vmin=(?P<vmin>\S+)\s+vmax=(?P<vmax>\S+)(?:\s+spacing=(?P<spacing>\S+))?"
)
_TXT_META = re.compile(
    r"spacing=(?P<spacing>\S+)\s+dims=(?P<dims>\d)\s+channels=(?P<channels>\d)"
)

TEXT_SUFFIXES = (".txt", ".dat", ".mat")


def is_text_path(path: str) -> bool:
    return os.path.splitext(path)[1].lower() in TEXT_SUFFIXES


def _ensure_parent(path: str) -> None:
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)


# ============================================================
# PGM
# ============================================================

def write_pgm(u: ScalarField, path: str, vmin: Optional[float] = None, vmax: Optional[float] = None) -> None:
    """
    Write a scalar field as an 8-bit binary PGM.

    The display range defaults to the field's own min/max. A 1-D field is
    written as a single-row image.
    """
    values = u.values if u.shape.dims == 2 else u.values.T
    lo = float(values.min()) if vmin is None else float(vmin)
    hi = float(values.max()) if vmax is None else float(vmax)

    if hi > lo:
        scaled = np.clip((values - lo) / (hi - lo), 0.0, 1.0)
    else:
        scaled = np.zeros_like(values)
    pixels = np.rint(scaled * 255.0).astype(np.uint8)

    # Pillow writes "P5\n<w> <h>\n255\n"; the range comment goes after the magic number.
    buffer = io.BytesIO()
    Image.fromarray(pixels).save(buffer, format="PPM")
    encoded = buffer.getvalue()
    comment = f"# vmin={lo!r} vmax={hi!r} spacing={u.shape.spacing!r}\n".encode("ascii")

    _ensure_parent(path)
    with open(path, "wb") as handle:
        handle.write(encoded[:3] + comment + encoded[3:])


def read_pgm(path: str, spacing: Optional[float] = None) -> ScalarField:
    """
    Read a PGM written by ``write_pgm`` (or any 8-bit greyscale PGM).

    Without a range comment the pixels are mapped to [0, 1].
    """
    with open(path, "rb") as handle:
        raw = handle.read()

    try:
        image = Image.open(io.BytesIO(raw))
        image.load()
    except Exception as e:
        raise OSError(f"Cannot decode PGM file {path}: {e}") from e
    if image.mode not in ("L", "I", "I;16", "I;16B"):
        raise OSError(f"{path}: expected a greyscale PGM, got mode {image.mode}")

    pixels = np.asarray(image, dtype=float)
    max_value = 255.0 if image.mode == "L" else float(max(pixels.max(), 1.0))

    vmin, vmax, stored_spacing = 0.0, 1.0, 1.0
    match = _PGM_META.search(raw[:512])
    if match:
        vmin = float(match.group("vmin"))
        vmax = float(match.group("vmax"))
        if match.group("spacing"):
            stored_spacing = float(match.group("spacing"))

    values = vmin + (vmax - vmin) * pixels / max_value
    h = stored_spacing if spacing is None else spacing
    if values.shape[0] == 1:
        return ScalarField.from_array(values[0], spacing=h)
    return ScalarField.from_array(values, spacing=h)


# ============================================================
# TEXT MATRIX
# ============================================================

def write_text(field: Union[ScalarField, VectorField], path: str) -> None:
    """Write a scalar or vector field as a full-precision text matrix."""
    shape = field.shape
    if isinstance(field, VectorField):
        channels = shape.dims
        matrix = field.values.reshape(channels * shape.n1, shape.n2)
    else:
        channels = 0
        matrix = field.values

    header = f"spacing={shape.spacing!r} dims={shape.dims} channels={channels}"
    _ensure_parent(path)
    np.savetxt(path, matrix, fmt="%.17g", header=header, comments="# ")


def read_text(path: str, spacing: Optional[float] = None) -> Union[ScalarField, VectorField]:
    """Read a text matrix written by ``write_text``; headerless files are read as scalar images."""
    with open(path, "r", encoding="utf-8") as handle:
        first = handle.readline()

    try:
        matrix = np.loadtxt(path, comments="#", ndmin=2)
    except ValueError as e:
        raise OSError(f"Cannot parse text matrix {path}: {e}") from e

    match = _TXT_META.search(first)
    stored_spacing, dims, channels = 1.0, (2 if matrix.shape[1] > 1 else 1), 0
    if match:
        stored_spacing = float(match.group("spacing"))
        dims = int(match.group("dims"))
        channels = int(match.group("channels"))
    h = stored_spacing if spacing is None else spacing

    if channels == 0:
        if dims == 1:
            return ScalarField.from_array(matrix[:, 0], spacing=h)
        return ScalarField.from_array(matrix, spacing=h)

    n1 = matrix.shape[0] // channels
    grid = GridShape(dims, n1, matrix.shape[1], h)
    return VectorField(grid, matrix.reshape(channels, n1, matrix.shape[1]))


# ============================================================
# DISPATCH
# ============================================================

def save_field(field: Union[ScalarField, VectorField], path: str) -> None:
    """Write by suffix: text formats keep full precision, anything else becomes PGM."""
    if is_text_path(path):
        write_text(field, path)
    elif isinstance(field, ScalarField):
        write_pgm(field, path)
    else:
        raise ValueError(f"Vector fields can only be written as text, got {path}")


def load_scalar(path: str, spacing: Optional[float] = None) -> ScalarField:
    if not os.path.isfile(path):
        raise OSError(f"Input file not found: {path}")
    field = read_text(path, spacing) if is_text_path(path) else read_pgm(path, spacing)
    if not isinstance(field, ScalarField):
        raise ValueError(f"{path} holds a vector field, expected a scalar image")
    return field
