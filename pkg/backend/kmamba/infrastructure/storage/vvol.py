"""
VVOL1 volume container.

Layout: a plain-text header, one ``key value...`` per line, closed by an
``end`` line, followed by the raw little-endian payload in C order
``[modalities, H, W, D]``::

    VVOL1
    dims 64 64 64
    spacing 1.0 1.0 1.0
    dtype u8
    modalities 1
    end
    <payload bytes>
"""

import logging
from pathlib import Path
from typing import Optional

import numpy as np

from kmamba.core.domain.volume import Volume, numpy_dtype
from kmamba.core.exceptions import (
    BadMagicError,
    DatasetNotFoundError,
    DtypeMismatchError,
    HeaderFormatError,
    TruncatedPayloadError,
)
from kmamba.core.interfaces.storage import IVolumeStore

logger = logging.getLogger(__name__)

MAGIC = "VVOL1"
END = "end"
SUPPORTED_DTYPES = ("f32", "u8")
MAX_HEADER_LINES = 16


def encode_header(volume: Volume) -> bytes:
    lines = [
        MAGIC,
        "dims " + " ".join(str(n) for n in volume.dims),
        "spacing " + " ".join(repr(float(s)) for s in volume.spacing),
        f"dtype {volume.dtype}",
        f"modalities {volume.modalities}",
        END,
    ]
    return ("\n".join(lines) + "\n").encode("ascii")


def _parse_header(raw: bytes, path: str) -> tuple[dict[str, list[str]], int]:
    """Header fields and the payload offset."""
    first_newline = raw.find(b"\n")
    first = raw[:first_newline if first_newline >= 0 else 16].decode("ascii", "replace")
    if first.strip() != MAGIC:
        raise BadMagicError(path, first)

    fields: dict[str, list[str]] = {}
    offset = first_newline + 1
    for _ in range(MAX_HEADER_LINES):
        end = raw.find(b"\n", offset)
        if end < 0:
            raise HeaderFormatError(path, raw[offset:offset + 64].decode("ascii", "replace"),
                                    "header not terminated")
        line = raw[offset:end].decode("ascii", "replace").strip()
        offset = end + 1
        if line == END:
            return fields, offset
        if not line:
            continue
        key, *values = line.split()
        fields[key] = values
    raise HeaderFormatError(path, "", f"no '{END}' line within {MAX_HEADER_LINES} lines")


class VvolStore(IVolumeStore):
    """Reads and writes ``.vvol`` files."""

    def write(self, path: Path, volume: Volume) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = volume.data.astype(numpy_dtype(volume.dtype), copy=False).tobytes(order="C")
        path.write_bytes(encode_header(volume) + payload)
        logger.debug(f"Wrote {path} ({volume.dims}, {volume.dtype}, {len(payload)} bytes)")

    def read(self, path: Path, expected_dtype: Optional[str] = None) -> Volume:
        path = Path(path)
        if not path.is_file():
            raise DatasetNotFoundError(str(path))
        raw = path.read_bytes()
        fields, offset = _parse_header(raw, str(path))

        try:
            dims = tuple(int(v) for v in fields["dims"])
            spacing = tuple(float(v) for v in fields["spacing"])
            dtype = fields["dtype"][0]
            modalities = int(fields["modalities"][0])
        except (KeyError, IndexError, ValueError) as e:
            raise HeaderFormatError(str(path), str(fields), f"missing or invalid field: {e}") from e
        if len(dims) != 3 or len(spacing) != 3 or min(dims) < 1 or modalities < 1:
            raise HeaderFormatError(str(path), str(fields), "dims/spacing need 3 positive values")

        if dtype not in SUPPORTED_DTYPES:
            raise DtypeMismatchError(str(path), "|".join(SUPPORTED_DTYPES), dtype)
        if expected_dtype is not None and dtype != expected_dtype:
            raise DtypeMismatchError(str(path), expected_dtype, dtype)

        np_dtype = numpy_dtype(dtype)
        expected = modalities * int(np.prod(dims)) * np_dtype.itemsize
        actual = len(raw) - offset
        if actual != expected:
            raise TruncatedPayloadError(str(path), expected, actual)

        data = np.frombuffer(raw, dtype=np_dtype, offset=offset).reshape(modalities, *dims)
        return Volume(data.astype(np_dtype.newbyteorder("="), copy=True), spacing)  # type: ignore[arg-type]


def write_volume(path: Path, volume: Volume) -> None:
    VvolStore().write(path, volume)


def read_volume(path: Path, expected_dtype: Optional[str] = None) -> Volume:
    return VvolStore().read(path, expected_dtype)


# =============================================================================
# PGM slice export
# =============================================================================

def slice_to_uint8(volume: Volume, axis: int = 2, index: Optional[int] = None,
                   modality: int = 0) -> np.ndarray:
    """One 2-D slice, linearly rescaled to 0..255."""
    data = volume.data[modality]
    index = data.shape[axis] // 2 if index is None else index
    plane = np.take(data, index, axis=axis).astype(np.float64)
    lo, hi = float(plane.min()), float(plane.max())
    if hi > lo:
        plane = (plane - lo) / (hi - lo) * 255.0
    else:
        plane = np.zeros_like(plane)
    return np.round(plane).astype(np.uint8)


def export_pgm(path: Path, volume: Volume, axis: int = 2, index: Optional[int] = None,
               modality: int = 0) -> None:
    """Write a binary (P5) PGM of one slice."""
    image = slice_to_uint8(volume, axis, index, modality)
    rows, cols = image.shape
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(f"P5\n{cols} {rows}\n255\n".encode("ascii") + image.tobytes())
