"""
Minimal single-file NIfTI-1 support.

Only uncompressed ``.nii`` files with a uint8 or float32 payload, three
spatial dims and an optional fourth dim used as modalities. Intensity
scaling must be the identity.
"""

import logging
from pathlib import Path

import numpy as np

from kmamba.core.domain.volume import Volume
from kmamba.core.exceptions import DatasetNotFoundError, UnsupportedNiftiError

logger = logging.getLogger(__name__)

HEADER_SIZE = 348
VOX_OFFSET = 352
GZIP_MAGIC = b"\x1f\x8b"

_DATATYPES = {2: np.dtype("u1"), 16: np.dtype("f4")}


def _endianness(raw: bytes, path: str) -> str:
    for prefix in ("<", ">"):
        if int(np.frombuffer(raw, dtype=f"{prefix}i4", count=1)[0]) == HEADER_SIZE:
            return prefix
    raise UnsupportedNiftiError(path, "sizeof_hdr is not 348")


def read_nifti(path: Path) -> Volume:
    """
    Raises:
        DatasetNotFoundError: File missing
        UnsupportedNiftiError: Compressed, two-file, scaled or unsupported dtype/rank
    """
    path = Path(path)
    if not path.is_file():
        raise DatasetNotFoundError(str(path))
    raw = path.read_bytes()
    name = str(path)
    if raw[:2] == GZIP_MAGIC:
        raise UnsupportedNiftiError(name, "compressed files are not supported")
    if len(raw) < HEADER_SIZE:
        raise UnsupportedNiftiError(name, "file shorter than the header")
    e = _endianness(raw, name)

    magic = raw[344:348]
    if magic != b"n+1\x00":
        raise UnsupportedNiftiError(name, f"magic {magic!r} is not single-file NIfTI-1")

    dim = np.frombuffer(raw, dtype=f"{e}i2", count=8, offset=40)
    rank = int(dim[0])
    if rank not in (3, 4) or (rank == 4 and dim[4] < 1):
        raise UnsupportedNiftiError(name, f"rank {rank} not supported")
    datatype = int(np.frombuffer(raw, dtype=f"{e}i2", count=1, offset=70)[0])
    if datatype not in _DATATYPES:
        raise UnsupportedNiftiError(name, f"datatype code {datatype} not supported")
    pixdim = np.frombuffer(raw, dtype=f"{e}f4", count=8, offset=76)
    vox_offset = int(np.frombuffer(raw, dtype=f"{e}f4", count=1, offset=108)[0])
    slope, inter = np.frombuffer(raw, dtype=f"{e}f4", count=2, offset=112)
    if slope not in (0.0, 1.0) or inter != 0.0:
        raise UnsupportedNiftiError(name, "intensity scaling is not supported")

    h, w, d = (int(n) for n in dim[1:4])
    modalities = int(dim[4]) if rank == 4 else 1
    dtype = _DATATYPES[datatype].newbyteorder(e)
    count = h * w * d * modalities
    if len(raw) < vox_offset + count * dtype.itemsize:
        raise UnsupportedNiftiError(name, "payload shorter than the header announces")

    flat = np.frombuffer(raw, dtype=dtype, count=count, offset=vox_offset)
    data = flat.reshape((h, w, d, modalities), order="F").transpose(3, 0, 1, 2)
    spacing = tuple(float(s) if s > 0 else 1.0 for s in pixdim[1:4])
    logger.debug(f"Read NIfTI {path}: {(h, w, d)} x {modalities}, {dtype}")
    return Volume(np.ascontiguousarray(data, dtype=_DATATYPES[datatype]), spacing)  # type: ignore[arg-type]


def write_nifti(path: Path, volume: Volume) -> None:
    """Little-endian single-file NIfTI-1 with a zero extension block."""
    header = bytearray(VOX_OFFSET)
    header[0:4] = np.array([HEADER_SIZE], "<i4").tobytes()
    dims = np.zeros(8, dtype="<i2")
    rank = 4 if volume.modalities > 1 else 3
    dims[:5] = (rank, *volume.dims, volume.modalities)
    header[40:56] = dims.tobytes()
    dtype = np.dtype("<f4") if volume.dtype == "f32" else np.dtype("u1")
    header[70:72] = np.array([16 if volume.dtype == "f32" else 2], "<i2").tobytes()
    header[72:74] = np.array([dtype.itemsize * 8], "<i2").tobytes()
    pixdim = np.ones(8, dtype="<f4")
    pixdim[1:4] = volume.spacing
    header[76:108] = pixdim.tobytes()
    header[108:112] = np.array([VOX_OFFSET], "<f4").tobytes()
    header[112:116] = np.array([1.0], "<f4").tobytes()
    header[344:348] = b"n+1\x00"

    payload = volume.data.astype(dtype).transpose(1, 2, 3, 0).tobytes(order="F")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(bytes(header) + payload)
