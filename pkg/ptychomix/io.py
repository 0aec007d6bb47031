"""On-disk artifacts: PGA1 arrays, CSV tables, JSON documents and PNG renders.

PGA1 layout (little-endian throughout):
    b"PGA1" | u8 dtype (0 = f64 real, 1 = f64 complex re/im) | u8 ndim |
    ndim x u64 dims | row-major payload | f64 pitch in meters
"""

import csv
import hashlib
import json
import logging
import math
import struct
from pathlib import Path
from typing import Any, Iterable, List, NamedTuple, Optional, Sequence, Union

import cv2
import numpy as np

from ptychomix.exceptions import DimensionError, FormatError
from ptychomix.field import ComplexField, RealField
from ptychomix.metrics import align_global_phase
from ptychomix.scan import ScanPattern

logger = logging.getLogger(__name__)

MAGIC = b"PGA1"
DTYPE_REAL = 0
DTYPE_COMPLEX = 1
_DTYPES = {DTYPE_REAL: np.dtype("<f8"), DTYPE_COMPLEX: np.dtype("<c16")}

POSITIONS_HEADER = ["index", "x_m", "y_m"]


class Pga1Array(NamedTuple):
    data: np.ndarray
    pitch: float


def encode_pga1(array: np.ndarray, pitch: float = 1.0) -> bytes:
    array = np.asarray(array)
    if np.iscomplexobj(array):
        code = DTYPE_COMPLEX
    elif np.issubdtype(array.dtype, np.number) or array.dtype == bool:
        code = DTYPE_REAL
    else:
        raise FormatError(f"Unsupported dtype for PGA1: {array.dtype}")
    if not 1 <= array.ndim <= 255:
        raise DimensionError(f"PGA1 supports 1 to 255 dimensions, got {array.ndim}")
    header = MAGIC + struct.pack("<BB", code, array.ndim)
    header += struct.pack(f"<{array.ndim}Q", *array.shape)
    payload = np.ascontiguousarray(array, dtype=_DTYPES[code]).tobytes(order="C")
    return header + payload + struct.pack("<d", float(pitch))


def decode_pga1(blob: bytes) -> Pga1Array:
    if len(blob) < 6:
        raise FormatError(f"Truncated header: {len(blob)} bytes", offset=len(blob))
    if blob[:4] != MAGIC:
        raise FormatError(f"Bad magic {blob[:4]!r}, expected {MAGIC!r}", offset=0)
    code, ndim = struct.unpack_from("<BB", blob, 4)
    if code not in _DTYPES:
        raise FormatError(f"Unknown dtype code {code}", offset=4)
    dims_end = 6 + 8 * ndim
    if len(blob) < dims_end:
        raise FormatError(f"Truncated dimension table: need {dims_end} bytes, have {len(blob)}",
                          offset=len(blob))
    shape = struct.unpack_from(f"<{ndim}Q", blob, 6)
    dtype = _DTYPES[code]
    expected = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
    actual = len(blob) - dims_end - 8
    if actual != expected:
        raise FormatError(
            f"Payload length mismatch: expected {expected} bytes, found {max(actual, 0)}",
            offset=dims_end,
        )
    data = np.frombuffer(blob, dtype=dtype, count=expected // dtype.itemsize, offset=dims_end)
    (pitch,) = struct.unpack_from("<d", blob, dims_end + expected)
    return Pga1Array(data.reshape(shape).astype(dtype.newbyteorder("="), copy=True), pitch)


def write_pga1(path: Union[str, Path], array: np.ndarray, pitch: float = 1.0) -> Path:
    path = Path(path)
    path.write_bytes(encode_pga1(array, pitch))
    logger.debug(f"Wrote {path} {np.shape(array)}")
    return path


def read_pga1(path: Union[str, Path]) -> Pga1Array:
    return decode_pga1(Path(path).read_bytes())


def write_field(path: Union[str, Path], field: Union[ComplexField, RealField]) -> Path:
    return write_pga1(path, field.data, field.pitch)


def read_field(path: Union[str, Path]) -> Union[ComplexField, RealField]:
    """Read a 2-D PGA1 file as a ComplexField or RealField by stored dtype."""
    data, pitch = read_pga1(path)
    if data.ndim != 2:
        raise DimensionError(f"{path} holds a {data.ndim}-D array, expected a 2-D field")
    cls = ComplexField if np.iscomplexobj(data) else RealField
    return cls(data, pitch)


def sha256_file(path: Union[str, Path]) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_json(path: Union[str, Path], document: Any) -> Path:
    path = Path(path)
    path.write_text(json.dumps(document, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def read_json(path: Union[str, Path]) -> Any:
    return json.loads(Path(path).read_text())


def _json_default(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def json_number(value: float) -> Optional[float]:
    """Non-finite floats become null in JSON documents."""
    return float(value) if math.isfinite(value) else None


def write_csv(path: Union[str, Path], header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path = Path(path)
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)
    return path


def write_positions_csv(path: Union[str, Path], pattern: ScanPattern) -> Path:
    rows = ([i, repr(float(x)), repr(float(y))] for i, (x, y) in enumerate(pattern.positions))
    return write_csv(path, POSITIONS_HEADER, rows)


def read_positions_csv(path: Union[str, Path]) -> ScanPattern:
    with open(path, newline='') as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != POSITIONS_HEADER:
            raise FormatError(f"{path}: expected header {POSITIONS_HEADER}, got {header}")
        rows: List[List[str]] = [row for row in reader if row]
    rows.sort(key=lambda row: int(row[0]))
    return ScanPattern(np.array([[float(r[1]), float(r[2])] for r in rows]).reshape(-1, 2))


def complex_to_hsv(field: Union[ComplexField, np.ndarray]) -> np.ndarray:
    """HSV image: hue = phase (degrees), saturation = 1, value = amplitude / max."""
    data = np.asarray(field.data if isinstance(field, ComplexField) else field, dtype=np.complex128)
    amplitude = np.abs(data)
    peak = amplitude.max()
    value = amplitude / peak if peak > 0 else np.zeros_like(amplitude)
    hue = np.mod(np.angle(data), 2 * np.pi) / (2 * np.pi) * 360.0
    hue = np.where(hue >= 360.0, 0.0, hue)
    hsv = np.stack([hue, np.ones_like(value), value], axis=-1)
    return hsv.astype(np.float32)


def complex_to_rgb(field: Union[ComplexField, np.ndarray]) -> np.ndarray:
    """8-bit RGB render of a complex field."""
    rgb = cv2.cvtColor(complex_to_hsv(field), cv2.COLOR_HSV2RGB)
    return np.clip(np.round(rgb * 255.0), 0, 255).astype(np.uint8)


def encode_complex_png(field: Union[ComplexField, np.ndarray]) -> bytes:
    ok, png = cv2.imencode('.png', cv2.cvtColor(complex_to_rgb(field), cv2.COLOR_RGB2BGR))
    if not ok:
        raise FormatError("PNG encoding failed")
    return png.tobytes()


def render_complex_png(field: ComplexField, path: Union[str, Path],
                       reference: Optional[ComplexField] = None) -> Path:
    """Write an amplitude/phase PNG; optionally align global phase to `reference`."""
    if reference is not None:
        field = align_global_phase(field, reference)
    path = Path(path)
    path.write_bytes(encode_complex_png(field))
    logger.debug(f"Rendered {path}")
    return path
