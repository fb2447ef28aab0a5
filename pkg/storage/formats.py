"""Binary file formats: ORGD depth, PPM (P6) colour, ORPC clouds.

ORGD: magic b"ORGD", u32 width, u32 height, then width*height f32, row-major,
meters, little-endian. ORPC: magic b"ORPC", u32 count, then per point
3 f32 position, C f32 feature, 3 u16 (view, row, col), little-endian.
"""

import struct
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

from core.errors import DimensionMismatchError, MalformedDocumentError, MissingFileError
from core.geometry import DepthMap, RgbImage
from fusion.cloud import FusedCloud
from fusion.features import FEATURE_DIM

PathLike = Union[str, Path]

DEPTH_MAGIC = b"ORGD"
CLOUD_MAGIC = b"ORPC"
_HEADER = struct.Struct("<4sII")
_COUNT = struct.Struct("<4sI")


def _read_bytes(path: PathLike) -> bytes:
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(path)
    return path.read_bytes()


def encode_depth(depth: DepthMap) -> bytes:
    return _HEADER.pack(DEPTH_MAGIC, depth.width, depth.height) + depth.data.astype("<f4").tobytes()


def write_depth(path: PathLike, depth: DepthMap) -> None:
    Path(path).write_bytes(encode_depth(depth))


def read_depth(path: PathLike, expected_size: Optional[Tuple[int, int]] = None) -> DepthMap:
    """Read an ORGD file.

    Args:
        path: File to read
        expected_size: Declared (width, height) to check against

    Raises:
        MissingFileError: If the file does not exist
        MalformedDocumentError: On a bad magic number
        DimensionMismatchError: If the payload or header disagree with the expected size
    """
    raw = _read_bytes(path)
    if len(raw) < _HEADER.size:
        raise DimensionMismatchError(path, f"file has {len(raw)} bytes, shorter than the ORGD header")
    magic, width, height = _HEADER.unpack_from(raw)
    if magic != DEPTH_MAGIC:
        raise MalformedDocumentError(path, f"bad magic {magic!r}, expected {DEPTH_MAGIC!r}")
    if expected_size is not None and (width, height) != tuple(expected_size):
        raise DimensionMismatchError(
            path, f"header says {width}x{height}, sequence declares {expected_size[0]}x{expected_size[1]}"
        )
    expected = _HEADER.size + 4 * width * height
    if len(raw) != expected:
        raise DimensionMismatchError(path, f"expected {expected} bytes for {width}x{height}, found {len(raw)}")
    data = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).astype(np.float32)
    return DepthMap(width=width, height=height, data=data)


def encode_ppm(image: RgbImage) -> bytes:
    return f"P6\n{image.width} {image.height}\n255\n".encode("ascii") + image.data.astype(np.uint8).tobytes()


def write_ppm(path: PathLike, image: RgbImage) -> None:
    Path(path).write_bytes(encode_ppm(image))


def _ppm_tokens(raw: bytes, path: PathLike) -> Tuple[list, int]:
    """First four header tokens and the payload offset; '#' comments are skipped."""
    tokens = []
    i = 0
    while len(tokens) < 4:
        while i < len(raw) and raw[i : i + 1].isspace():
            i += 1
        if i < len(raw) and raw[i : i + 1] == b"#":
            while i < len(raw) and raw[i : i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        start = i
        while i < len(raw) and not raw[i : i + 1].isspace():
            i += 1
        if start == i:
            raise MalformedDocumentError(path, "truncated PPM header")
        tokens.append(raw[start:i])
    return tokens, i + 1


def read_ppm(path: PathLike, expected_size: Optional[Tuple[int, int]] = None) -> RgbImage:
    """Read a binary PPM (P6, maxval 255).

    Raises:
        MissingFileError: If the file does not exist
        MalformedDocumentError: On a bad header
        DimensionMismatchError: If the payload or header disagree with the expected size
    """
    raw = _read_bytes(path)
    tokens, offset = _ppm_tokens(raw, path)
    if tokens[0] != b"P6":
        raise MalformedDocumentError(path, f"expected P6, found {tokens[0]!r}")
    try:
        width, height, maxval = (int(t) for t in tokens[1:4])
    except ValueError as e:
        raise MalformedDocumentError(path, f"bad PPM header: {e}") from e
    if maxval != 255:
        raise MalformedDocumentError(path, f"only maxval 255 is supported, found {maxval}")
    if expected_size is not None and (width, height) != tuple(expected_size):
        raise DimensionMismatchError(
            path, f"header says {width}x{height}, sequence declares {expected_size[0]}x{expected_size[1]}"
        )
    payload = raw[offset:]
    if len(payload) != 3 * width * height:
        raise DimensionMismatchError(path, f"expected {3 * width * height} pixel bytes, found {len(payload)}")
    return RgbImage(width=width, height=height, data=np.frombuffer(payload, dtype=np.uint8).copy())


def _cloud_dtype(feature_dim: int) -> np.dtype:
    return np.dtype([("position", "<f4", (3,)), ("feature", "<f4", (feature_dim,)), ("provenance", "<u2", (3,))])


def encode_cloud(cloud: FusedCloud) -> bytes:
    records = np.zeros(len(cloud), dtype=_cloud_dtype(cloud.feature_dim))
    records["position"] = cloud.points
    records["feature"] = cloud.features
    records["provenance"] = cloud.provenance
    return _COUNT.pack(CLOUD_MAGIC, len(cloud)) + records.tobytes()


def write_cloud(path: PathLike, cloud: FusedCloud) -> None:
    Path(path).write_bytes(encode_cloud(cloud))


def read_cloud(path: PathLike, t: int = 0, feature_dim: int = FEATURE_DIM) -> FusedCloud:
    """Read an ORPC dump; features are renormalized after the f32 round trip."""
    raw = _read_bytes(path)
    if len(raw) < _COUNT.size:
        raise DimensionMismatchError(path, "file is shorter than the ORPC header")
    magic, count = _COUNT.unpack_from(raw)
    if magic != CLOUD_MAGIC:
        raise MalformedDocumentError(path, f"bad magic {magic!r}, expected {CLOUD_MAGIC!r}")
    dtype = _cloud_dtype(feature_dim)
    if len(raw) != _COUNT.size + count * dtype.itemsize:
        raise DimensionMismatchError(
            path, f"expected {count} records of {dtype.itemsize} bytes, found {len(raw) - _COUNT.size} bytes"
        )
    records = np.frombuffer(raw, dtype=dtype, offset=_COUNT.size)
    features = records["feature"].astype(np.float64)
    norms = np.linalg.norm(features, axis=1, keepdims=True)
    return FusedCloud(
        t=t,
        points=records["position"].astype(np.float64),
        features=features / np.where(norms > 0, norms, 1.0),
        provenance=records["provenance"].astype(np.int64),
    )
