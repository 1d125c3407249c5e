"""Grid types for label maps, binary masks and float maps, plus file I/O.

All grids are row-major with the origin at the top-left corner and ``y``
growing downward.  Arrays held by the types are read-only copies, so
instances can be shared freely between workers.

File formats
------------
png16
    Single-channel 16-bit PNG, pixel value = instance id.
lmap
    ``b"LMAP"``, little-endian ``u32`` height and width, then
    ``height * width`` little-endian ``u32`` ids.
FMAP
    ``b"FMAP"``, little-endian ``u32`` height, width and channels, then
    ``height * width * channels`` little-endian ``float32`` values,
    channel-interleaved.
"""

from __future__ import annotations

import io
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Union

import numpy as np
from PIL import Image

PathLike = Union[str, Path]

LMAP_MAGIC = b"LMAP"
FMAP_MAGIC = b"FMAP"
PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


class FormatError(ValueError):
    """Raised when a file does not follow its declared format.

    ``offset`` is the byte offset at which decoding failed.
    """

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class Point(NamedTuple):
    x: int
    y: int


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class LabelMap:
    """H x W grid of instance ids; 0 is background."""

    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 2:
            raise ValueError(f"label map must be 2-D, got shape {labels.shape}")
        if labels.shape[0] == 0 or labels.shape[1] == 0:
            raise ValueError("label map dimensions must be positive")
        if labels.dtype.kind not in "iub":
            raise ValueError(f"label ids must be integers, got {labels.dtype}")
        if labels.size and labels.min() < 0:
            raise ValueError("label ids must be non-negative")
        object.__setattr__(self, "labels", _frozen(labels.astype(np.int64)))

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape

    def __getitem__(self, point: Point) -> int:
        x, y = point
        if not (0 <= x < self.width and 0 <= y < self.height):
            raise IndexError(f"{tuple(point)} outside {self.width}x{self.height} grid")
        return int(self.labels[y, x])

    def __eq__(self, other):
        if not isinstance(other, LabelMap):
            return NotImplemented
        return np.array_equal(self.labels, other.labels)

    def instance_ids(self) -> np.ndarray:
        ids = np.unique(self.labels)
        return ids[ids != 0]

    def foreground(self) -> "BinaryMask":
        return BinaryMask(self.labels != 0)


@dataclass(frozen=True, eq=False)
class BinaryMask:
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {values.shape}")
        if values.dtype != bool:
            if not np.isin(values, (0, 1)).all():
                raise ValueError("binary mask values must be 0 or 1")
        object.__setattr__(self, "values", _frozen(values.astype(bool)))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def __getitem__(self, point: Point) -> bool:
        x, y = point
        if not (0 <= x < self.width and 0 <= y < self.height):
            raise IndexError(f"{tuple(point)} outside {self.width}x{self.height} grid")
        return bool(self.values[y, x])

    def __eq__(self, other):
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return np.array_equal(self.values, other.values)


@dataclass(frozen=True, eq=False)
class FloatMap:
    """H x W grid of finite float32 values."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim != 2:
            raise ValueError(f"float map must be 2-D, got shape {values.shape}")
        values = values.astype(np.float32)
        if not np.isfinite(values).all():
            raise ValueError("float map contains NaN or infinite values")
        object.__setattr__(self, "values", _frozen(values))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def __getitem__(self, point: Point) -> float:
        x, y = point
        if not (0 <= x < self.width and 0 <= y < self.height):
            raise IndexError(f"{tuple(point)} outside {self.width}x{self.height} grid")
        return float(self.values[y, x])

    def __eq__(self, other):
        if not isinstance(other, FloatMap):
            return NotImplemented
        return np.array_equal(self.values, other.values)


@dataclass(frozen=True, eq=False)
class FloatMapPair:
    """Horizontal and vertical maps of identical shape."""

    horizontal: FloatMap
    vertical: FloatMap

    def __post_init__(self):
        h, v = self.horizontal, self.vertical
        if not isinstance(h, FloatMap):
            object.__setattr__(self, "horizontal", h := FloatMap(h))
        if not isinstance(v, FloatMap):
            object.__setattr__(self, "vertical", v := FloatMap(v))
        if h.shape != v.shape:
            raise ValueError(f"pair shapes differ: {h.shape} vs {v.shape}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.horizontal.shape

    def stacked(self) -> np.ndarray:
        """(H, W, 2) float32 array, channel 0 horizontal."""
        return np.stack([self.horizontal.values, self.vertical.values], axis=-1)

    def __eq__(self, other):
        if not isinstance(other, FloatMapPair):
            return NotImplemented
        return self.horizontal == other.horizontal and self.vertical == other.vertical


def instances_of(label_map: LabelMap) -> dict[int, np.ndarray]:
    """Map each instance id to the ascending raveled indices of its pixels."""
    flat = label_map.labels.ravel()
    fg = np.flatnonzero(flat)
    if fg.size == 0:
        return {}
    ids = flat[fg]
    order = np.argsort(ids, kind="stable")
    ids_sorted = ids[order]
    uniq, starts = np.unique(ids_sorted, return_index=True)
    groups = np.split(fg[order], starts[1:])
    return {int(i): g for i, g in zip(uniq, groups)}


# --- label map I/O ---------------------------------------------------------


def _format_from_path(path: PathLike) -> str:
    suffix = Path(path).suffix.lower()
    if suffix == ".png":
        return "png16"
    if suffix == ".lmap":
        return "lmap"
    raise ValueError(f"cannot infer label format from {str(path)!r}")


def _check_png_chunks(data: bytes) -> None:
    """Walk the PNG chunk list so structural damage reports an offset."""
    if data[:8] != PNG_SIGNATURE:
        raise FormatError("missing PNG signature", 0)
    pos = 8
    while True:
        if pos + 8 > len(data):
            raise FormatError("truncated PNG chunk header", pos)
        length, ctype = struct.unpack(">I4s", data[pos : pos + 8])
        end = pos + 12 + length
        if end > len(data):
            raise FormatError(f"truncated PNG chunk {ctype!r}", pos)
        body = data[pos + 4 : pos + 8 + length]
        (crc,) = struct.unpack(">I", data[pos + 8 + length : end])
        if zlib.crc32(body) & 0xFFFFFFFF != crc:
            raise FormatError(f"bad CRC in PNG chunk {ctype!r}", pos)
        if ctype == b"IEND":
            return
        pos = end


def _read_png16(data: bytes) -> np.ndarray:
    _check_png_chunks(data)
    try:
        with Image.open(io.BytesIO(data)) as im:
            if im.mode not in ("I;16", "I;16B", "I", "L", "1"):
                raise FormatError(f"expected single-channel PNG, got mode {im.mode}", 8)
            arr = np.array(im)
    except FormatError:
        raise
    except Exception as exc:  # Pillow raises a zoo of exception types
        raise FormatError(f"undecodable PNG: {exc}", 8) from exc
    return arr.astype(np.int64)


def _read_lmap(data: bytes) -> np.ndarray:
    if data[:4] != LMAP_MAGIC:
        raise FormatError("bad LMAP magic", 0)
    if len(data) < 12:
        raise FormatError("truncated LMAP header", len(data))
    height, width = struct.unpack("<II", data[4:12])
    expected = 12 + 4 * height * width
    if len(data) < expected:
        raise FormatError("truncated LMAP payload", len(data))
    if len(data) > expected:
        raise FormatError("trailing bytes after LMAP payload", expected)
    if height == 0 or width == 0:
        raise ValueError("LMAP dimensions must be positive")
    ids = np.frombuffer(data, dtype="<u4", count=height * width, offset=12)
    return ids.reshape(height, width).astype(np.int64)


def read_label_map(path: PathLike, format: str | None = None) -> LabelMap:
    fmt = format or _format_from_path(path)
    data = Path(path).read_bytes()
    if fmt == "png16":
        labels = _read_png16(data)
    elif fmt == "lmap":
        labels = _read_lmap(data)
    else:
        raise ValueError(f"unknown label format {fmt!r}")
    if labels.size == 0:
        raise ValueError("label map dimensions must be positive")
    return LabelMap(labels)


def encode_label_map(label_map: LabelMap, format: str) -> bytes:
    labels = label_map.labels
    if format == "png16":
        if labels.max() >= 65536:
            raise OverflowError(f"instance id {int(labels.max())} does not fit in png16")
        buf = io.BytesIO()
        Image.fromarray(labels.astype(np.uint16)).save(buf, format="PNG")
        return buf.getvalue()
    if format == "lmap":
        if labels.max() >= 2**32:
            raise OverflowError(f"instance id {int(labels.max())} does not fit in lmap")
        header = LMAP_MAGIC + struct.pack("<II", *labels.shape)
        return header + labels.astype("<u4").tobytes()
    raise ValueError(f"unknown label format {format!r}")


def write_label_map(label_map: LabelMap, path: PathLike, format: str | None = None) -> None:
    fmt = format or _format_from_path(path)
    Path(path).write_bytes(encode_label_map(label_map, fmt))


# --- float map I/O ---------------------------------------------------------


def _decode_fmap(data: bytes) -> np.ndarray:
    if data[:4] != FMAP_MAGIC:
        raise FormatError("bad FMAP magic", 0)
    if len(data) < 16:
        raise FormatError("truncated FMAP header", len(data))
    height, width, channels = struct.unpack("<III", data[4:16])
    count = height * width * channels
    expected = 16 + 4 * count
    if len(data) < expected:
        raise FormatError("truncated FMAP payload", len(data))
    if len(data) > expected:
        raise FormatError("trailing bytes after FMAP payload", expected)
    values = np.frombuffer(data, dtype="<f4", count=count, offset=16)
    return values.reshape(height, width, channels).astype(np.float32)


def read_fmap(path: PathLike) -> np.ndarray:
    """Raw (H, W, C) float32 contents of an FMAP file."""
    return _decode_fmap(Path(path).read_bytes())


def read_float_map(path: PathLike) -> FloatMap:
    arr = read_fmap(path)
    if arr.shape[2] != 1:
        raise FormatError(f"expected 1 channel, found {arr.shape[2]}", 12)
    return FloatMap(arr[:, :, 0])


def read_float_map_pair(path: PathLike) -> FloatMapPair:
    arr = read_fmap(path)
    if arr.shape[2] != 2:
        raise FormatError(f"expected 2 channels, found {arr.shape[2]}", 12)
    return FloatMapPair(FloatMap(arr[:, :, 0]), FloatMap(arr[:, :, 1]))


def encode_fmap(arr: np.ndarray) -> bytes:
    """FMAP bytes for an (H, W) or (H, W, C) array."""
    arr = np.asarray(arr)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    h, w, c = arr.shape
    return FMAP_MAGIC + struct.pack("<III", h, w, c) + np.ascontiguousarray(arr, dtype="<f4").tobytes()


def encode_float_map(fmap: FloatMap | FloatMapPair) -> bytes:
    if isinstance(fmap, FloatMapPair):
        return encode_fmap(fmap.stacked())
    return encode_fmap(fmap.values)


def write_float_map(fmap: FloatMap | FloatMapPair, path: PathLike) -> None:
    Path(path).write_bytes(encode_float_map(fmap))
