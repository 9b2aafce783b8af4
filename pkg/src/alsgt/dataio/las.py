"""Minimal LAS 1.2-1.4 reader/writer for point formats 0-3 (XYZ payload)."""
from __future__ import annotations

import datetime
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..cloud.pointcloud import Label, PointCloud, as_points
from ..errors import BadMagic, TruncatedFile, UnsupportedFormat

# fixed part shared by every 1.x header, up to and including the min/max block
_BASE = struct.Struct("<4sHH16sBB32s32sHHHLLBHL5L3d3d6d")
_WAVEFORM = struct.Struct("<Q")
_EXT14 = struct.Struct("<QLQ15Q")
HEADER_SIZE = {2: _BASE.size, 3: _BASE.size + _WAVEFORM.size,
               4: _BASE.size + _WAVEFORM.size + _EXT14.size}
RECORD_SIZE = {0: 20, 1: 28, 2: 26, 3: 34}

_ASPRS = {int(Label.GROUND): 2, int(Label.ROOF): 6, int(Label.FACADE): 6, int(Label.OTHER): 1}


@dataclass(frozen=True)
class LasHeader:
    version: tuple
    point_format: int
    record_length: int
    point_count: int
    offset_to_points: int
    scale: np.ndarray
    offset: np.ndarray
    bounds_min: np.ndarray
    bounds_max: np.ndarray


def _record_dtype(fmt):
    fields = [("X", "<i4"), ("Y", "<i4"), ("Z", "<i4"), ("intensity", "<u2"), ("flags", "u1"),
              ("classification", "u1"), ("scan_angle", "i1"), ("user_data", "u1"),
              ("point_source", "<u2")]
    if fmt in (1, 3):
        fields.append(("gps_time", "<f8"))
    if fmt in (2, 3):
        fields += [("red", "<u2"), ("green", "<u2"), ("blue", "<u2")]
    return np.dtype(fields)


def read_las_header(data):
    if len(data) < 4 or data[:4] != b"LASF":
        raise BadMagic("not a LAS file (missing 'LASF' signature)")
    if len(data) < _BASE.size:
        raise TruncatedFile("header shorter than the LAS 1.2 layout")
    f = _BASE.unpack_from(data, 0)
    major, minor = f[4], f[5]
    if major != 1 or minor not in HEADER_SIZE:
        raise UnsupportedFormat(f"LAS version {major}.{minor}")
    fmt_raw, rec_len, legacy_count = f[13], f[14], f[15]
    fmt = fmt_raw & 0x3F
    if fmt_raw & 0x80 or fmt not in RECORD_SIZE:
        raise UnsupportedFormat(fmt_raw)
    if rec_len < RECORD_SIZE[fmt]:
        raise UnsupportedFormat(fmt)
    header_size, offset_to_points = f[10], f[11]
    count = legacy_count
    if minor == 4:
        if len(data) < HEADER_SIZE[4]:
            raise TruncatedFile("header shorter than the LAS 1.4 layout")
        ext = _EXT14.unpack_from(data, _BASE.size + _WAVEFORM.size)
        count = ext[2] if ext[2] else legacy_count
    scale = np.array(f[21:24])
    offset = np.array(f[24:27])
    mx = f[27:33]
    if header_size > offset_to_points:
        raise TruncatedFile("point data offset inside the header")
    return LasHeader((major, minor), fmt, rec_len, int(count), int(offset_to_points), scale, offset,
                     np.array([mx[1], mx[3], mx[5]]), np.array([mx[0], mx[2], mx[4]]))


def read_las_points(path):
    """XYZ of every point record, scaled and offset into file coordinates."""
    data = Path(path).read_bytes()
    h = read_las_header(data)
    need = h.offset_to_points + h.point_count * h.record_length
    if len(data) < need:
        raise TruncatedFile(f"expected {need} bytes, file has {len(data)}")
    dt = np.dtype({"names": ["X", "Y", "Z"], "formats": ["<i4"] * 3, "offsets": [0, 4, 8],
                   "itemsize": h.record_length})
    rec = np.frombuffer(data, dtype=dt, count=h.point_count, offset=h.offset_to_points)
    xyz = np.column_stack([rec["X"], rec["Y"], rec["Z"]]).astype(float) * h.scale + h.offset
    return PointCloud(xyz.reshape(-1, 3))


def write_las(path, cloud, scale=0.001, offset=None, version=(1, 2), point_format=0):
    """Write points as LAS; labels (if any) go to the ASPRS classification byte."""
    minor = int(version[1])
    if version[0] != 1 or minor not in HEADER_SIZE:
        raise UnsupportedFormat(f"LAS version {version[0]}.{version[1]}")
    if point_format not in RECORD_SIZE:
        raise UnsupportedFormat(point_format)
    labels = getattr(cloud, "labels", None)
    pts = cloud.points if isinstance(cloud, PointCloud) else as_points(cloud)
    scale = np.broadcast_to(np.asarray(scale, dtype=float), (3,)).copy()
    if offset is None:
        offset = np.floor(pts.min(axis=0)) if len(pts) else np.zeros(3)
    offset = np.broadcast_to(np.asarray(offset, dtype=float), (3,)).copy()
    q = np.round((pts - offset) / scale)
    if len(q) and (np.abs(q).max() >= 2 ** 31):
        raise ValueError("coordinates overflow 32-bit integers at this scale/offset")
    dtype = _record_dtype(point_format)
    rec = np.zeros(len(pts), dtype=dtype)
    rec["X"], rec["Y"], rec["Z"] = q[:, 0], q[:, 1], q[:, 2]
    rec["flags"] = 0b00001001  # return 1 of 1
    if labels is not None:
        rec["classification"] = np.vectorize(lambda v: _ASPRS.get(int(v), 1), otypes=[np.uint8])(labels) \
            if len(labels) else 0
    else:
        rec["classification"] = 1
    hsize = HEADER_SIZE[minor]
    if len(pts):
        lo, hi = pts.min(axis=0), pts.max(axis=0)
    else:
        lo = hi = np.zeros(3)
    n = len(pts)
    legacy = n if n < 2 ** 32 else 0
    by_return = [legacy, 0, 0, 0, 0]
    today = datetime.date(2020, 1, 1)  # fixed so output bytes are reproducible
    head = _BASE.pack(b"LASF", 0, 0, bytes(16), 1, minor, b"alsgt".ljust(32, b"\0"),
                      b"alsgt las writer".ljust(32, b"\0"), today.timetuple().tm_yday, today.year,
                      hsize, hsize, 0, point_format, dtype.itemsize, legacy, *by_return,
                      *scale, *offset, hi[0], lo[0], hi[1], lo[1], hi[2], lo[2])
    if minor >= 3:
        head += _WAVEFORM.pack(0)
    if minor == 4:
        head += _EXT14.pack(0, 0, n, n, *([0] * 14))
    with open(path, "wb") as fh:
        fh.write(head)
        fh.write(rec.tobytes())
    return Path(path)
