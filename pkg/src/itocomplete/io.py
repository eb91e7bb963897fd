"""Binary matrix container, CSV export and PGM rasters."""
from __future__ import annotations

import csv
import io
import struct
from pathlib import Path

import numpy as np

MAGIC = b"ITOM"
VERSION = 1
KINDS = {"dtn": 0, "albedo": 1, "field": 2, "block": 3}
_KIND_NAMES = {v: k for k, v in KINDS.items()}
_HEADER = struct.Struct("<4sIIQQ")


def encode_itom(m: np.ndarray, kind: str = "dtn") -> bytes:
    """Header {magic, u32 version, u32 kind, u64 rows, u64 cols} then row-major little-endian f64."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2:
        raise ValueError("container holds 2-d arrays only")
    if kind not in KINDS:
        raise ValueError(f"unknown container kind {kind!r}")
    return _HEADER.pack(MAGIC, VERSION, KINDS[kind], *m.shape) + np.ascontiguousarray(m, dtype="<f8").tobytes()


def decode_itom(data: bytes) -> tuple[np.ndarray, str]:
    if len(data) < _HEADER.size:
        raise ValueError("truncated ITOM header")
    magic, version, kind, rows, cols = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ValueError("not an ITOM file")
    if version != VERSION:
        raise ValueError(f"unsupported ITOM version {version}")
    if kind not in _KIND_NAMES:
        raise ValueError(f"unknown kind code {kind}")
    need = _HEADER.size + 8 * rows * cols
    if len(data) != need:
        raise ValueError(f"payload size {len(data) - _HEADER.size} does not match {rows}x{cols}")
    m = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).reshape(rows, cols).astype(float)
    return m, _KIND_NAMES[kind]


def write_itom(path, m: np.ndarray, kind: str = "dtn") -> Path:
    path = Path(path)
    path.write_bytes(encode_itom(m, kind))
    return path


def read_itom(path) -> tuple[np.ndarray, str]:
    return decode_itom(Path(path).read_bytes())


def matrix_to_csv(m: np.ndarray) -> str:
    """Lossless CSV: shortest repr that round-trips each double."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for row in np.asarray(m, dtype=float):
        w.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def matrix_from_csv(text: str) -> np.ndarray:
    rows = [r for r in csv.reader(io.StringIO(text)) if r]
    return np.array(rows, dtype=float)


def write_text(path, text: str) -> Path:
    path = Path(path)
    path.write_text(text, encoding="utf-8", newline="\n")
    return path


def to_pgm(img: np.ndarray, vmin: float | None = None, vmax: float | None = None, flip: bool = True) -> bytes:
    """8-bit binary PGM; with ``flip`` the first array row is drawn at the bottom (y up)."""
    a = np.asarray(img, dtype=float)
    lo = np.nanmin(a) if vmin is None else vmin
    hi = np.nanmax(a) if vmax is None else vmax
    scale = 255.0 / (hi - lo) if hi > lo else 0.0
    g = np.clip(np.round((a - lo) * scale), 0, 255).astype(np.uint8)
    if flip:
        g = g[::-1]
    h, w = g.shape
    return f"P5\n{w} {h}\n255\n".encode() + g.tobytes()


def write_pgm(path, img: np.ndarray, upscale: int = 1, **kw) -> Path:
    a = np.asarray(img, dtype=float)
    if upscale > 1:
        a = np.kron(a, np.ones((upscale, upscale)))
    path = Path(path)
    path.write_bytes(to_pgm(a, **kw))
    return path

