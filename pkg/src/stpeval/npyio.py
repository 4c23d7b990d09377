"""Minimal NPY v1.0 reader/writer.

Layout written and accepted::

    \\x93NUMPY  0x01 0x00  <uint16 LE header length>  <header>  <raw C-order data>

where ``header`` is the ASCII dict literal
``{'descr': '<f4', 'fortran_order': False, 'shape': (T, C, H, W), }`` padded
with spaces and terminated by ``\\n`` so that the preamble length is a
multiple of 64. Only ``<f4``, ``<f8`` and ``|u1`` payloads are supported.
"""

from __future__ import annotations

import ast
import os
import struct
from typing import Optional

import numpy as np

from .errors import FormatError, IoError, ShapeError, UnsupportedLayout
from .tensor import SequenceTensor

MAGIC = b"\x93NUMPY"
ALIGN = 64

_DESCR = {"<f4": np.dtype("<f4"), "<f8": np.dtype("<f8"), "|u1": np.dtype("u1")}
_DESCR_OF = {np.dtype("float32"): "<f4", np.dtype("float64"): "<f8", np.dtype("uint8"): "|u1"}


def header_bytes(descr: str, shape: tuple[int, ...]) -> bytes:
    """Full preamble (magic through newline) for an array."""
    if len(shape) == 1:
        shape_txt = f"({shape[0]},)"
    else:
        shape_txt = "(" + ", ".join(str(int(s)) for s in shape) + ")"
    body = f"{{'descr': '{descr}', 'fortran_order': False, 'shape': {shape_txt}, }}"
    prefix = len(MAGIC) + 2 + 2
    total = prefix + len(body) + 1
    pad = (-total) % ALIGN
    body = body + " " * pad + "\n"
    if len(body) > 0xFFFF:
        raise FormatError("header too long for NPY v1.0")
    return MAGIC + b"\x01\x00" + struct.pack("<H", len(body)) + body.encode("latin1")


def parse_header(buf: bytes) -> tuple[np.dtype, tuple[int, ...], int]:
    """Parse a preamble; returns (dtype, shape, data offset)."""
    if len(buf) < 10 or buf[:6] != MAGIC:
        raise FormatError("bad magic string; not an NPY file")
    if buf[6:8] != b"\x01\x00":
        raise FormatError(f"unsupported NPY version {buf[6]}.{buf[7]}; only 1.0 is accepted")
    (hlen,) = struct.unpack("<H", buf[8:10])
    end = 10 + hlen
    if len(buf) < end:
        raise FormatError("truncated header")
    try:
        text = buf[10:end].decode("latin1")
    except UnicodeDecodeError as exc:  # pragma: no cover - latin1 decodes anything
        raise FormatError(str(exc)) from None
    if not text.endswith("\n"):
        raise FormatError("header is not newline-terminated")
    try:
        meta = ast.literal_eval(text.strip())
    except (SyntaxError, ValueError) as exc:
        raise FormatError(f"malformed header literal: {exc}") from None
    if not isinstance(meta, dict) or set(meta) != {"descr", "fortran_order", "shape"}:
        raise FormatError(f"header must hold exactly descr/fortran_order/shape, got {meta!r}")
    descr, fortran, shape = meta["descr"], meta["fortran_order"], meta["shape"]
    if not isinstance(fortran, bool):
        raise FormatError("fortran_order must be a bool")
    if fortran:
        raise UnsupportedLayout("Fortran-ordered arrays are not supported")
    if descr not in _DESCR:
        raise FormatError(f"unsupported descr {descr!r}; expected one of {sorted(_DESCR)}")
    if not isinstance(shape, tuple) or not all(isinstance(s, int) and s >= 0 for s in shape):
        raise FormatError(f"bad shape {shape!r}")
    return _DESCR[descr], shape, end


def read_npy(path, ndim: Optional[int] = None) -> np.ndarray:
    """Read an NPY v1.0 file into a native-endian array."""
    try:
        with open(path, "rb") as fh:
            buf = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    dtype, shape, offset = parse_header(buf)
    if ndim is not None and len(shape) != ndim:
        raise ShapeError(f"{path}: expected {ndim}-D array, header says shape {shape}")
    count = int(np.prod(shape, dtype=np.int64))
    nbytes = count * dtype.itemsize
    if len(buf) - offset != nbytes:
        raise FormatError(f"{path}: payload is {len(buf) - offset} bytes, expected {nbytes}")
    arr = np.frombuffer(buf, dtype=dtype, count=count, offset=offset).reshape(shape)
    return arr.astype(dtype.newbyteorder("="), copy=True)


def write_npy(path, arr: np.ndarray) -> None:
    arr = np.asarray(arr)
    descr = _DESCR_OF.get(arr.dtype.newbyteorder("="))
    if descr is None:
        raise FormatError(f"cannot write element type {arr.dtype}")
    payload = np.ascontiguousarray(arr, dtype=_DESCR[descr]).tobytes(order="C")
    data = header_bytes(descr, arr.shape) + payload
    tmp = f"{os.fspath(path)}.tmp{os.getpid()}"
    try:
        with open(tmp, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except OSError as exc:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise IoError(f"cannot write {path}: {exc}") from exc


def load_array(path, value_range=None, frame_interval=None) -> SequenceTensor:
    """Load a ``[T, C, H, W]`` tensor. uint8 files default to range (0, 255)."""
    return SequenceTensor(read_npy(path, ndim=4), value_range, frame_interval)


def save_array(tensor: SequenceTensor, path) -> None:
    write_npy(path, tensor.data)


def load_features(path) -> np.ndarray:
    """Load an ``n x d`` feature matrix (one embedding per row) as float64."""
    arr = read_npy(path, ndim=2).astype(np.float64)
    if not np.isfinite(arr).all():
        raise ValueError(f"{path}: features contain NaN or Inf")
    return arr
