"""OVF binary tensor container: read/write with bit-exact round trips.

Layout (all little-endian):

    bytes 0-7    magic ``OVF1\\0\\0\\0\\0``
    byte  8      dtype code: 1 = float32, 2 = uint8
    byte  9      ndim: 3 (volume/mask) or 4 (channel-major tensor)
    bytes 10-13  reserved, must be zero
    next         ndim x u32 dims (channel count first when ndim = 4)
    next         3 x f32 spacing (mm per cell)
    next         payload, row-major, last axis fastest

Payload length must equal the product of dims times the scalar size
exactly; trailing or missing bytes fail the read.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import DataError
from .volumes import ChannelGrid, LogitVolume, MaskVolume, PyramidStage, Volume3D

MAGIC = b"OVF1\x00\x00\x00\x00"
DTYPE_F32 = 1
DTYPE_U8 = 2

_DTYPE_NP = {DTYPE_F32: np.dtype("<f4"), DTYPE_U8: np.dtype("u1")}


def _header_bytes(dtype_code: int, dims: tuple[int, ...], spacing) -> bytes:
    parts = [MAGIC, struct.pack("<BB4x", dtype_code, len(dims))]
    parts.append(struct.pack(f"<{len(dims)}I", *dims))
    parts.append(struct.pack("<3f", *spacing))
    return b"".join(parts)


def write_ovf(tensor, path) -> None:
    """Serialize a Volume3D, MaskVolume, LogitVolume, ChannelGrid or
    PyramidStage to ``path``. Rejects non-finite float payloads."""
    if isinstance(tensor, Volume3D):
        dtype_code, dims, spacing, data = DTYPE_F32, tensor.dims, tensor.spacing, tensor.data
    elif isinstance(tensor, MaskVolume):
        dtype_code, dims, spacing, data = DTYPE_U8, tensor.dims, tensor.spacing, tensor.data
    elif isinstance(tensor, LogitVolume):
        dtype_code = DTYPE_F32
        dims, spacing, data = (2,) + tensor.dims, tensor.spacing, tensor.data
    elif isinstance(tensor, (ChannelGrid, PyramidStage)):
        dtype_code = DTYPE_F32
        dims, spacing, data = (tensor.channels,) + tensor.dims, tensor.spacing, tensor.data
    else:
        raise TypeError(f"write_ovf() cannot serialize {type(tensor)!r}")

    if dtype_code == DTYPE_F32 and not np.all(np.isfinite(data)):
        raise DataError("non-finite payload")

    payload = np.ascontiguousarray(data, dtype=_DTYPE_NP[dtype_code]).tobytes(order="C")
    try:
        with open(path, "wb") as fh:
            fh.write(_header_bytes(dtype_code, dims, spacing))
            fh.write(payload)
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc}") from exc


def _parse(raw: bytes, path) -> tuple[int, tuple[int, ...], tuple[float, ...], np.ndarray]:
    if len(raw) < 14 or raw[:8] != MAGIC:
        raise DataError(f"{path}: bad magic")
    dtype_code, ndim = raw[8], raw[9]
    if dtype_code not in _DTYPE_NP:
        raise DataError(f"{path}: unknown dtype code {dtype_code}")
    if ndim not in (3, 4):
        raise DataError(f"{path}: unsupported ndim {ndim}")
    if raw[10:14] != b"\x00\x00\x00\x00":
        raise DataError(f"{path}: reserved header bytes are nonzero")
    offset = 14
    need = offset + 4 * ndim + 12
    if len(raw) < need:
        raise DataError(f"{path}: truncated header")
    dims = struct.unpack_from(f"<{ndim}I", raw, offset)
    offset += 4 * ndim
    spacing = struct.unpack_from("<3f", raw, offset)
    offset += 12
    if any(d == 0 for d in dims):
        raise DataError(f"{path}: zero dimension in header")
    np_dtype = _DTYPE_NP[dtype_code]
    expected = int(np.prod(dims, dtype=np.int64)) * np_dtype.itemsize
    if len(raw) - offset != expected:
        raise DataError(
            f"{path}: payload length mismatch (header implies {expected} bytes, "
            f"found {len(raw) - offset})"
        )
    data = np.frombuffer(raw[offset:], dtype=np_dtype).reshape(dims)
    return dtype_code, dims, spacing, data


def read_ovf(path):
    """Read an OVF file back into its domain type.

    (u8, ndim 3) -> MaskVolume; (f32, ndim 3) -> Volume3D;
    (f32, ndim 4) -> ChannelGrid. Other combinations are rejected.
    """
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    dtype_code, dims, spacing, data = _parse(raw, path)
    try:
        if len(dims) == 4:
            if dtype_code != DTYPE_F32:
                raise DataError(f"{path}: 4-D tensors must be float32")
            return ChannelGrid(channels=dims[0], dims=dims[1:], spacing=spacing, data=data)
        if dtype_code == DTYPE_U8:
            return MaskVolume(dims=dims, spacing=spacing, data=data)
        return Volume3D(dims=dims, spacing=spacing, data=data)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from exc


def validate_ovf(path) -> None:
    """Cheap structural check: header parses and payload length matches."""
    read_ovf(path)


def as_logits(grid: ChannelGrid, path="<memory>") -> LogitVolume:
    if grid.channels != 2:
        raise DataError(f"{path}: logit tensor must have 2 channels, found {grid.channels}")
    return LogitVolume(dims=grid.dims, spacing=grid.spacing, data=grid.data)


def as_stage(grid: ChannelGrid, stage_id: str, base_spacing, path="<memory>") -> PyramidStage:
    """Rebuild a pyramid stage from a stored grid; the downsample factor is
    the (rounded) ratio of stored spacing to the companion volume spacing."""
    ratios = [g / b for g, b in zip(grid.spacing, base_spacing)]
    factor = int(round(ratios[0]))
    if factor < 1 or any(abs(r - factor) > 0.01 * factor for r in ratios):
        raise DataError(f"{path}: stage spacing {grid.spacing} is not an integer "
                        f"multiple of volume spacing {tuple(base_spacing)}")
    return PyramidStage(
        stage_id=stage_id,
        factor=factor,
        channels=grid.channels,
        dims=grid.dims,
        spacing=grid.spacing,
        data=grid.data,
    )
