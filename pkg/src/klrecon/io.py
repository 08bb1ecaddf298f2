"""Bit-exact binary volume container, JSON sidecars, and PNG export.

Container layout (little-endian throughout):

    bytes 0-7   magic "KLRVOL01"
    byte  8     dtype code: 0 = f32 real, 1 = c64 complex interleaved,
                2 = u8 boolean
    byte  9     ndims
    then        ndims x u32 dims
    then        payload, row-major with the last axis fastest

Gradient tables ride alongside volumes as human-readable JSON sidecars
(same basename, extension ".gtab.json"); masks carry a ".mask.json"
sidecar with their acceleration metadata. All writes go through a
temp-file-then-rename so interrupted runs never leave half-written files.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile

import numpy as np
from PIL import Image

from .core import DwiVolume, GradientTable, KSpaceVolume
from .sampling import SamplingMask

__all__ = [
    "ContainerFormatError",
    "read_container",
    "write_container",
    "sidecar_path",
    "write_gradient_sidecar",
    "read_gradient_sidecar",
    "save_dwi",
    "load_dwi",
    "save_kspace",
    "load_kspace",
    "save_mask",
    "load_mask",
    "export_png",
    "atomic_write_bytes",
    "atomic_write_text",
]

MAGIC = b"KLRVOL01"
_DTYPE_CODES = {0: np.float32, 1: np.complex64, 2: np.uint8}
_MAX_ELEMENTS = 2**32


class ContainerFormatError(ValueError):
    """Malformed container file (bad magic, dtype, dims, or payload size)."""


def atomic_write_bytes(path: str, payload: bytes) -> None:
    """Write bytes to path via a temp file in the same directory plus rename."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def _dtype_code(array: np.ndarray) -> int:
    if array.dtype == np.bool_ or array.dtype == np.uint8:
        return 2
    if np.issubdtype(array.dtype, np.complexfloating):
        return 1
    if np.issubdtype(array.dtype, np.floating):
        return 0
    raise ContainerFormatError(f"unsupported array dtype {array.dtype}")


def write_container(path: str, array: np.ndarray) -> None:
    """Serialize an array; floats store as f32, complex as c64, bool as u8."""
    array = np.asarray(array)
    code = _dtype_code(array)
    if array.size > _MAX_ELEMENTS:
        raise ContainerFormatError(
            f"dims product {array.size} exceeds the 2^32 element limit"
        )
    stored = np.ascontiguousarray(array.astype(_DTYPE_CODES[code]))
    header = MAGIC + struct.pack("<BB", code, array.ndim)
    header += struct.pack(f"<{array.ndim}I", *array.shape)
    if stored.dtype == np.complex64:
        payload = stored.view(np.float32)
    else:
        payload = stored
    if payload.dtype.byteorder not in ("<", "=", "|"):
        payload = payload.astype(payload.dtype.newbyteorder("<"))
    atomic_write_bytes(path, header + payload.tobytes())


def read_container(path: str) -> np.ndarray:
    """Read a container, validating magic, dtype, and dims before the payload."""
    with open(path, "rb") as handle:
        blob = handle.read()
    if len(blob) < len(MAGIC) + 2:
        raise ContainerFormatError(f"file too short for a container header: {path}")
    if blob[: len(MAGIC)] != MAGIC:
        raise ContainerFormatError(
            f"bad magic {blob[:len(MAGIC)]!r}, expected {MAGIC!r}"
        )
    code, ndims = struct.unpack_from("<BB", blob, len(MAGIC))
    if code not in _DTYPE_CODES:
        raise ContainerFormatError(f"unknown dtype code {code}")
    offset = len(MAGIC) + 2
    if len(blob) < offset + 4 * ndims:
        raise ContainerFormatError("header truncated before dims")
    dims = struct.unpack_from(f"<{ndims}I", blob, offset)
    offset += 4 * ndims
    n_elements = 1
    for d in dims:
        n_elements *= int(d)
    if n_elements > _MAX_ELEMENTS:
        raise ContainerFormatError(
            f"dims product {n_elements} exceeds the 2^32 element limit"
        )
    dtype = _DTYPE_CODES[code]
    expected = n_elements * np.dtype(dtype).itemsize
    actual = len(blob) - offset
    if actual != expected:
        raise ContainerFormatError(
            f"payload holds {actual} bytes but dims {dims} require {expected}"
        )
    flat = np.frombuffer(blob, dtype=np.dtype(dtype).newbyteorder("<"), count=n_elements, offset=offset)
    array = flat.reshape(dims).astype(dtype)
    if code == 2:
        return array.astype(bool)
    return array


def sidecar_path(volume_path: str, kind: str = "gtab") -> str:
    base, _ = os.path.splitext(volume_path)
    return f"{base}.{kind}.json"


def write_gradient_sidecar(volume_path: str, gtab: GradientTable) -> None:
    doc = {
        "bvalues": [float(b) for b in gtab.bvalues],
        "directions": [[float(c) for c in d] for d in gtab.directions],
    }
    atomic_write_text(sidecar_path(volume_path), json.dumps(doc))


def read_gradient_sidecar(volume_path: str) -> GradientTable:
    with open(sidecar_path(volume_path), "r", encoding="utf-8") as handle:
        doc = json.load(handle)
    return GradientTable(np.asarray(doc["directions"]), np.asarray(doc["bvalues"]))


def save_dwi(path: str, volume: DwiVolume) -> None:
    write_container(path, volume.data)
    write_gradient_sidecar(path, volume.gtab)


def load_dwi(path: str) -> DwiVolume:
    data = read_container(path).astype(np.complex128)
    return DwiVolume(data, read_gradient_sidecar(path))


def save_kspace(path: str, kspace: KSpaceVolume) -> None:
    write_container(path, kspace.data)
    write_gradient_sidecar(path, kspace.gtab)


def load_kspace(path: str) -> KSpaceVolume:
    data = read_container(path).astype(np.complex128)
    return KSpaceVolume(data, read_gradient_sidecar(path))


def save_mask(path: str, mask: SamplingMask) -> None:
    write_container(path, mask.pattern.astype(np.uint8))
    meta = {
        "af_target": mask.af_target,
        "center_radius": mask.center_radius,
        "seed": mask.seed,
        "achieved_af": mask.achieved_af,
    }
    atomic_write_text(sidecar_path(path, "mask"), json.dumps(meta))


def load_mask(path: str) -> SamplingMask:
    pattern = read_container(path)
    meta_path = sidecar_path(path, "mask")
    if os.path.exists(meta_path):
        with open(meta_path, "r", encoding="utf-8") as handle:
            meta = json.load(handle)
        return SamplingMask(
            pattern,
            float(meta["af_target"]),
            float(meta["center_radius"]),
            int(meta["seed"]),
        )
    size = pattern.size
    achieved = size / max(int(pattern.sum()), 1)
    return SamplingMask(pattern, achieved, 0.0, 0)


def export_png(slice_values: np.ndarray, path: str, window: tuple[float, float]) -> None:
    """8-bit PNG of a 2D scalar slice (grayscale) or (h, w, 3) color slice.

    Values map linearly from [lo, hi] onto [0, 255] with clamping; rounding
    is half-up so the window midpoint lands on 128.
    """
    lo, hi = window
    if lo >= hi:
        raise ValueError(f"window must satisfy lo < hi, got ({lo}, {hi})")
    values = np.asarray(slice_values, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise ValueError("slice contains NaN or Inf")
    if values.ndim == 2:
        mode = "L"
    elif values.ndim == 3 and values.shape[2] == 3:
        mode = "RGB"
    else:
        raise ValueError(f"slice must be (h, w) or (h, w, 3), got {values.shape}")
    scaled = np.clip((values - lo) / (hi - lo), 0.0, 1.0)
    pixels = np.floor(scaled * 255.0 + 0.5).astype(np.uint8)
    image = Image.fromarray(pixels, mode=mode)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".png")
    try:
        with os.fdopen(fd, "wb") as handle:
            image.save(handle, format="PNG")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
