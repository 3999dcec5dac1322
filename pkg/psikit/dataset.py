"""Binary dataset files.

Layout (little-endian):

    magic "PSID" | u16 version | u8 kind | u8 element type | u8 ndim
    ndim x u32 sizes | payload (row-major) | metadata JSON (UTF-8, to EOF)

Element types: f32, c64 (interleaved f32 pairs), i16. Arrays are computed in
float64/complex128 and narrowed on write; reads widen back exactly, so
read(write(x)) reproduces any x that is already storage-representable, and
write(read(f)) reproduces the bytes of f.
"""
from __future__ import annotations

import struct
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
import orjson
from pydantic import ValidationError

from .beamform import BeamformedStack
from .errors import DatasetFormatError, DimensionMismatchError
from .iqfilter import FilteredIQStack, IQStack
from .logging_utils import log_info
from .models import AcquisitionConfig, BeamformConfig, BeamGrid
from .phantom import ChannelData
from .phasemap import PhaseImage
from .tooling import atomic_write_bytes, sha256_bytes

MAGIC = b"PSID"
VERSION = 1
_HEADER = struct.Struct("<4sHBBB")

KINDS = {"channel": 0, "beamformed": 1, "iq": 2, "filtered_iq": 3, "phase_image": 4}
_KIND_NAMES = {v: k for k, v in KINDS.items()}
ELEMENTS = {"f32": 0, "c64": 1, "i16": 2}
_ELEMENT_NAMES = {v: k for k, v in ELEMENTS.items()}
_DTYPES = {"f32": np.dtype("<f4"), "c64": np.dtype("<c8"), "i16": np.dtype("<i2")}
_WIDE = {"f32": np.float64, "c64": np.complex128, "i16": np.float64}

Dataset = Union[ChannelData, BeamformedStack, IQStack, FilteredIQStack, PhaseImage]


def kind_of(obj: Dataset) -> str:
    # FilteredIQStack subclasses IQStack: test it first
    if isinstance(obj, FilteredIQStack):
        return "filtered_iq"
    if isinstance(obj, IQStack):
        return "iq"
    if isinstance(obj, ChannelData):
        return "channel"
    if isinstance(obj, BeamformedStack):
        return "beamformed"
    if isinstance(obj, PhaseImage):
        return "phase_image"
    raise TypeError(f"not a dataset object: {type(obj).__name__}")


def _dump(model: Any) -> Any:
    return None if model is None else model.model_dump(mode="json")


def _payload_and_meta(obj: Dataset) -> Tuple[np.ndarray, str, Dict[str, Any]]:
    kind = kind_of(obj)
    if kind == "channel":
        bits = obj.config.quantization_bits
        elem = "i16" if obj.quantized and bits <= 16 else "f32"
        arr = np.rint(obj.samples) if elem == "i16" else obj.samples
        return arr, elem, {"config": _dump(obj.config)}
    if kind == "beamformed":
        return obj.rf, "f32", {"config": _dump(obj.config), "grid": _dump(obj.grid),
                               "beamform": _dump(obj.beamform_config)}
    if kind == "phase_image":
        return obj.values, "f32", {"image_kind": obj.kind, "n_pairs": obj.n_pairs, "grid": _dump(obj.grid),
                                   "config": _dump(obj.config), "beamform": _dump(obj.beamform_config)}
    meta = {"config": _dump(obj.config), "grid": _dump(obj.grid), "beamform": _dump(obj.beamform_config),
            "decim": obj.decim, "demod_freq": obj.demod_freq}
    if kind == "filtered_iq":
        meta.update(lo=obj.lo, hi=obj.hi, low_frac=obj.low_frac, high_frac=obj.high_frac)
    return obj.iq, "c64", meta


def encode_dataset(obj: Dataset, extra: Optional[Dict[str, Any]] = None) -> bytes:
    arr, elem, meta = _payload_and_meta(obj)
    kind = kind_of(obj)
    payload = np.ascontiguousarray(arr).astype(_DTYPES[elem], copy=False).tobytes()
    trailer = orjson.dumps({"kind": kind, "meta": meta, "extra": extra or {}},
                           option=orjson.OPT_SORT_KEYS | orjson.OPT_SERIALIZE_NUMPY)
    head = _HEADER.pack(MAGIC, VERSION, KINDS[kind], ELEMENTS[elem], arr.ndim)
    sizes = struct.pack(f"<{arr.ndim}I", *arr.shape)
    return head + sizes + payload + trailer


def _model(cls: Any, data: Any) -> Any:
    return None if data is None else cls.model_validate(data)


def decode_dataset(blob: bytes, expect: Optional[str] = None) -> Tuple[Dataset, Dict[str, Any]]:
    """Parse dataset bytes; returns (object, extra metadata)."""
    if len(blob) < _HEADER.size:
        raise DatasetFormatError("file too short for a dataset header")
    magic, version, kind_code, elem_code, ndim = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise DatasetFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise DatasetFormatError(f"unsupported dataset version {version}")
    if kind_code not in _KIND_NAMES or elem_code not in _ELEMENT_NAMES:
        raise DatasetFormatError(f"unknown kind/element code {kind_code}/{elem_code}")
    kind, elem = _KIND_NAMES[kind_code], _ELEMENT_NAMES[elem_code]
    if expect is not None and kind != expect:
        raise DatasetFormatError(f"expected a {expect} dataset, got {kind}")
    off = _HEADER.size
    if len(blob) < off + 4 * ndim:
        raise DatasetFormatError("truncated dimension table")
    shape = struct.unpack_from(f"<{ndim}I", blob, off)
    off += 4 * ndim
    dtype = _DTYPES[elem]
    nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
    if len(blob) < off + nbytes:
        raise DatasetFormatError(f"payload truncated: need {nbytes} bytes")
    arr = np.frombuffer(blob, dtype=dtype, count=nbytes // dtype.itemsize, offset=off).reshape(shape)
    arr = arr.astype(_WIDE[elem])
    try:
        trailer = orjson.loads(blob[off + nbytes:])
        meta, extra = trailer["meta"], trailer.get("extra", {})
        if trailer.get("kind") != kind:
            raise DatasetFormatError("metadata kind does not match header")
        obj = _build(kind, arr, meta)
    except (orjson.JSONDecodeError, KeyError, TypeError, ValidationError) as exc:
        raise DatasetFormatError(f"malformed dataset metadata: {exc}") from exc
    return obj, extra


def _build(kind: str, arr: np.ndarray, meta: Dict[str, Any]) -> Dataset:
    config = _model(AcquisitionConfig, meta.get("config"))
    grid = _model(BeamGrid, meta.get("grid"))
    bf = _model(BeamformConfig, meta.get("beamform"))
    if kind == "channel":
        return ChannelData(samples=arr, config=config)
    if kind == "beamformed":
        if arr.ndim != 4 or arr.shape[0] != 4 or arr.shape[2:] != grid.shape:
            raise DimensionMismatchError(f"beamformed payload {arr.shape} does not match grid {grid.shape}")
        return BeamformedStack(rf=arr, grid=grid, config=config, beamform_config=bf)
    if kind == "phase_image":
        return PhaseImage(values=arr, kind=meta["image_kind"], n_pairs=int(meta["n_pairs"]), grid=grid,
                          config=config, beamform_config=bf)
    common = dict(iq=arr, grid=grid, config=config, beamform_config=bf, decim=int(meta["decim"]),
                  demod_freq=float(meta["demod_freq"]))
    if kind == "filtered_iq":
        return FilteredIQStack(**common, lo=int(meta["lo"]), hi=int(meta["hi"]),
                               low_frac=float(meta["low_frac"]), high_frac=float(meta["high_frac"]))
    return IQStack(**common)


def write_dataset(path: Union[str, Path], obj: Dataset, extra: Optional[Dict[str, Any]] = None) -> str:
    """Atomically write `obj`; returns the SHA-256 of the file bytes."""
    blob = encode_dataset(obj, extra)
    final = atomic_write_bytes(path, blob)
    log_info("dataset_written", path=str(final.name), kind=kind_of(obj), shape=_shape(obj))
    return sha256_bytes(blob)


def read_dataset(path: Union[str, Path], expect: Optional[str] = None) -> Tuple[Dataset, Dict[str, Any]]:
    p = Path(path)
    try:
        blob = p.read_bytes()
    except FileNotFoundError:
        raise DatasetFormatError(f"dataset not found: {p}") from None
    obj, extra = decode_dataset(blob, expect)
    log_info("dataset_read", path=p.name, kind=kind_of(obj), shape=_shape(obj))
    return obj, extra


def _shape(obj: Dataset) -> str:
    arr = {"channel": "samples", "beamformed": "rf", "iq": "iq", "filtered_iq": "iq", "phase_image": "values"}
    return "x".join(str(s) for s in getattr(obj, arr[kind_of(obj)]).shape)
