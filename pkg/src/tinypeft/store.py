"""Bit-exact binary persistence.

Archive layout (all integers little-endian, text UTF-8):

    magic "PFWA" | version u32 | manifest_len u64 | manifest JSON |
    payload | checksum u64

The manifest holds {tensors: [{name, shape, dtype, offset, length}], meta}
with tensors sorted by name and offsets assigned in that order, so a
save/load/save cycle is byte-identical. The checksum is the first 8 bytes
of SHA-256 over everything before it and is verified before any tensor is
materialized. Writes go to a temp file renamed into place.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile

import numpy as np

from .errors import DataError
from .model import CausalLM, CausalLMConfig, init_model
from .peft import (
    BottleneckAdapterConfig,
    LoraConfig,
    attach_bottleneck,
    attach_lora,
)
from .rng import RngState

MAGIC = b"PFWA"
VERSION = 1

_DTYPES = {"f32": np.float32, "u8": np.uint8, "i64": np.int64}


def _checksum(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()[:8]


def save_archive(path: str, tensors: dict[str, np.ndarray], meta: dict | None = None):
    """Write tensors + JSON metadata atomically."""
    entries = []
    payload = bytearray()
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name])
        if arr.dtype == np.float32:
            dtype = "f32"
        elif arr.dtype == np.uint8:
            dtype = "u8"
        elif arr.dtype in (np.int64, np.dtype("int64")):
            dtype = "i64"
        else:
            arr = arr.astype(np.float32)
            dtype = "f32"
        raw = arr.tobytes()
        entries.append({
            "name": name, "shape": list(arr.shape), "dtype": dtype,
            "offset": len(payload), "length": len(raw),
        })
        payload.extend(raw)
    manifest = json.dumps(
        {"tensors": entries, "meta": meta or {}},
        sort_keys=True, separators=(",", ":"), ensure_ascii=False,
    ).encode("utf-8")
    body = MAGIC + struct.pack("<I", VERSION) + struct.pack("<Q", len(manifest))
    body += manifest + bytes(payload)
    body += _checksum(body)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(body)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def load_archive(path: str) -> tuple[dict[str, np.ndarray], dict]:
    """Read and verify an archive; returns (tensors, meta)."""
    with open(path, "rb") as f:
        body = f.read()
    if len(body) < 24 or body[:4] != MAGIC:
        raise DataError(f"{path}: not a PFWA archive")
    if _checksum(body[:-8]) != body[-8:]:
        raise DataError(f"{path}: checksum mismatch, archive is corrupted")
    (version,) = struct.unpack_from("<I", body, 4)
    if version != VERSION:
        raise DataError(f"{path}: unsupported archive version {version}")
    (mlen,) = struct.unpack_from("<Q", body, 8)
    mstart = 16
    try:
        manifest = json.loads(body[mstart : mstart + mlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise DataError(f"{path}: bad manifest: {e}")
    pstart = mstart + mlen
    pend = len(body) - 8
    tensors: dict[str, np.ndarray] = {}
    for ent in manifest["tensors"]:
        for key in ("name", "shape", "dtype", "offset", "length"):
            if key not in ent:
                raise DataError(f"{path}: manifest entry missing field {key!r}")
        off, ln = ent["offset"], ent["length"]
        if off < 0 or pstart + off + ln > pend:
            raise DataError(f"{path}: tensor {ent['name']!r} out of bounds")
        if ent["dtype"] not in _DTYPES:
            raise DataError(f"{path}: unknown dtype {ent['dtype']!r}")
        arr = np.frombuffer(body, dtype=_DTYPES[ent["dtype"]],
                            count=ln // np.dtype(_DTYPES[ent["dtype"]]).itemsize,
                            offset=pstart + off)
        tensors[ent["name"]] = arr.reshape(ent["shape"]).copy()
    return tensors, manifest.get("meta", {})


# -- model / adapter archives ------------------------------------------------


def base_fingerprint(model: CausalLM) -> str:
    """Hash of the base config plus all base weight bytes."""
    h = hashlib.sha256()
    h.update(json.dumps(model.config.to_dict(), sort_keys=True).encode())
    for name in sorted(model.params):
        if ".lora_" in name or "_adapter." in name:
            continue
        h.update(name.encode())
        h.update(np.ascontiguousarray(model.params[name].data).tobytes())
    return h.hexdigest()


def save_model(model: CausalLM, path: str, extra_meta: dict | None = None):
    """Persist a plain model (base weights only; adapters are saved apart)."""
    tensors = {n: p.data for n, p in model.params.items()
               if ".lora_" not in n and "_adapter." not in n}
    meta = {"kind": "model", "model_config": model.config.to_dict()}
    meta.update(extra_meta or {})
    save_archive(path, tensors, meta)


def load_model(path: str) -> CausalLM:
    tensors, meta = load_archive(path)
    if meta.get("kind") != "model":
        raise DataError(f"{path}: archive is not a model (kind={meta.get('kind')!r})")
    config = CausalLMConfig.from_dict(meta["model_config"])
    model = init_model(config, RngState(0))
    model.load_state_tensors(tensors)
    return model


def save_adapter(model: CausalLM, path: str):
    """Adapter-only archive with the base fingerprint embedded."""
    meta: dict = {"kind": "adapter", "base_fingerprint": base_fingerprint(model)}
    tensors: dict[str, np.ndarray] = {}
    if model.lora_set is not None:
        meta["peft_method"] = "lora"
        meta["lora_config"] = model.lora_set.config.to_dict()
        for a in model.lora_set.adapters.values():
            tensors[a.A.name] = a.A.data
            tensors[a.B.name] = a.B.data
    elif getattr(model, "bottleneck_config", None) is not None:
        meta["peft_method"] = "adapter"
        meta["bottleneck_config"] = model.bottleneck_config.to_dict()
        for n, p in model.params.items():
            if "_adapter." in n:
                tensors[n] = p.data
    else:
        raise DataError("model has no adapters to save")
    save_archive(path, tensors, meta)


def load_adapter(base: CausalLM, path: str) -> CausalLM:
    """Reattach an adapter archive onto its base model.

    The stored fingerprint must match the base exactly; nothing is mutated
    on mismatch.
    """
    tensors, meta = load_archive(path)
    if meta.get("kind") != "adapter":
        raise DataError(f"{path}: archive is not an adapter (kind={meta.get('kind')!r})")
    fp = base_fingerprint(base)
    if meta["base_fingerprint"] != fp:
        raise DataError(
            f"{path}: adapter was trained on a different base "
            f"(archive {meta['base_fingerprint'][:16]}..., model {fp[:16]}...)"
        )
    if meta.get("peft_method") == "lora":
        cfg = LoraConfig.from_dict(meta["lora_config"])
        attach_lora(base, cfg, RngState(0))
        for name, arr in tensors.items():
            base.params[name].data = arr.astype(np.float32).copy()
    elif meta.get("peft_method") == "adapter":
        cfg = BottleneckAdapterConfig.from_dict(meta["bottleneck_config"])
        attach_bottleneck(base, cfg, RngState(0))
        for name, arr in tensors.items():
            base.params[name].data = arr.astype(np.float32).copy()
    else:
        raise DataError(f"{path}: unknown peft_method {meta.get('peft_method')!r}")
    return base
