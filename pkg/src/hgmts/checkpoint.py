"""Flat binary checkpoint files: JSON manifest line + raw little-endian float64.

The manifest records the configuration (echoed verbatim for reproducibility),
its hash, and the ordered (name, shape) list of parameters; the payload is the
concatenation of each parameter's values in that order.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np

from .autodiff import ContractError

FORMAT_NAME = "hgmts-checkpoint"
FORMAT_VERSION = 1


def config_hash(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def save_checkpoint(path, named_values: dict[str, np.ndarray], config: dict) -> None:
    manifest = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "dtype": "<f8",
        "config_hash": config_hash(config),
        "config": config,
        "params": [[name, list(np.asarray(v).shape)] for name, v in named_values.items()],
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(manifest).encode())
        fh.write(b"\n")
        for v in named_values.values():
            fh.write(np.asarray(v, dtype="<f8").tobytes(order="C"))


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict, str]:
    """Returns (name -> values, config, config_hash); verifies hash and sizes."""
    with open(path, "rb") as fh:
        header = fh.readline()
        payload = fh.read()
    manifest = json.loads(header.decode())
    if manifest.get("format") != FORMAT_NAME:
        raise ContractError(f"not a {FORMAT_NAME} file: {path}")
    stored_hash = manifest["config_hash"]
    if config_hash(manifest["config"]) != stored_hash:
        raise ContractError(f"checkpoint config hash mismatch in {path}")
    values: dict[str, np.ndarray] = {}
    offset = 0
    for name, shape in manifest["params"]:
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 8
        chunk = payload[offset : offset + nbytes]
        if len(chunk) != nbytes:
            raise ContractError(f"checkpoint truncated at parameter {name}")
        values[name] = np.frombuffer(chunk, dtype="<f8").reshape(shape).copy()
        offset += nbytes
    if offset != len(payload):
        raise ContractError(f"checkpoint has {len(payload) - offset} trailing bytes")
    return values, manifest["config"], stored_hash
