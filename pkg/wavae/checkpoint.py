"""
Binary checkpoint format.

Layout, little-endian::

    8 bytes   magic  b"WAVAECKP"
    uint32    format version
    uint32    header length n
    n bytes   UTF-8 JSON header (sorted keys): tensor names and shapes in
              block order, decoder head, discriminator layout, run config
    ...       one float64 block per tensor, in header order
"""

import json
import logging
import struct
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from . import numerics as nx
from .mutual_info import Discriminator
from .vae import ModelParams

logger = logging.getLogger(__name__)

MAGIC = b"WAVAECKP"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<8sII")


class CheckpointError(ValueError):
    """Checkpoint file is unreadable or does not match the requested model."""


def _blocks(params: ModelParams, disc: Optional[Discriminator]) -> List[Tuple[str, np.ndarray]]:
    blocks = [(name, tensor.data) for name, tensor in params.named_tensors().items()]
    if disc is not None:
        blocks += [(name, tensor.data) for name, tensor in disc.named_tensors().items()]
    return blocks


def save(
    path: Union[str, Path],
    params: ModelParams,
    disc: Optional[Discriminator] = None,
    config: Optional[Dict[str, Any]] = None,
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    blocks = _blocks(params, disc)
    header = {
        "tensors": [[name, list(data.shape)] for name, data in blocks],
        "sigmoid_output": bool(params.sigmoid_output),
        "dims": {"input_dim": params.input_dim, "hidden": params.hidden, "zdim": params.zdim},
        "discriminator": None if disc is None else {"layers": disc.layers, "hidden": disc.hidden, "separate": disc.separate},
        "config": config or {},
    }
    encoded = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_PREFIX.pack(MAGIC, FORMAT_VERSION, len(encoded)))
        f.write(encoded)
        for _, data in blocks:
            f.write(np.ascontiguousarray(data, dtype="<f8").tobytes())
    logger.info(f"Saved checkpoint to {path} ({len(blocks)} tensors)")
    return path


def read_header(path: Union[str, Path]) -> Dict[str, Any]:
    header, _ = _read(Path(path))
    return header


def _read(path: Path) -> Tuple[Dict[str, Any], bytes]:
    if not path.exists():
        raise FileNotFoundError(f"Checkpoint not found: {path}")
    raw = path.read_bytes()
    if len(raw) < _PREFIX.size:
        raise CheckpointError(f"{path}: truncated checkpoint header")
    magic, version, length = _PREFIX.unpack_from(raw)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic {magic!r})")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: format version {version}, this build reads version {FORMAT_VERSION}")
    start = _PREFIX.size
    try:
        header = json.loads(raw[start : start + length].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header ({exc})") from exc
    return header, raw[start + length :]


def _check_dims(header: Dict[str, Any], expected: Dict[str, int]) -> None:
    stored = header.get("dims", {})
    for key, want in expected.items():
        if want is not None and stored.get(key) != want:
            raise CheckpointError(f"Checkpoint {key} is {stored.get(key)} but the config asks for {key}={want}")


def load(
    path: Union[str, Path],
    input_dim: Optional[int] = None,
    hidden: Optional[int] = None,
    zdim: Optional[int] = None,
) -> Tuple[ModelParams, Optional[Discriminator], Dict[str, Any]]:
    """
    Read a checkpoint back into live tensors.

    Any of ``input_dim``, ``hidden`` and ``zdim`` that is given must match
    the stored model. Returns (params, discriminator or None, stored config).
    """
    path = Path(path)
    header, payload = _read(path)
    _check_dims(header, {"input_dim": input_dim, "hidden": hidden, "zdim": zdim})

    tensors: Dict[str, np.ndarray] = {}
    cursor = 0
    for name, shape in header["tensors"]:
        count = int(np.prod(shape)) if shape else 1
        width = count * 8
        if cursor + width > len(payload):
            raise CheckpointError(f"{path}: payload ends inside tensor {name}")
        tensors[name] = np.frombuffer(payload, dtype="<f8", count=count, offset=cursor).reshape(shape).astype(np.float64)
        cursor += width
    if cursor != len(payload):
        raise CheckpointError(f"{path}: {len(payload) - cursor} trailing bytes after the last tensor")

    missing = [name for name in ModelParams.ORDER if name not in tensors]
    if missing:
        raise CheckpointError(f"{path}: missing model tensor(s) {', '.join(missing)}")
    params = ModelParams(
        **{name: nx.parameter(tensors[name], name=name) for name in ModelParams.ORDER},
        sigmoid_output=bool(header["sigmoid_output"]),
    )

    disc = None
    layout = header.get("discriminator")
    if layout:
        stacks = []
        for role in ("raw", "aug")[: 2 if layout["separate"] else 1]:
            stack = []
            for i in range(layout["layers"]):
                w_name, b_name = f"disc_{role}_w{i}", f"disc_{role}_b{i}"
                if w_name not in tensors or b_name not in tensors:
                    raise CheckpointError(f"{path}: missing discriminator tensor {w_name}")
                stack.append((nx.parameter(tensors[w_name], name=w_name), nx.parameter(tensors[b_name], name=b_name)))
            stacks.append(stack)
        disc = Discriminator(stacks)

    logger.info(f"Loaded checkpoint {path} (input_dim={params.input_dim}, zdim={params.zdim})")
    return params, disc, header.get("config", {})
