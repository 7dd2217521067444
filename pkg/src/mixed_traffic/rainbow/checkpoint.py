"""Binary checkpoint container.

Layout: 8-byte magic, little-endian uint32 manifest length, UTF-8 JSON
manifest, then every parameter array as little-endian float32 in manifest
order.  Weights are therefore rounded to single precision on save.
"""
from __future__ import annotations

import json
import os
import struct

import numpy as np

from ..errors import CheckpointError
from .network import NetworkParams
from .train import Checkpoint, TrainConfig

MAGIC = b"MXTRCKP\x00"
FORMAT_VERSION = 1


def manifest(ckpt: Checkpoint) -> dict:
    p = ckpt.params
    return {
        "format_version": FORMAT_VERSION,
        "config": ckpt.config.to_dict(),
        "obs_dim": ckpt.obs_dim,
        "n_actions": p.n_actions,
        "n_atoms": p.n_atoms,
        "layers": [[name, list(shape)] for name, shape in p.shapes()],
        "seed": ckpt.config.seed,
        "grad_steps": ckpt.grad_steps,
        "env_steps": ckpt.env_steps,
    }


def dumps(ckpt: Checkpoint) -> bytes:
    head = json.dumps(manifest(ckpt), sort_keys=True, separators=(",", ":")).encode()
    body = b"".join(np.ascontiguousarray(a, dtype="<f4").tobytes()
                    for a in ckpt.params.arrays.values())
    return MAGIC + struct.pack("<I", len(head)) + head + body


def save(ckpt: Checkpoint, path) -> None:
    tmp = os.fspath(path) + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(dumps(ckpt))
    os.replace(tmp, path)


def loads(blob: bytes, obs_dim: int | None = None, n_actions: int | None = None) -> Checkpoint:
    if blob[:8] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    if len(blob) < 12:
        raise CheckpointError("truncated header")
    (n,) = struct.unpack("<I", blob[8:12])
    try:
        man = json.loads(blob[12:12 + n].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt manifest: {exc}") from None
    if man.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported format version {man.get('format_version')!r}")
    if obs_dim is not None and man["obs_dim"] != obs_dim:
        raise CheckpointError(f"checkpoint expects observations of length {man['obs_dim']}, "
                              f"got {obs_dim}")
    if n_actions is not None and man["n_actions"] != n_actions:
        raise CheckpointError(f"checkpoint has {man['n_actions']} actions, expected {n_actions}")
    _check_layers(man)

    arrays = {}
    offset = 12 + n
    for name, shape in man["layers"]:
        count = int(np.prod(shape))
        end = offset + 4 * count
        if end > len(blob):
            raise CheckpointError(f"truncated parameter data at {name}")
        arrays[name] = np.frombuffer(blob, dtype="<f4", count=count, offset=offset) \
            .astype(np.float64).reshape(shape)
        offset = end
    if offset != len(blob):
        raise CheckpointError(f"{len(blob) - offset} trailing bytes after parameters")
    config = TrainConfig.from_dict(man["config"])
    params = NetworkParams(arrays, man["n_actions"], man["n_atoms"])
    return Checkpoint(params, config, man["obs_dim"], man["grad_steps"], man["env_steps"])


def load(path, obs_dim: int | None = None, n_actions: int | None = None) -> Checkpoint:
    with open(path, "rb") as fh:
        return loads(fh.read(), obs_dim, n_actions)


def _check_layers(man: dict):
    """Layer shapes must chain from obs_dim through the trunk into both heads."""
    shapes = dict((name, tuple(s)) for name, s in man["layers"])
    width = man["obs_dim"]
    i = 0
    while f"trunk{i}.w" in shapes:
        w, b = shapes[f"trunk{i}.w"], shapes.get(f"trunk{i}.b")
        if len(w) != 2 or w[0] != width or b != (w[1],):
            raise CheckpointError(f"layer trunk{i} has shape {w}, expected ({width}, *)")
        width = w[1]
        i += 1
    expect = {"value.w": (width, man["n_atoms"]), "value.b": (man["n_atoms"],),
              "adv.w": (width, man["n_actions"] * man["n_atoms"]),
              "adv.b": (man["n_actions"] * man["n_atoms"],)}
    for name, shape in expect.items():
        if shapes.get(name) != shape:
            raise CheckpointError(f"layer {name} has shape {shapes.get(name)}, expected {shape}")
    if len(shapes) != 2 * i + 4:
        raise CheckpointError("unexpected extra layers in manifest")
