"""Checkpoint files: a JSON header line followed by little-endian float64 tensors.

The header records the architecture, training config, epoch, loss trace and,
per tensor, its name, shape, byte offset and a 64-bit BLAKE2b checksum.
Optimizer moments are stored as ``adam.m.<name>`` / ``adam.v.<name>`` so a
run can resume bit-exactly.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from ..autograd import AdamW, Tensor
from ..core import DataError
from .model import SimArch
from .training import TrainConfig, TrainState

FORMAT = "ctcsim-checkpoint"
VERSION = 1
_F64 = np.dtype("<f8")


def _digest(buf: bytes) -> str:
    return hashlib.blake2b(buf, digest_size=8).hexdigest()


def save_checkpoint(path, state: TrainState, arch: SimArch, cfg: TrainConfig) -> None:
    named = [(k, p.data) for k, p in state.params.items()]
    names = list(state.params)
    named += [(f"adam.m.{k}", m) for k, m in zip(names, state.optimizer.m)]
    named += [(f"adam.v.{k}", v) for k, v in zip(names, state.optimizer.v)]
    entries, blobs, offset = [], [], 0
    for name, arr in named:
        raw = np.ascontiguousarray(arr, dtype=_F64).tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset,
                        "nbytes": len(raw), "checksum": _digest(raw)})
        blobs.append(raw)
        offset += len(raw)
    header = {"format": FORMAT, "version": VERSION, "arch": arch.to_dict(),
              "train": cfg.to_dict(), "seed": cfg.seed, "epoch": state.epoch,
              "opt_step": state.optimizer.t, "trace": state.trace, "tensors": entries}
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        for raw in blobs:
            fh.write(raw)


def load_checkpoint(path):
    """Return (TrainState, SimArch, TrainConfig) exactly as saved."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    buf = path.read_bytes()
    nl = buf.find(b"\n")
    try:
        header = json.loads(buf[:nl])
    except (ValueError, UnicodeDecodeError):
        raise DataError(f"{path}: unreadable checkpoint header") from None
    if header.get("format") != FORMAT or header.get("version") != VERSION:
        raise DataError(f"{path}: expected {FORMAT} v{VERSION}")
    body = buf[nl + 1:]
    tensors = {}
    for e in header["tensors"]:
        raw = body[e["offset"]: e["offset"] + e["nbytes"]]
        if len(raw) != e["nbytes"]:
            raise DataError(f"{path}: tensor {e['name']} extends past end of file")
        if _digest(raw) != e["checksum"]:
            raise DataError(f"{path}: checksum mismatch for tensor {e['name']}")
        tensors[e["name"]] = np.frombuffer(raw, dtype=_F64).reshape(e["shape"]).copy()
    arch = SimArch(**header["arch"])
    tc = header["train"]
    tc["betas"] = tuple(tc["betas"])
    cfg = TrainConfig(**tc)
    names = [e["name"] for e in header["tensors"] if not e["name"].startswith("adam.")]
    params = {k: Tensor(tensors[k], requires_grad=True, name=k) for k in names}
    opt = AdamW(list(params.values()), lr=cfg.lr, betas=cfg.betas, eps=cfg.eps,
                weight_decay=cfg.weight_decay, t=header["opt_step"],
                m=[tensors[f"adam.m.{k}"] for k in names],
                v=[tensors[f"adam.v.{k}"] for k in names])
    state = TrainState(params, opt, header["epoch"], list(header["trace"]))
    return state, arch, cfg
