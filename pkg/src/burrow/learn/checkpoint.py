"""Binary policy checkpoints.

Layout (little-endian)::

    b"BRSM" | u32 version | u32 mode tag | u32 block count
    per block: u16 name length, name (utf-8), u8 ndim, u32 dims...
    raw float32 data for every block, in table order

Blocks are the policy layers, value layers, ``log_std`` and the observation
normalizer's ``obs_mean`` / ``obs_var``.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..control import Mode
from .policy import PolicyParams, PolicySpec
from .ppo import RunningNormalizer

MAGIC = b"BRSM"
VERSION = 1


class CheckpointFormatError(ValueError):
    pass


class CheckpointDimensionError(CheckpointFormatError):
    pass


@dataclass
class Checkpoint:
    mode: Mode
    spec: PolicySpec
    params: PolicyParams
    normalizer: RunningNormalizer


def _blocks(ck: Checkpoint):
    names = ck.params.block_names() + ["obs_mean", "obs_var"]
    arrays = ck.params.blocks() + [ck.normalizer.mean, ck.normalizer.var]
    return names, arrays


def encode_checkpoint(ck: Checkpoint) -> bytes:
    names, arrays = _blocks(ck)
    head = [MAGIC, struct.pack("<III", VERSION, ck.mode.tag, len(names))]
    for name, arr in zip(names, arrays):
        raw = name.encode()
        head.append(struct.pack("<H", len(raw)) + raw + struct.pack("<B", arr.ndim))
        head.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
    body = [np.ascontiguousarray(a, dtype="<f4").tobytes() for a in arrays]
    return b"".join(head + body)


def save_checkpoint(ck: Checkpoint, path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(encode_checkpoint(ck))
    tmp.replace(path)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointFormatError(f"truncated checkpoint while reading {what}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def decode_checkpoint(data: bytes) -> Checkpoint:
    r = _Reader(data)
    if r.take(4, "magic") != MAGIC:
        raise CheckpointFormatError("bad magic bytes: not a policy checkpoint")
    version, tag, count = r.unpack("<III", "header")
    if version != VERSION:
        raise CheckpointFormatError(f"unsupported checkpoint version {version} (expected {VERSION})")
    try:
        mode = Mode.from_tag(tag)
    except ValueError as exc:
        raise CheckpointFormatError(str(exc)) from None
    table = []
    for k in range(count):
        (n,) = r.unpack("<H", f"name length of block {k}")
        try:
            name = r.take(n, f"name of block {k}").decode()
        except UnicodeDecodeError:
            raise CheckpointFormatError(f"block {k} name is not utf-8") from None
        (ndim,) = r.unpack("<B", f"ndim of {name}")
        shape = r.unpack(f"<{ndim}I", f"shape of {name}")
        table.append((name, shape))
    arrays = {}
    for name, shape in table:
        size = int(np.prod(shape, dtype=np.int64))
        arrays[name] = np.frombuffer(r.take(4 * size, f"data of {name}"), dtype="<f4").reshape(shape).astype(np.float32)
    if r.pos != len(data):
        raise CheckpointFormatError(f"{len(data) - r.pos} trailing bytes after the last block")
    return _assemble(mode, table, arrays)


def _assemble(mode: Mode, table, arrays) -> Checkpoint:
    names = [n for n, _ in table]
    for need in ("log_std", "obs_mean", "obs_var"):
        if need not in arrays:
            raise CheckpointFormatError(f"missing block {need!r}")
    pi = [n for n in names if n.startswith("pi.")]
    v = [n for n in names if n.startswith("v.")]
    if not pi or not v or len(pi) % 2 or len(v) % 2:
        raise CheckpointFormatError("policy/value layer blocks are incomplete")

    def chain(keys, label):
        sizes = []
        for k in range(len(keys) // 2):
            w = arrays.get(f"{label}.w{k}")
            b = arrays.get(f"{label}.b{k}")
            if w is None or b is None or w.ndim != 2 or b.shape != (w.shape[1],):
                raise CheckpointFormatError(f"layer {label}.{k} has inconsistent shapes")
            if sizes and sizes[-1] != w.shape[0]:
                raise CheckpointFormatError(f"layer {label}.{k} input does not match the previous layer")
            if not sizes:
                sizes.append(w.shape[0])
            sizes.append(w.shape[1])
        return sizes

    ps = chain(pi, "pi")
    vs = chain(v, "v")
    if vs[-1] != 1 or vs[0] != ps[0]:
        raise CheckpointFormatError("value network must map the observation to one output")
    if arrays["log_std"].shape != (ps[-1],):
        raise CheckpointFormatError("log_std length must equal the action dimension")
    obs_dim = ps[0]
    if obs_dim != mode.obs_dim:
        raise CheckpointDimensionError(
            f"checkpoint tagged {mode.value} has input dimension {obs_dim}, expected {mode.obs_dim}")
    if arrays["obs_mean"].shape != (obs_dim,) or arrays["obs_var"].shape != (obs_dim,):
        raise CheckpointFormatError("normalizer blocks must match the input dimension")
    spec = PolicySpec(obs_dim=obs_dim, act_dim=ps[-1], hidden=tuple(ps[1:-1]), value_hidden=tuple(vs[1:-1]))
    pi_blocks = [arrays[f"pi.{t}{k}"] for k in range(len(pi) // 2) for t in "wb"]
    v_blocks = [arrays[f"v.{t}{k}"] for k in range(len(v) // 2) for t in "wb"]
    params = PolicyParams(pi_blocks, v_blocks, arrays["log_std"])
    norm = RunningNormalizer(obs_dim)
    norm.mean = arrays["obs_mean"].astype(np.float64)
    norm.var = arrays["obs_var"].astype(np.float64)
    norm.frozen = True
    return Checkpoint(mode, spec, params, norm)


def load_checkpoint(path, expect_mode=None) -> Checkpoint:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointFormatError(f"cannot read checkpoint {path}: {exc}") from None
    ck = decode_checkpoint(data)
    if expect_mode is not None:
        want = Mode.parse(expect_mode)
        if want.obs_dim != ck.spec.obs_dim:
            raise CheckpointDimensionError(
                f"{want.value} expects {want.obs_dim} inputs but the checkpoint policy takes {ck.spec.obs_dim}")
        if want is not ck.mode:
            raise CheckpointDimensionError(f"checkpoint was trained in {ck.mode.value} mode, not {want.value}")
    return ck
