"""Checkpoint format (version 1).

A checkpoint is two files:

``<path>``
    UTF-8 text manifest. Header lines are ``key value`` pairs::

        bamsr-checkpoint 1
        epoch <completed epochs>
        seed <training seed>
        network blocks=.. width=.. scale=.. attention=.. channels=.. reduction=.. kernel=.. insertion=..
        train patch_size=.. batch=.. epochs=.. lr0=.. halve_period=.. seed=.. scale=..
        adam_step <t>
        rng <JSON numpy bit-generator state>
        blob <blob file name> <byte length>
        tensors <count>

    followed by ``count`` lines ``name shape offset`` where ``shape`` is
    dims joined by ``x`` and ``offset`` is a byte offset into the blob.
    Parameters come first in network order, then Adam moments named
    ``adam.m/<param>`` and ``adam.v/<param>``. The optional lines
    (``train``, ``adam_step``, ``rng``) are omitted when not saved.

``<path>.bin``
    Little-endian float32 arrays concatenated in manifest order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from .attention import AttentionSpec
from .network import NetworkSpec, SRNetwork, build
from .optim import Adam

MAGIC = "bamsr-checkpoint"
VERSION = 1
BLOB_DTYPE = np.dtype("<f4")


class CheckpointError(ValueError):
    pass


@dataclass
class TrainState:
    epoch: int = 0
    seed: int = 0
    optimizer: Optional[Adam] = None
    rng: Optional[np.random.Generator] = None
    train_spec: Optional[object] = None


def network_spec_to_kv(spec: NetworkSpec) -> str:
    a = spec.attention
    return (f"blocks={spec.blocks} width={spec.width} scale={spec.scale} "
            f"attention={a.kind.value} channels={a.channels} reduction={a.reduction} "
            f"kernel={a.kernel} insertion={spec.insertion.value}")


def _parse_kv(text: str) -> Dict[str, str]:
    out = {}
    for token in text.split():
        if "=" not in token:
            raise CheckpointError(f"malformed key=value token {token!r}")
        k, v = token.split("=", 1)
        out[k] = v
    return out


def network_spec_from_kv(text: str) -> NetworkSpec:
    kv = _parse_kv(text)
    try:
        attn = AttentionSpec(kv["attention"], int(kv["channels"]), int(kv["reduction"]), int(kv["kernel"]))
        return NetworkSpec(int(kv["blocks"]), int(kv["width"]), int(kv["scale"]), attn, kv["insertion"])
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"bad network line: {exc}") from exc


def _train_spec_from_kv(text: str):
    from .train import TrainSpec

    kv = _parse_kv(text)
    try:
        return TrainSpec(
            patch_size=int(kv["patch_size"]), batch=int(kv["batch"]), epochs=int(kv["epochs"]),
            lr0=float(kv["lr0"]), halve_period=int(kv["halve_period"]), seed=int(kv["seed"]),
            scale=int(kv["scale"]),
        )
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"bad train line: {exc}") from exc


def blob_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".bin")


def save_checkpoint(path, net: SRNetwork, optimizer: Optional[Adam] = None, epoch: int = 0,
                    rng: Optional[np.random.Generator] = None, train_spec=None, seed: int = None) -> None:
    """Write manifest and blob. Arrays are stored as float32."""
    path = Path(path)
    tensors: List[Tuple[str, np.ndarray]] = list(net.state_dict().items())
    if optimizer is not None:
        tensors += [(f"adam.m/{n}", a) for n, a in optimizer.m.items()]
        tensors += [(f"adam.v/{n}", a) for n, a in optimizer.v.items()]
    if seed is None:
        seed = train_spec.seed if train_spec is not None else 0

    lines = [f"{MAGIC} {VERSION}", f"epoch {epoch}", f"seed {seed}",
             f"network {network_spec_to_kv(net.spec)}"]
    if train_spec is not None:
        lines.append("train " + " ".join(f"{k}={v!r}" if isinstance(v, float) else f"{k}={v}"
                                         for k, v in train_spec.as_dict().items()))
    if optimizer is not None:
        lines.append(f"adam_step {optimizer.t}")
    if rng is not None:
        lines.append("rng " + json.dumps(rng.bit_generator.state, sort_keys=True))

    chunks = []
    offset = 0
    entries = []
    for name, arr in tensors:
        data = np.ascontiguousarray(arr, dtype=BLOB_DTYPE).tobytes()
        shape = "x".join(str(d) for d in arr.shape) or "scalar"
        entries.append(f"{name} {shape} {offset}")
        chunks.append(data)
        offset += len(data)
    bp = blob_path(path)
    lines.append(f"blob {bp.name} {offset}")
    lines.append(f"tensors {len(entries)}")
    lines.extend(entries)

    path.parent.mkdir(parents=True, exist_ok=True)
    with open(bp, "wb") as fh:
        for c in chunks:
            fh.write(c)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _parse_shape(text: str) -> Tuple[int, ...]:
    if text == "scalar":
        return ()
    try:
        shape = tuple(int(d) for d in text.split("x"))
    except ValueError as exc:
        raise CheckpointError(f"bad shape {text!r}") from exc
    if any(d < 1 for d in shape):
        raise CheckpointError(f"bad shape {text!r}")
    return shape


def load_checkpoint(path, dtype=np.float32) -> Tuple[SRNetwork, TrainState]:
    """Rebuild the network and training state; every inconsistency raises
    :class:`CheckpointError`."""
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except (OSError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"cannot read manifest {path}: {exc}") from exc
    if not lines or lines[0] != f"{MAGIC} {VERSION}":
        raise CheckpointError(f"{path}: not a version-{VERSION} checkpoint manifest")

    header: Dict[str, str] = {}
    i = 1
    while i < len(lines):
        key, _, value = lines[i].partition(" ")
        header[key] = value
        i += 1
        if key == "tensors":
            break
    for required in ("epoch", "seed", "network", "blob", "tensors"):
        if required not in header:
            raise CheckpointError(f"{path}: manifest lacks '{required}' line")
    try:
        count = int(header["tensors"])
        epoch = int(header["epoch"])
        seed = int(header["seed"])
        blob_name, blob_len = header["blob"].split()
        blob_len = int(blob_len)
    except ValueError as exc:
        raise CheckpointError(f"{path}: malformed header: {exc}") from exc
    entries = lines[i:]
    if len(entries) != count:
        raise CheckpointError(f"{path}: expected {count} tensor lines, found {len(entries)}")

    bp = path.with_name(blob_name)
    try:
        blob = bp.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read blob {bp}: {exc}") from exc
    if len(blob) != blob_len:
        raise CheckpointError(f"{bp}: blob is {len(blob)} bytes, manifest says {blob_len}")

    arrays: Dict[str, np.ndarray] = {}
    for line in entries:
        parts = line.split()
        if len(parts) != 3:
            raise CheckpointError(f"{path}: malformed tensor line {line!r}")
        name, shape_text, off_text = parts
        shape = _parse_shape(shape_text)
        try:
            off = int(off_text)
        except ValueError as exc:
            raise CheckpointError(f"{path}: bad offset in {line!r}") from exc
        nbytes = int(np.prod(shape, dtype=np.int64)) * BLOB_DTYPE.itemsize
        if off < 0 or off + nbytes > len(blob):
            raise CheckpointError(f"{path}: tensor {name} runs past the end of the blob")
        arrays[name] = np.frombuffer(blob, dtype=BLOB_DTYPE, count=nbytes // 4, offset=off).reshape(shape)

    spec = network_spec_from_kv(header["network"])
    net = build(spec, seed, dtype=dtype)
    params = {n: a for n, a in arrays.items() if not n.startswith("adam.")}
    try:
        net.load_state_dict(params)
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"{path}: {exc}") from exc

    state = TrainState(epoch=epoch, seed=seed)
    if "train" in header:
        state.train_spec = _train_spec_from_kv(header["train"])
    if "adam_step" in header:
        opt = Adam(net.named_parameters())
        try:
            opt.t = int(header["adam_step"])
            for n in opt.params:
                for which, store in (("m", opt.m), ("v", opt.v)):
                    arr = arrays[f"adam.{which}/{n}"]
                    if arr.shape != store[n].shape:
                        raise CheckpointError(f"adam.{which}/{n}: shape {arr.shape} != {store[n].shape}")
                    store[n] = np.array(arr, dtype=dtype)
        except KeyError as exc:
            raise CheckpointError(f"{path}: missing optimizer moment {exc}") from exc
        state.optimizer = opt
    if "rng" in header:
        try:
            rng = np.random.default_rng()
            rng.bit_generator.state = json.loads(header["rng"])
        except (ValueError, TypeError, KeyError) as exc:
            raise CheckpointError(f"{path}: bad rng state: {exc}") from exc
        state.rng = rng
    return net, state
