"""SFNET1 network files.

Layout::

    b"SFNET1\\0\\0"                     8-byte magic
    uint32 LE                          header length in bytes
    UTF-8 JSON header                  canonical: sorted keys, no whitespace
    raw little-endian arrays           in the order listed in header["arrays"]
    uint32 LE                          CRC-32 of every preceding byte

Weights, masks, per-neuron parameters, layer state and rule traces are
``<f8`` (spikes ``|u1``) so a loaded network continues a run bit for bit.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
import zlib
from pathlib import Path
from typing import Any

import numpy as np

from .errors import ChecksumError, SerializationError, TruncatedFileError, VersionMismatchError
from .neurons import build_nodes
from .plasticity import build_rule
from .rng import RNG_VERSION, restore_rng, rng_state
from .topology import ConvConnection, DenseConnection, SparseConnection

MAGIC = b"SFNET1\x00\x00"
FORMAT = "SFNET1"


def _canonical(obj: Any) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False).encode("utf-8")


def _add(arrays: list, specs: list, name: str, value: np.ndarray, dtype: str) -> None:
    arr = np.ascontiguousarray(value, dtype=np.dtype(dtype))
    specs.append({"name": name, "dtype": dtype, "shape": list(arr.shape)})
    arrays.append(arr)


def network_to_bytes(net) -> bytes:
    arrays: list[np.ndarray] = []
    specs: list[dict] = []
    layers = []
    for name, layer in net.layers.items():
        layers.append({"name": name, "type": layer.kind, "n": layer.n, "params": layer.params_dict()})
        for pname, value in layer.param_arrays().items():
            _add(arrays, specs, f"layer/{name}/param/{pname}", value, "<f8")
        for sname, value in layer.state.arrays().items():
            _add(arrays, specs, f"layer/{name}/state/{sname}", value, "|u1" if sname == "s" else "<f8")
    conns = []
    for i, conn in enumerate(net.connections.values()):
        conns.append(conn.config())
        for wname, value in conn.weight_arrays().items():
            _add(arrays, specs, f"conn/{i}/{wname}", value, "<f8")
        if conn.rule is not None:
            for rname, value in conn.rule.state_arrays().items():
                _add(arrays, specs, f"conn/{i}/rule/{rname}", value, "<f8")
    header = {
        "format": FORMAT,
        "dt": net.dt,
        "learning_enabled": net.learning_enabled,
        "rng": {"version": RNG_VERSION, "state": rng_state(net.rng) if net.rng is not None else None},
        "layers": layers,
        "connections": conns,
        "arrays": specs,
    }
    head = _canonical(header)
    body = MAGIC + struct.pack("<I", len(head)) + head + b"".join(a.tobytes() for a in arrays)
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_network(net, path) -> None:
    atomic_write_bytes(path, network_to_bytes(net))


def read_header(data: bytes) -> tuple[dict, int]:
    """Validate framing and return (header, offset of first array)."""
    if len(data) < len(MAGIC):
        raise TruncatedFileError("file shorter than the magic number")
    magic = data[: len(MAGIC)]
    if magic != MAGIC:
        if magic.startswith(b"SFNET"):
            raise VersionMismatchError(f"unsupported format {magic.rstrip(bytes(1)).decode(errors='replace')!r}")
        raise SerializationError("not an SFNET file")
    if len(data) < len(MAGIC) + 4:
        raise TruncatedFileError("file ends inside the header length")
    (hlen,) = struct.unpack_from("<I", data, len(MAGIC))
    start = len(MAGIC) + 4
    if len(data) < start + hlen:
        raise TruncatedFileError("file ends inside the header")
    try:
        header = json.loads(data[start : start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SerializationError(f"corrupt header: {exc}") from None
    if header.get("format") != FORMAT:
        raise VersionMismatchError(f"header declares format {header.get('format')!r}")
    if header.get("rng", {}).get("version") not in (RNG_VERSION, None):
        raise VersionMismatchError(f"random generator version {header['rng']['version']!r} is not {RNG_VERSION!r}")
    return header, start + hlen


def network_from_bytes(data: bytes):
    from .network import Network

    header, offset = read_header(data)
    sizes = [int(np.prod(s["shape"])) * np.dtype(s["dtype"]).itemsize for s in header["arrays"]]
    expected = offset + sum(sizes) + 4
    if len(data) < expected:
        raise TruncatedFileError(f"file has {len(data)} bytes, header declares {expected}")
    if len(data) > expected:
        raise SerializationError(f"{len(data) - expected} unexpected trailing bytes")
    (crc,) = struct.unpack_from("<I", data, expected - 4)
    if zlib.crc32(data[: expected - 4]) & 0xFFFFFFFF != crc:
        raise ChecksumError("CRC-32 mismatch")

    arrays: dict[str, np.ndarray] = {}
    for spec, size in zip(header["arrays"], sizes):
        raw = np.frombuffer(data, dtype=np.dtype(spec["dtype"]), count=size // np.dtype(spec["dtype"]).itemsize, offset=offset)
        arrays[spec["name"]] = raw.reshape(spec["shape"]).copy()
        offset += size

    rng_info = header["rng"]
    rng = restore_rng(rng_info["state"]) if rng_info.get("state") is not None else None
    net = Network(dt=header["dt"], rng=rng)
    net.learning_enabled = header["learning_enabled"]
    for spec in header["layers"]:
        name = spec["name"]
        prefix = f"layer/{name}/param/"
        params = {k[len(prefix):]: v for k, v in arrays.items() if k.startswith(prefix)}
        layer = build_nodes(spec["type"], spec["n"], spec["params"], params)
        prefix = f"layer/{name}/state/"
        for key, value in arrays.items():
            if key.startswith(prefix):
                field = key[len(prefix):]
                if field == "s":
                    layer.state.s = value.astype(bool)
                else:
                    getattr(layer.state, field)[...] = value
        net.add_layer(name, layer)
    for i, cfg in enumerate(header["connections"]):
        rule = build_rule(cfg["rule"]) if cfg["rule"] is not None else None
        w = arrays[f"conn/{i}/w"]
        kwargs = dict(wmin=cfg["wmin"], wmax=cfg["wmax"], norm=cfg["norm"], rule=rule)
        if cfg["type"] == "dense":
            conn = DenseConnection(cfg["source"], cfg["target"], w, **kwargs)
        elif cfg["type"] == "sparse":
            conn = SparseConnection(cfg["source"], cfg["target"], w, mask=arrays[f"conn/{i}/mask"] != 0, **kwargs)
        elif cfg["type"] == "conv":
            conn = ConvConnection(
                cfg["source"], cfg["target"], w, input_shape=tuple(cfg["input_shape"]),
                stride=cfg["stride"], padding=cfg["padding"], **kwargs,
            )
        else:
            raise SerializationError(f"unknown connection type {cfg['type']!r}")
        # Unbounded sides were written as null; restore them explicitly.
        conn.wmin = -np.inf if cfg["wmin"] is None else float(cfg["wmin"])
        conn.wmax = np.inf if cfg["wmax"] is None else float(cfg["wmax"])
        conn.w[...] = w
        if rule is not None:
            prefix = f"conn/{i}/rule/"
            rule.load_state({k[len(prefix):]: v for k, v in arrays.items() if k.startswith(prefix)})
        net.add_connection(conn)
    return net


def load_network(path):
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise SerializationError(f"cannot read {path}: {exc}") from None
    return network_from_bytes(data)
