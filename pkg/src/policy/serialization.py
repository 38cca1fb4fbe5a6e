"""
SBRL weight files.

Layout (little-endian):
    magic  b"SBRL"
    u32    format version
    32 B   sha256 of the canonical network spec
    u32    spec JSON length, then the JSON bytes
    u32    layout entry count, per entry: u16 name length, name,
           u8 rank, rank x u32 dims
    u64    parameter count, then that many float32 values

A human-readable `<stem>.meta.toml` sidecar carries run metadata.
"""
import hashlib
import json
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import numpy as np
import tomli_w
from pydantic import ValidationError

from ..errors import CorruptWeightsError, PolicyShapeError, SpecMismatchError
from .network import NetworkSpec, PolicyNetwork, assign_parameters, flatten_parameters, parameter_layout

logger = logging.getLogger(__name__)

MAGIC = b"SBRL"
FORMAT_VERSION = 1

Layout = Tuple[Tuple[str, Tuple[int, ...]], ...]


@dataclass(frozen=True, eq=False)
class PolicyParams:
    spec: NetworkSpec
    vector: np.ndarray
    layout: Layout

    def __post_init__(self):
        count = sum(int(np.prod(shape)) for _, shape in self.layout)
        if self.vector.size != count:
            raise PolicyShapeError(f"Parameter vector has {self.vector.size} entries, layout needs {count}")
        if not np.all(np.isfinite(self.vector)):
            raise PolicyShapeError("Parameter vector contains non-finite values")

    @classmethod
    def from_network(cls, net: PolicyNetwork) -> "PolicyParams":
        return cls(net.spec, flatten_parameters(net), tuple(parameter_layout(net)))

    @classmethod
    def initial(cls, spec: NetworkSpec) -> "PolicyParams":
        return cls.from_network(PolicyNetwork(spec))

    def build(self) -> PolicyNetwork:
        net = PolicyNetwork(self.spec)
        if tuple(parameter_layout(net)) != self.layout:
            raise SpecMismatchError("Parameter layout does not match the network built from the spec")
        assign_parameters(net, self.vector)
        return net

    def digest(self) -> str:
        return hashlib.sha256(self.spec.spec_hash() + self.vector.astype("<f4").tobytes()).hexdigest()


def sidecar_path(path: Path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".meta.toml")


def save_params(params: PolicyParams, path: Path, metadata: Optional[Dict[str, Any]] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    spec_json = params.spec.model_dump_json().encode("utf-8")
    chunks = [MAGIC, struct.pack("<I", FORMAT_VERSION), params.spec.spec_hash()]
    chunks.append(struct.pack("<I", len(spec_json)) + spec_json)
    chunks.append(struct.pack("<I", len(params.layout)))
    for name, shape in params.layout:
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)) + encoded + struct.pack("<B", len(shape)))
        chunks.append(struct.pack(f"<{len(shape)}I", *shape))
    chunks.append(struct.pack("<Q", params.vector.size))
    chunks.append(params.vector.astype("<f4").tobytes())
    path.write_bytes(b"".join(chunks))

    if metadata is not None:
        meta = {"format_version": FORMAT_VERSION, "spec_hash": params.spec.spec_hash().hex(), **metadata}
        with open(sidecar_path(path), "wb") as f:
            tomli_w.dump(meta, f)
    logger.debug("saved %d parameters to %s", params.vector.size, path)
    return path


class _Reader:
    def __init__(self, data: bytes, path: Path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CorruptWeightsError(f"{self.path}: file is truncated at byte {len(self.data)}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_params(path: Path, expected: Optional[NetworkSpec] = None) -> PolicyParams:
    """Read a weight file; `expected` pins the network spec the caller needs."""
    path = Path(path)
    try:
        reader = _Reader(path.read_bytes(), path)
    except FileNotFoundError as e:
        raise CorruptWeightsError(f"Weight file not found: {path}") from e
    if reader.take(4) != MAGIC:
        raise CorruptWeightsError(f"{path}: not an SBRL weight file")
    (version,) = reader.unpack("<I")
    if version != FORMAT_VERSION:
        raise CorruptWeightsError(f"{path}: unsupported format version {version}")
    stored_hash = reader.take(32)
    (spec_len,) = reader.unpack("<I")
    try:
        spec = NetworkSpec.model_validate(json.loads(reader.take(spec_len)))
    except (ValueError, ValidationError) as e:
        raise CorruptWeightsError(f"{path}: unreadable network spec") from e
    if spec.spec_hash() != stored_hash:
        raise CorruptWeightsError(f"{path}: spec hash does not match the stored spec")
    if expected is not None and expected.spec_hash() != stored_hash:
        raise SpecMismatchError(
            f"{path}: saved for a {spec.observation} network of input {spec.input_width}, "
            f"expected {expected.observation} input {expected.input_width}"
        )

    (entries,) = reader.unpack("<I")
    layout = []
    for _ in range(entries):
        (name_len,) = reader.unpack("<H")
        name = reader.take(name_len).decode("utf-8", errors="replace")
        (rank,) = reader.unpack("<B")
        layout.append((name, tuple(reader.unpack(f"<{rank}I"))))
    (count,) = reader.unpack("<Q")
    vector = np.frombuffer(reader.take(4 * count), dtype="<f4").astype(np.float32)
    if reader.pos != len(reader.data):
        raise CorruptWeightsError(f"{path}: {len(reader.data) - reader.pos} trailing bytes")
    try:
        return PolicyParams(spec, vector, tuple(layout))
    except PolicyShapeError as e:
        raise CorruptWeightsError(f"{path}: {e}") from e
