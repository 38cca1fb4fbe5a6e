"""
Line-delimited world snapshots.

Each record is a JSON object with a fixed field order and floats written with
their exact repr, so hashing the text is a reliable determinism check.
"""
import hashlib
import json
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Optional, Tuple

from ..errors import TraceVerificationError
from .world import WorldState

TRACE_VERSION = 1


def snapshot_record(world: WorldState) -> Dict[str, Any]:
    return {
        "step": world.step,
        "agents": [
            [
                a.id,
                a.position.x,
                a.position.y,
                a.facing.x,
                a.facing.y,
                a.health,
                a.ammo,
                a.cooldown,
                a.damage_dealt,
            ]
            for a in world.agents
        ],
        "projectiles": [[p.position.x, p.position.y, p.velocity.x, p.velocity.y, p.owner] for p in world.projectiles],
        "stations": [s.respawn_timer for s in world.ammo_stations],
    }


def encode_record(record: Dict[str, Any]) -> str:
    return json.dumps(record, separators=(",", ":"), allow_nan=False)


def record_hash(record: Dict[str, Any]) -> str:
    return hashlib.sha256(encode_record(record).encode("utf-8")).hexdigest()


def state_hash(world: WorldState) -> str:
    return record_hash(snapshot_record(world))


def trajectory_hash(worlds: Iterable[WorldState]) -> str:
    """Hash of the whole serialized state sequence."""
    digest = hashlib.sha256()
    for world in worlds:
        digest.update(encode_record(snapshot_record(world)).encode("utf-8"))
        digest.update(b"\n")
    return digest.hexdigest()


class TraceWriter:
    """Writes a header line followed by one state record per step."""

    def __init__(self, path: Path, header: Dict[str, Any]):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._file = open(self.path, "w", encoding="utf-8", newline="\n")
        self._digest = hashlib.sha256()
        self._write({"kind": "header", "version": TRACE_VERSION, **header})

    def _write(self, record: Dict[str, Any]) -> None:
        line = encode_record(record)
        self._digest.update(line.encode("utf-8") + b"\n")
        self._file.write(line + "\n")

    def record(self, world: WorldState, extra: Optional[Dict[str, Any]] = None) -> str:
        snapshot = snapshot_record(world)
        h = record_hash(snapshot)
        self._write({"kind": "state", **snapshot, **(extra or {}), "hash": h})
        return h

    def close(self) -> str:
        """Close the file and return the hash over every line written."""
        self._file.close()
        return self._digest.hexdigest()

    def __enter__(self) -> "TraceWriter":
        return self

    def __exit__(self, *exc) -> None:
        if not self._file.closed:
            self._file.close()


def read_trace(path: Path) -> Tuple[Dict[str, Any], List[Dict[str, Any]]]:
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except FileNotFoundError as e:
        raise TraceVerificationError(f"Trace file not found: {path}") from e
    records = list(_parse_lines(lines, path))
    if not records or records[0].get("kind") != "header":
        raise TraceVerificationError(f"Trace {path} has no header record")
    header = records[0]
    if header.get("version") != TRACE_VERSION:
        raise TraceVerificationError(f"Trace {path} has unsupported version {header.get('version')!r}")
    return header, records[1:]


def _parse_lines(lines: List[str], path: Path) -> Iterator[Dict[str, Any]]:
    for number, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            yield json.loads(line)
        except json.JSONDecodeError as e:
            raise TraceVerificationError(f"{path}:{number}: malformed record ({e.msg})") from e


def file_hash(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
