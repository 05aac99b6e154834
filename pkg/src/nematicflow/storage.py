"""Time-series CSV, binary snapshots and checkpoints.

Snapshot layout (all integers little-endian):

    bytes  0-7    magic, b"NEMSNAP\\0" or b"NEMCKPT\\0"
    bytes  8-11   format version (u32)
    bytes 12-15   reserved
    bytes 16-23   length n of the JSON block (u64)
    bytes 24-39   config hash, ASCII, NUL padded
    bytes 40-55   code version, ASCII, NUL padded
    bytes 56-63   reserved
    then n bytes of JSON (grid descriptor, time, step, extras), then rho, u, d
    (and Galerkin coefficients when present) as little-endian float64, row-major.
"""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .diagnostics import TIMESERIES_COLUMNS
from .evolution import State
from .grid import DirectorField, Grid, ScalarField, VectorField

FORMAT_VERSION = 1
SNAP_MAGIC = b"NEMSNAP\0"
CKPT_MAGIC = b"NEMCKPT\0"
HEADER_SIZE = 64
_HEADER = struct.Struct("<8sII Q 16s16s 8s")
UNIT_TOL = 1e-12

assert _HEADER.size == HEADER_SIZE


class SnapshotError(IOError):
    pass


class VersionMismatch(SnapshotError):
    pass


def _pad(s: str) -> bytes:
    b = s.encode("ascii")[:16]
    return b + b"\0" * (16 - len(b))


def _unpad(b: bytes) -> str:
    return b.rstrip(b"\0").decode("ascii")


# ---------------------------------------------------------------------------
# time series


class TimeseriesWriter:
    """Append-only CSV writer with the fixed column set; flushed every row."""

    def __init__(self, path, config_hash: str = "", code_version: str = "", rows=()):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "w", newline="", encoding="utf-8")
        self._fh.write(f"# config_hash={config_hash} code_version={code_version}\n")
        self._w = csv.writer(self._fh)
        self._w.writerow(TIMESERIES_COLUMNS)
        self.rows = []
        for r in rows:
            self.write(r)

    def write(self, row: dict):
        vals = [row[c] for c in TIMESERIES_COLUMNS]
        self._w.writerow([repr(float(v)) for v in vals])
        self._fh.flush()
        self.rows.append({c: float(row[c]) for c in TIMESERIES_COLUMNS})

    def close(self):
        if not self._fh.closed:
            self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_timeseries(path, rows, config_hash: str = "", code_version: str = "") -> Path:
    with TimeseriesWriter(path, config_hash, code_version, rows):
        pass
    return Path(path)


def read_timeseries(path) -> dict[str, np.ndarray]:
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader)
    data = np.array([[float(v) for v in r] for r in reader], dtype=float).reshape(-1, len(header))
    return {name: data[:, i] for i, name in enumerate(header)}


# ---------------------------------------------------------------------------
# snapshots


@dataclass
class Snapshot:
    state: State
    meta: dict
    config_hash: str
    code_version: str
    kind: str  # "snapshot" | "checkpoint"


def _write(path, magic, state: State, meta: dict, config_hash: str, code_version: str):
    grid = state.grid
    body = dict(meta)
    body.update(grid=grid.descriptor(), t=float(state.t).hex(), step_index=state.step_index,
                ncoeffs=0 if state.coeffs is None else int(len(state.coeffs)))
    blob = json.dumps(body, sort_keys=True).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(_HEADER.pack(magic, FORMAT_VERSION, 0, len(blob), _pad(config_hash),
                              _pad(code_version), b"\0" * 8))
        fh.write(blob)
        for f in (state.rho, state.u, state.d):
            fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())
        if state.coeffs is not None:
            fh.write(np.ascontiguousarray(state.coeffs, dtype="<f8").tobytes())
    tmp.replace(path)
    return path


def write_snapshot(path, state: State, config_hash: str = "", code_version: str = "",
                   meta: dict | None = None) -> Path:
    return _write(path, SNAP_MAGIC, state, meta or {}, config_hash, code_version)


def read_snapshot(path, validate: bool = True) -> Snapshot:
    """Read a snapshot or checkpoint; the director is re-checked for unit length."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            head = fh.read(HEADER_SIZE)
            if len(head) != HEADER_SIZE:
                raise SnapshotError(f"{path}: truncated header")
            magic, version, _, n, chash, cver, _ = _HEADER.unpack(head)
            if magic not in (SNAP_MAGIC, CKPT_MAGIC):
                raise SnapshotError(f"{path}: not a snapshot file")
            if version != FORMAT_VERSION:
                raise VersionMismatch(f"{path}: format version {version}, this build reads "
                                      f"{FORMAT_VERSION}")
            body = json.loads(fh.read(n))
            grid = Grid.from_descriptor(body["grid"])
            arrays = []
            for shape in (grid.shape, (grid.dim,) + grid.shape, (3,) + grid.shape,
                          (body["ncoeffs"],)):
                count = int(np.prod(shape))
                buf = fh.read(8 * count)
                if len(buf) != 8 * count:
                    raise SnapshotError(f"{path}: truncated field data")
                arrays.append(np.frombuffer(buf, dtype="<f8").reshape(shape).astype(float))
    except OSError as exc:
        if isinstance(exc, SnapshotError):
            raise
        raise SnapshotError(f"{path}: {exc}") from exc
    rho, u, d, coeffs = arrays
    dfield = DirectorField(grid, d)
    if validate and dfield.unit_defect() > UNIT_TOL:
        raise SnapshotError(f"{path}: stored director is not unit length "
                            f"(defect {dfield.unit_defect():.3e})")
    state = State(float.fromhex(body["t"]), ScalarField(grid, rho), VectorField(grid, u),
                  dfield, int(body["step_index"]), coeffs if body["ncoeffs"] else None)
    meta = {k: v for k, v in body.items() if k not in ("grid", "t", "step_index", "ncoeffs")}
    kind = "checkpoint" if magic == CKPT_MAGIC else "snapshot"
    return Snapshot(state, meta, _unpad(chash), _unpad(cver), kind)


# ---------------------------------------------------------------------------
# checkpoints


def checkpoint(path, state: State, accumulator, config: dict, config_hash: str,
               code_version: str, extra: dict | None = None) -> Path:
    """Snapshot plus everything the run loop needs to continue bit-for-bit."""
    meta = {"accumulator": _floats_to_hex(accumulator.to_dict()), "config": config}
    if extra:
        meta["extra"] = _floats_to_hex(extra)
    return _write(path, CKPT_MAGIC, state, meta, config_hash, code_version)


def restore(path, code_version: str | None = None):
    """Return (state, accumulator, config dict, extra) from a checkpoint."""
    from .config import config_hash as hash_of
    from .diagnostics import BlowupAccumulator
    snap = read_snapshot(path)
    if snap.kind != "checkpoint":
        raise SnapshotError(f"{path}: is a plain snapshot, not a checkpoint")
    if code_version is not None and snap.code_version != code_version:
        raise VersionMismatch(f"{path}: written by code version {snap.code_version}, "
                              f"running {code_version}")
    cfg = snap.meta["config"]
    if hash_of(cfg) != snap.config_hash:
        raise SnapshotError(f"{path}: embedded config does not match its hash")
    acc = BlowupAccumulator.from_dict(_hex_to_floats(snap.meta["accumulator"]))
    extra = _hex_to_floats(snap.meta.get("extra", {}))
    return snap.state, acc, cfg, extra


# floats travel as hex strings so a restore is exact whatever the JSON library does
def _floats_to_hex(obj):
    if isinstance(obj, float):
        return {"__f": obj.hex()}
    if isinstance(obj, dict):
        return {k: _floats_to_hex(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_floats_to_hex(v) for v in obj]
    return obj


def _hex_to_floats(obj):
    if isinstance(obj, dict):
        if set(obj) == {"__f"}:
            return float.fromhex(obj["__f"])
        return {k: _hex_to_floats(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_hex_to_floats(v) for v in obj]
    return obj
