"""Sensor data sets: fixed-record binary IMU logs and delimited tables.

A binary log is a sequence of records with seven fields: time, gyro X/Y/Z
and accel X/Y/Z.  The default encoding is seven little-endian float64
values; each registry entry (or a JSON schema file) may override the
per-field numeric type, the scale factors and a leading header size.  See
``docs/formats.md`` for the byte-level description.
"""

from __future__ import annotations

import csv
import io
import json
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "REGISTRY",
    "Channel",
    "DataError",
    "ImuBinarySchema",
    "SensorDataset",
    "get_schema",
    "load_schema",
    "parse_columns",
    "read_imu_binary",
    "read_table",
    "write_imu_binary",
]

FIELDS = ("time", "gyro_x", "gyro_y", "gyro_z", "accel_x", "accel_y", "accel_z")
KINDS = ("gyro", "accel", "signal")


class DataError(ValueError):
    """Malformed or unreadable input data."""


@dataclass(frozen=True)
class Channel:
    kind: str
    axis: str
    samples: np.ndarray
    name: str = ""

    @property
    def label(self) -> str:
        return f"{self.kind}:{self.axis}"


@dataclass(frozen=True)
class SensorDataset:
    """Equal-length channels sampled at ``freq`` Hz."""

    channels: tuple[Channel, ...]
    freq: float = 1.0
    time: np.ndarray | None = None
    source: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(self.channels))
        if not self.channels:
            raise DataError("a dataset needs at least one channel")
        if not (math.isfinite(self.freq) and self.freq > 0):
            raise DataError("freq must be positive")
        n = self.channels[0].samples.size
        seen = set()
        for c in self.channels:
            if c.kind not in KINDS:
                raise DataError(f"unknown channel kind {c.kind!r}")
            if c.samples.size != n:
                raise DataError("channels differ in length")
            if c.label in seen:
                raise DataError(f"duplicate channel {c.label}")
            seen.add(c.label)
        if self.time is not None and self.time.size != n:
            raise DataError("time column length differs from channels")

    def __len__(self) -> int:
        return int(self.channels[0].samples.size)

    @property
    def labels(self) -> list[str]:
        return [c.label for c in self.channels]

    def channel(self, key: str | int) -> Channel:
        """Select by label (``"gyro:Y"``, case-insensitive), header name, or 0-based index."""
        if isinstance(key, int) or (isinstance(key, str) and key.strip().lstrip("-").isdigit()):
            i = int(key)
            if not -len(self.channels) <= i < len(self.channels):
                raise DataError(f"channel index {i} out of range")
            return self.channels[i]
        k = key.strip().lower()
        for c in self.channels:
            if c.label.lower() == k or (c.name and c.name.lower() == k):
                return c
        raise DataError(f"no channel {key!r}; available: {', '.join(self.labels)}")


# -- binary ------------------------------------------------------------------------


@dataclass(frozen=True)
class ImuBinarySchema:
    """Record layout of a binary IMU log.

    ``dtypes`` are numpy type strings with explicit byte order (``"<f8"``,
    ``">i4"``...), one per field.  Stored values are multiplied by
    ``scale`` on reading and divided by it on writing.
    """

    name: str
    dtypes: tuple[str, ...] = ("<f8",) * 7
    scale: tuple[float, ...] = (1.0,) * 7
    header_bytes: int = 0

    def __post_init__(self):
        if len(self.dtypes) != 7 or len(self.scale) != 7:
            raise DataError("an IMU record has exactly 7 fields")
        for d in self.dtypes:
            dt = np.dtype(d)
            if dt.kind not in "fiu":
                raise DataError(f"unsupported field type {d!r}")
        if any(not (math.isfinite(s) and s != 0.0) for s in self.scale):
            raise DataError("scale factors must be finite and nonzero")
        if self.header_bytes < 0:
            raise DataError("header_bytes must be >= 0")

    @property
    def record_dtype(self) -> np.dtype:
        return np.dtype([(f, d) for f, d in zip(FIELDS, self.dtypes)])

    @property
    def record_size(self) -> int:
        return self.record_dtype.itemsize

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "header_bytes": self.header_bytes,
            "fields": [{"name": f, "dtype": d, "scale": s} for f, d, s in zip(FIELDS, self.dtypes, self.scale)],
        }


# Scale factors are placeholders (1.0): vendors do not publish them in a
# form we can ship.  Override with load_schema().
REGISTRY: dict[str, ImuBinarySchema] = {
    name: ImuBinarySchema(name) for name in ("IMAR", "LN200", "LN200IG", "IXSEA", "NAVCHIP_FLT")
}
REGISTRY["NAVCHIP_INT"] = ImuBinarySchema("NAVCHIP_INT", ("<f8",) + ("<i4",) * 6)


def get_schema(name: str) -> ImuBinarySchema:
    try:
        return REGISTRY[name.upper()]
    except KeyError:
        raise DataError(f"unknown imu_type {name!r}; known: {', '.join(sorted(REGISTRY))}") from None


def load_schema(path: str | Path) -> ImuBinarySchema:
    """Schema from a JSON file (format in ``docs/formats.md``)."""
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise DataError(f"cannot read schema {path}: {e}") from None
    base = get_schema(cfg["base"]) if "base" in cfg else ImuBinarySchema(cfg.get("name", "CUSTOM"))
    dtypes, scale = list(base.dtypes), list(base.scale)
    for f in cfg.get("fields", []):
        try:
            i = FIELDS.index(f["name"])
        except (KeyError, ValueError):
            raise DataError(f"bad field entry {f!r}") from None
        dtypes[i] = f.get("dtype", dtypes[i])
        scale[i] = float(f.get("scale", scale[i]))
    try:
        return ImuBinarySchema(cfg.get("name", base.name), tuple(dtypes), tuple(scale), int(cfg.get("header_bytes", base.header_bytes)))
    except TypeError as e:
        raise DataError(str(e)) from None


def read_imu_binary(path: str | Path, schema: ImuBinarySchema | str, freq: float = 1.0) -> SensorDataset:
    """Read a binary log into a dataset with channels gyro X/Y/Z and accel X/Y/Z."""
    if isinstance(schema, str):
        schema = get_schema(schema)
    raw = Path(path).read_bytes()
    body = raw[schema.header_bytes :]
    if len(raw) < schema.header_bytes or len(body) % schema.record_size:
        raise DataError(f"{path}: truncated file ({len(body)} bytes is not a multiple of the {schema.record_size}-byte record)")
    if not body:
        raise DataError(f"{path}: no records")
    rec = np.frombuffer(body, dtype=schema.record_dtype)
    cols = [rec[f].astype(np.float64) * s if s != 1.0 else rec[f].astype(np.float64) for f, s in zip(FIELDS, schema.scale)]
    if not all(np.all(np.isfinite(c)) for c in cols):
        raise DataError(f"{path}: non-finite values after scaling")
    chans = [Channel(f.split("_")[0], f.split("_")[1].upper(), c, f) for f, c in zip(FIELDS[1:], cols[1:])]
    return SensorDataset(tuple(chans), freq, cols[0], {"path": str(path), "imu_type": schema.name})


def write_imu_binary(path: str | Path, dataset: SensorDataset, schema: ImuBinarySchema | str, header: bytes | None = None) -> None:
    """Write ``dataset`` (gyro X/Y/Z, accel X/Y/Z and time) in ``schema``'s layout."""
    if isinstance(schema, str):
        schema = get_schema(schema)
    n = len(dataset)
    time = dataset.time if dataset.time is not None else np.arange(n) / dataset.freq
    cols = [time] + [dataset.channel(f"{k}:{a}").samples for k in ("gyro", "accel") for a in "XYZ"]
    rec = np.empty(n, dtype=schema.record_dtype)
    for f, c, d, s in zip(FIELDS, cols, schema.dtypes, schema.scale):
        v = c / s if s != 1.0 else c
        if np.dtype(d).kind in "iu":
            v = np.rint(v)
        rec[f] = v
    head = header if header is not None else b"\0" * schema.header_bytes
    if len(head) != schema.header_bytes:
        raise DataError("header length does not match the schema")
    Path(path).write_bytes(head + rec.tobytes())


# -- tables ------------------------------------------------------------------------


def parse_columns(spec: str | Sequence[int] | None) -> list[int] | None:
    """1-based column list from ``"1:3"``, ``"1,2,5"`` or a sequence."""
    if spec is None:
        return None
    if isinstance(spec, str):
        out: list[int] = []
        for part in spec.split(","):
            part = part.strip()
            if ":" in part:
                a, b = part.split(":")
                out.extend(range(int(a), int(b) + 1))
            elif part:
                out.append(int(part))
        spec = out
    cols = [int(c) for c in spec]
    if any(c < 1 for c in cols):
        raise DataError("column numbers start at 1")
    return cols


def _rows(text: str, delimiter: str | None) -> list[list[str]]:
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise DataError("empty table")
    if delimiter is None:
        first = lines[0]
        delimiter = "\t" if "\t" in first else ("," if "," in first else ";" if ";" in first else " ")
    if delimiter == " ":
        return [ln.split() for ln in lines]
    return [[c.strip() for c in r] for r in csv.reader(io.StringIO("\n".join(lines)), delimiter=delimiter)]


def _is_number(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False


def read_table(
    source: str | Path | io.TextIOBase,
    delimiter: str | None = None,
    header: bool | None = None,
    freq: float = 1.0,
    gyro_cols: str | Sequence[int] | None = None,
    accel_cols: str | Sequence[int] | None = None,
) -> SensorDataset:
    """Read a delimited numeric table.

    Columns named in ``gyro_cols`` / ``accel_cols`` (1-based) become gyro
    and accel channels with axes X, Y, Z in the given order.  With neither
    given, every column becomes a ``signal`` channel whose axis is its
    1-based column number.  ``header=None`` detects a non-numeric first row.
    Lines starting with ``#`` are comments.
    """
    if hasattr(source, "read"):
        text, origin = source.read(), "<stream>"  # type: ignore[union-attr]
    else:
        try:
            text, origin = Path(source).read_text(), str(source)
        except OSError as e:
            raise DataError(str(e)) from None
    rows = _rows(text, delimiter)
    if header is None:
        header = not all(_is_number(c) for c in rows[0])
    names = rows[0] if header else []
    body = rows[1:] if header else rows
    if not body:
        raise DataError("table has no data rows")
    width = len(body[0])
    for i, r in enumerate(body):
        if len(r) != width:
            raise DataError(f"ragged row {i + 1}: {len(r)} cells, expected {width}")
    try:
        data = np.array([[float(c) for c in r] for r in body], dtype=np.float64)
    except ValueError as e:
        raise DataError(f"non-numeric cell: {e}") from None
    gyro, accel = parse_columns(gyro_cols), parse_columns(accel_cols)
    spec: list[tuple[str, str, int]] = []
    axes = "XYZ"
    for kind, cols in (("gyro", gyro), ("accel", accel)):
        for k, c in enumerate(cols or []):
            spec.append((kind, axes[k] if k < 3 else str(k + 1), c))
    if not spec:
        spec = [("signal", str(c + 1), c + 1) for c in range(width)]
    chans = []
    for kind, axis, c in spec:
        if c > width:
            raise DataError(f"column {c} out of range (table has {width})")
        name = names[c - 1] if names else ""
        chans.append(Channel(kind, axis, data[:, c - 1].copy(), name))
    return SensorDataset(tuple(chans), float(freq), None, {"path": origin, "header": list(names)})


def write_table(path_or_stream, columns: Iterable[tuple[str, np.ndarray]], comment: str | None = None) -> None:
    """Write named columns as CSV with full float precision."""
    cols = list(columns)
    buf = io.StringIO()
    if comment:
        buf.write(f"# {comment}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([n for n, _ in cols])
    for row in zip(*[c for _, c in cols]):
        w.writerow([repr(float(v)) for v in row])
    if hasattr(path_or_stream, "write"):
        path_or_stream.write(buf.getvalue())
    else:
        Path(path_or_stream).write_text(buf.getvalue())
