"""Grid-based volume types, the CVOL file format, and dataset manifests.

All voxel grids share a :class:`GridMeta` describing dimensions, spacing,
world origin and the hemisphere midline. Volumes are stored on disk in the
CVOL format: a single UTF-8 header line followed by a raw little-endian
payload in x-fastest order (then y, z, then channel/frame). The format is
fully self-describing so files round-trip bit-exactly.

Volume objects are treated as immutable after construction and are safe to
share across threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CVOL_MAGIC = "CVOL1"

_DTYPES = {
    "u8": np.dtype("<u1"),
    "i32": np.dtype("<i4"),
    "f32": np.dtype("<f4"),
}


class FormatError(ValueError):
    """Raised when a CVOL or manifest file violates the format contract."""


@dataclass(frozen=True)
class GridMeta:
    """Geometry of a voxel grid.

    Parameters
    ----------
    dims : tuple of int
        Voxel counts (nx, ny, nz), all >= 1.
    spacing : tuple of float
        Voxel size in millimeters per axis, all > 0.
    origin : tuple of float
        World coordinate (mm) of the center of voxel (0, 0, 0).
    midline_x : float
        World x-coordinate separating the hemispheres. A voxel is in the
        left hemisphere iff its world x is strictly below this value.
    """

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)
    midline_x: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))
        object.__setattr__(self, "midline_x", float(self.midline_x))
        if len(self.dims) != 3 or any(d < 1 for d in self.dims):
            raise ValueError(f"dims must be three positive integers, got {self.dims}")
        if len(self.spacing) != 3 or any(s <= 0 for s in self.spacing):
            raise ValueError(f"spacing must be three positive reals, got {self.spacing}")
        if len(self.origin) != 3:
            raise ValueError(f"origin must have three components, got {self.origin}")

    @property
    def num_voxels(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz

    @property
    def voxel_volume_mm3(self) -> float:
        sx, sy, sz = self.spacing
        return sx * sy * sz

    def world_x(self, x_index) -> np.ndarray:
        """World x-coordinate (mm) of voxels at the given x index."""
        return self.origin[0] + np.asarray(x_index, dtype=float) * self.spacing[0]

    def left_of_midline(self, x_index) -> np.ndarray:
        """True where voxels at x index lie in the left hemisphere."""
        return self.world_x(x_index) < self.midline_x

    def voxel_coords_mm(self, voxels: np.ndarray) -> np.ndarray:
        """World coordinates (mm) for an (n, 3) array of voxel indices."""
        v = np.asarray(voxels, dtype=float)
        return np.asarray(self.origin) + v * np.asarray(self.spacing)


def linear_index(meta: GridMeta, x, y, z):
    """Map (x, y, z) voxel coordinates to the x-fastest linear index."""
    nx, ny, _ = meta.dims
    return np.asarray(x) + nx * (np.asarray(y) + ny * np.asarray(z))


def voxel_coords(meta: GridMeta, index):
    """Inverse of :func:`linear_index`."""
    nx, ny, _ = meta.dims
    idx = np.asarray(index)
    x = idx % nx
    y = (idx // nx) % ny
    z = idx // (nx * ny)
    return x, y, z


def _check_data_shape(meta: GridMeta, data: np.ndarray, channels: int | None):
    expect = meta.dims if channels is None else meta.dims + (channels,)
    if data.shape != expect:
        raise ValueError(f"data shape {data.shape} does not match grid {expect}")


@dataclass(frozen=True)
class MaskVolume:
    """Boolean voxel mask over a grid."""

    meta: GridMeta
    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", np.asarray(self.data, dtype=bool))
        _check_data_shape(self.meta, self.data, None)

    @property
    def num_true(self) -> int:
        return int(self.data.sum())


@dataclass(frozen=True)
class LabelVolume:
    """Integer parcel labels per voxel; 0 is background.

    Labels must form the contiguous set {0..R} (background optional) with
    every region 1..R occupied, where R = ``num_regions``.
    """

    meta: GridMeta
    data: np.ndarray
    num_regions: int

    def __post_init__(self):
        data = np.asarray(self.data)
        if not np.issubdtype(data.dtype, np.integer):
            raise ValueError("label data must be integral")
        object.__setattr__(self, "data", data.astype(np.int32, copy=False))
        object.__setattr__(self, "num_regions", int(self.num_regions))
        _check_data_shape(self.meta, self.data, None)
        if self.num_regions < 1:
            raise ValueError("num_regions must be positive")
        present = np.unique(self.data)
        if present.min() < 0 or present.max() > self.num_regions:
            raise ValueError(
                f"labels must lie in 0..{self.num_regions}, found range "
                f"[{present.min()}, {present.max()}]"
            )
        wanted = np.arange(1, self.num_regions + 1)
        if not np.isin(wanted, present).all():
            missing = wanted[~np.isin(wanted, present)]
            raise ValueError(f"regions with no voxels: {missing.tolist()}")

    def support(self) -> MaskVolume:
        """Mask of voxels carrying a nonzero label."""
        return MaskVolume(self.meta, self.data > 0)


@dataclass(frozen=True)
class BoldVolume:
    """A subject's 4D time series: one real value per (voxel, frame)."""

    meta: GridMeta
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 4:
            raise ValueError("bold data must be 4D (nx, ny, nz, T)")
        if not np.issubdtype(data.dtype, np.floating):
            data = data.astype(np.float32)
        object.__setattr__(self, "data", data)
        _check_data_shape(self.meta, data, data.shape[3])
        if data.shape[3] < 2:
            raise ValueError("bold volume needs at least 2 frames")
        if not np.isfinite(data).all():
            raise ValueError("bold volume contains non-finite values")

    @property
    def num_frames(self) -> int:
        return self.data.shape[3]


@dataclass(frozen=True)
class FingerprintVolume:
    """Per-voxel connectivity fingerprints: one channel per target region.

    Entries are correlations in [-1, 1], zero outside the generating mask.
    ``mask`` is optional metadata (it is not serialized); ``degenerate`` marks
    masked voxels whose series had zero variance.
    """

    meta: GridMeta
    data: np.ndarray
    mask: MaskVolume | None = None
    degenerate: np.ndarray | None = None

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 4:
            raise ValueError("fingerprint data must be 4D (nx, ny, nz, R)")
        if not np.issubdtype(data.dtype, np.floating):
            data = data.astype(np.float32)
        object.__setattr__(self, "data", data)
        _check_data_shape(self.meta, data, data.shape[3])
        if not np.isfinite(data).all():
            raise ValueError("fingerprints contain non-finite values")
        lo, hi = float(data.min(initial=0.0)), float(data.max(initial=0.0))
        if lo < -1.0 or hi > 1.0:
            raise ValueError(f"fingerprints outside [-1, 1]: range [{lo}, {hi}]")
        if self.mask is not None and np.any(self.data[~self.mask.data] != 0):
            raise ValueError("fingerprints must be zero outside the mask")

    @property
    def num_channels(self) -> int:
        return self.data.shape[3]


Volume = MaskVolume | LabelVolume | BoldVolume | FingerprintVolume


def _format_floats(values) -> str:
    return ",".join(repr(float(v)) for v in values)


def _header_line(dtype: str, meta: GridMeta, channels: int) -> str:
    fields = [
        CVOL_MAGIC,
        f"dtype={dtype}",
        "dims=" + ",".join(str(d) for d in meta.dims),
        f"channels={channels}",
        "spacing=" + _format_floats(meta.spacing),
        "origin=" + _format_floats(meta.origin),
        f"midline_x={meta.midline_x!r}",
    ]
    return " ".join(fields) + "\n"


def write_volume(path, volume: Volume) -> None:
    """Write a volume to ``path`` in CVOL format.

    The payload is little-endian, x-fastest (then y, z, then channel).
    Masks are stored as u8, labels as i32, real volumes as f32.
    """
    path = Path(path)
    if isinstance(volume, MaskVolume):
        dtype, arr, channels = "u8", volume.data.astype(np.uint8), 1
    elif isinstance(volume, LabelVolume):
        dtype, arr, channels = "i32", volume.data.astype(np.int32), 1
    elif isinstance(volume, (BoldVolume, FingerprintVolume)):
        if not np.isfinite(volume.data).all():
            raise ValueError("refusing to write non-finite real volume")
        dtype, arr = "f32", volume.data.astype(np.float32)
        channels = arr.shape[3]
    else:
        raise TypeError(f"unsupported volume type {type(volume).__name__}")
    header = _header_line(dtype, volume.meta, channels)
    payload = np.ascontiguousarray(arr.T).astype(_DTYPES[dtype]).tobytes()
    with open(path, "wb") as fh:
        fh.write(header.encode("utf-8"))
        fh.write(payload)


def _parse_header(line: str) -> dict:
    tokens = line.strip().split()
    if not tokens or tokens[0] != CVOL_MAGIC:
        raise FormatError(f"bad magic, expected {CVOL_MAGIC!r}")
    fields: dict[str, str] = {}
    for token in tokens[1:]:
        if "=" not in token:
            raise FormatError(f"malformed header token {token!r}")
        key, value = token.split("=", 1)
        if key in fields:
            raise FormatError(f"duplicate header field {key!r}")
        fields[key] = value
    required = {"dtype", "dims", "channels", "spacing", "origin", "midline_x"}
    missing = required - fields.keys()
    if missing:
        raise FormatError(f"missing header fields: {sorted(missing)}")
    unknown = fields.keys() - required
    if unknown:
        raise FormatError(f"unknown header fields: {sorted(unknown)}")
    return fields


def read_volume_meta(path) -> tuple[GridMeta, str, int]:
    """Read only the CVOL header: returns (meta, dtype name, channels)."""
    with open(path, "rb") as fh:
        line = fh.readline(4096)
    if not line.endswith(b"\n"):
        raise FormatError("header line missing or unterminated")
    fields = _parse_header(line.decode("utf-8"))
    if fields["dtype"] not in _DTYPES:
        raise FormatError(f"unknown dtype {fields['dtype']!r}")
    try:
        dims = tuple(int(v) for v in fields["dims"].split(","))
        channels = int(fields["channels"])
        spacing = tuple(float(v) for v in fields["spacing"].split(","))
        origin = tuple(float(v) for v in fields["origin"].split(","))
        midline_x = float(fields["midline_x"])
    except ValueError as exc:
        raise FormatError(f"unparseable header value: {exc}") from exc
    if len(dims) != 3 or any(d < 1 for d in dims):
        raise FormatError(f"invalid dims {dims}")
    if channels < 1:
        raise FormatError(f"invalid channel count {channels}")
    try:
        meta = GridMeta(dims, spacing, origin, midline_x)
    except ValueError as exc:
        raise FormatError(str(exc)) from exc
    return meta, fields["dtype"], channels


def _read_array(path) -> tuple[GridMeta, str, np.ndarray]:
    """Read header and payload; returns (meta, dtype name, (nx,ny,nz,C) array)."""
    meta, dtype, channels = read_volume_meta(path)
    with open(path, "rb") as fh:
        fh.readline(4096)
        payload = fh.read()
    np_dtype = _DTYPES[dtype]
    expected = meta.num_voxels * channels * np_dtype.itemsize
    if len(payload) != expected:
        raise FormatError(
            f"payload size mismatch: expected {expected} bytes, got {len(payload)}"
        )
    flat = np.frombuffer(payload, dtype=np_dtype)
    nx, ny, nz = meta.dims
    arr = flat.reshape(channels, nz, ny, nx).T  # x-fastest on disk
    return meta, dtype, arr


def read_real_volume(path) -> tuple[GridMeta, np.ndarray]:
    """Read an f32 CVOL payload without imposing a volume-kind contract.

    Used for derived artifacts (connectivity matrices, saliency maps) that
    reuse the container but are not one of the four grid volume kinds.
    """
    meta, dtype, arr = _read_array(path)
    if dtype != "f32":
        raise FormatError(f"expected f32 payload, found {dtype}")
    return meta, np.ascontiguousarray(arr)


def write_real_array(path, meta: GridMeta, data: np.ndarray) -> None:
    """Write an (nx, ny, nz, C) or (nx, ny, nz) real array as an f32 CVOL."""
    arr = np.asarray(data, dtype=np.float32)
    if arr.ndim == 3:
        arr = arr[..., None]
    if not np.isfinite(arr).all():
        raise ValueError("refusing to write non-finite real volume")
    _check_data_shape(meta, arr, arr.shape[3])
    header = _header_line("f32", meta, arr.shape[3])
    with open(path, "wb") as fh:
        fh.write(header.encode("utf-8"))
        fh.write(np.ascontiguousarray(arr.T).tobytes())


def read_volume(path, kind: str | None = None) -> Volume:
    """Read a CVOL file, validating header and payload size.

    The volume kind is inferred from the stored dtype (u8 mask, i32 labels,
    f32 time series). Pass ``kind='fingerprint'`` to interpret an f32 file
    as a :class:`FingerprintVolume` instead of a :class:`BoldVolume`.
    """
    path = Path(path)
    meta, dtype, arr = _read_array(path)
    channels = arr.shape[3]
    if dtype == "u8":
        if channels != 1:
            raise FormatError("mask volumes must have a single channel")
        if not np.isin(arr, (0, 1)).all():
            raise FormatError("mask payload must contain only 0/1")
        return MaskVolume(meta, arr[..., 0].astype(bool))
    if dtype == "i32":
        if channels != 1:
            raise FormatError("label volumes must have a single channel")
        labels = np.ascontiguousarray(arr[..., 0])
        num_regions = int(labels.max(initial=0))
        if num_regions < 1:
            raise FormatError("label volume has no nonzero labels")
        try:
            return LabelVolume(meta, labels, num_regions)
        except ValueError as exc:
            raise FormatError(str(exc)) from exc
    arr = np.ascontiguousarray(arr)
    if kind == "fingerprint":
        try:
            return FingerprintVolume(meta, arr)
        except ValueError as exc:
            raise FormatError(str(exc)) from exc
    try:
        return BoldVolume(meta, arr)
    except ValueError as exc:
        raise FormatError(str(exc)) from exc


@dataclass(frozen=True)
class SubjectRecord:
    """One subject: id, path to its BOLD file, a label or an age, optional FD."""

    id: str
    bold_path: Path
    label: int | None = None
    age: float | None = None
    fd: np.ndarray | None = None


@dataclass(frozen=True)
class Manifest:
    """A dataset: shared grid, task kind, and subject records."""

    task: str
    grid: GridMeta
    subjects: tuple[SubjectRecord, ...]
    path: Path | None = field(default=None, compare=False)

    def labels(self) -> np.ndarray:
        if self.task != "classification":
            raise ValueError("labels() requires a classification manifest")
        return np.array([s.label for s in self.subjects], dtype=int)

    def ages(self) -> np.ndarray:
        if self.task != "regression":
            raise ValueError("ages() requires a regression manifest")
        return np.array([s.age for s in self.subjects], dtype=float)

    def targets(self) -> np.ndarray:
        return self.labels() if self.task == "classification" else self.ages()


def grid_from_dict(d: dict) -> GridMeta:
    return GridMeta(
        tuple(d["dims"]),
        tuple(d["spacing"]),
        tuple(d["origin"]),
        float(d.get("midline_x", 0.0)),
    )


def grid_to_dict(meta: GridMeta) -> dict:
    return {
        "dims": list(meta.dims),
        "spacing": list(meta.spacing),
        "origin": list(meta.origin),
        "midline_x": meta.midline_x,
    }


def read_manifest(path) -> Manifest:
    """Load a JSON manifest and validate every invariant.

    Relative bold paths are resolved against the manifest's directory.
    Each subject's bold header must exist and match the declared grid.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text("utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"manifest is not valid JSON: {exc}") from exc
    task = doc.get("task")
    if task not in ("classification", "regression"):
        raise FormatError(f"task must be classification or regression, got {task!r}")
    grid = grid_from_dict(doc["grid"])
    raw_subjects = doc.get("subjects", [])
    if len(raw_subjects) < 2:
        raise FormatError("manifest needs at least 2 subjects")
    subjects = []
    for entry in raw_subjects:
        sid = str(entry["id"])
        bold = Path(entry["bold"])
        if not bold.is_absolute():
            bold = path.parent / bold
        if not bold.exists():
            raise FormatError(f"bold file for subject {sid} missing: {bold}")
        meta, dtype, channels = read_volume_meta(bold)
        if dtype != "f32":
            raise FormatError(f"subject {sid}: bold file must be f32")
        if meta != grid:
            raise FormatError(
                f"subject {sid}: grid mismatch between manifest and {bold.name}"
            )
        has_label = "label" in entry
        has_age = "age" in entry
        if task == "classification":
            if not has_label or has_age:
                raise FormatError(f"subject {sid}: classification needs 'label' only")
            label = int(entry["label"])
            if label not in (-1, 1):
                raise FormatError(f"subject {sid}: label must be -1 or +1")
            age = None
        else:
            if not has_age or has_label:
                raise FormatError(f"subject {sid}: regression needs 'age' only")
            age = float(entry["age"])
            if not np.isfinite(age):
                raise FormatError(f"subject {sid}: age must be finite")
            label = None
        fd = None
        if "fd" in entry and entry["fd"] is not None:
            fd = np.asarray(entry["fd"], dtype=float)
            if fd.shape != (channels,):
                raise FormatError(
                    f"subject {sid}: fd length {fd.size} != frame count {channels}"
                )
        subjects.append(SubjectRecord(sid, bold, label, age, fd))
    if task == "classification":
        present = {s.label for s in subjects}
        if present != {-1, 1}:
            raise FormatError("classification manifest must contain both classes")
    return Manifest(task, grid, tuple(subjects), path)


def write_manifest(path, manifest: Manifest) -> None:
    """Write a manifest as JSON; bold paths are stored relative when possible."""
    path = Path(path)
    subjects = []
    for s in manifest.subjects:
        entry: dict = {"id": s.id}
        bold = Path(s.bold_path)
        try:
            entry["bold"] = str(bold.relative_to(path.parent))
        except ValueError:
            entry["bold"] = str(bold)
        if manifest.task == "classification":
            entry["label"] = int(s.label)
        else:
            entry["age"] = float(s.age)
        if s.fd is not None:
            entry["fd"] = [float(v) for v in s.fd]
        subjects.append(entry)
    doc = {
        "task": manifest.task,
        "grid": grid_to_dict(manifest.grid),
        "subjects": subjects,
    }
    path.write_text(json.dumps(doc, indent=1) + "\n", "utf-8")
