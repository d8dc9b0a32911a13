"""Connectivity feature extraction: scrubbing, ROI series, correlation
matrices and voxel-level fingerprint volumes.

All correlations are computed with 64-bit accumulation and clamped to
[-1, 1]; series with zero variance correlate to 0 and are flagged as
degenerate so downstream tensors stay finite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .validation import check_grids_match, check_same_length
from .volume_io import (
    BoldVolume,
    FingerprintVolume,
    GridMeta,
    LabelVolume,
    MaskVolume,
    read_real_volume,
    write_real_array,
)

FD_THRESHOLD_MM = 0.5
PSD_TOLERANCE = 1e-6


@dataclass(frozen=True)
class RoiTimeSeries:
    """Mean signal per region over time, shape (R, T)."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        object.__setattr__(self, "data", data)
        if data.ndim != 2:
            raise ValueError("ROI series must be 2D (R, T)")
        if data.shape[1] < 2:
            raise ValueError("ROI series needs at least 2 frames")
        if not np.isfinite(data).all():
            raise ValueError("ROI series contains non-finite values")

    @property
    def num_regions(self) -> int:
        return self.data.shape[0]

    @property
    def num_frames(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class ConnectivityMatrix:
    """Symmetric R x R Pearson matrix with unit diagonal, PSD up to 1e-6."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ValueError("connectivity matrix must be square")
        if not np.isfinite(values).all():
            raise ValueError("connectivity matrix contains non-finite values")
        if values.min() < -1.0 or values.max() > 1.0:
            raise ValueError("connectivity entries must lie in [-1, 1]")
        if not np.allclose(values, values.T, atol=0.0):
            raise ValueError("connectivity matrix must be symmetric")
        if not np.all(np.diag(values) == 1.0):
            raise ValueError("connectivity diagonal must be exactly 1")
        eigmin = float(np.linalg.eigvalsh(values).min())
        if eigmin < -PSD_TOLERANCE:
            raise ValueError(f"matrix not PSD within tolerance (lambda_min={eigmin:g})")

    @property
    def num_regions(self) -> int:
        return self.values.shape[0]


def scrub(bold: BoldVolume, fd: np.ndarray,
          threshold_mm: float = FD_THRESHOLD_MM) -> BoldVolume:
    """Drop motion-contaminated frames from a BOLD volume.

    Every frame whose framewise displacement exceeds the threshold is
    removed together with the frame before it and the two frames after it
    (clipped at the run boundaries); surviving frames keep temporal order.
    """
    fd = np.asarray(fd, dtype=float).ravel()
    t = bold.num_frames
    if fd.size != t:
        raise ValueError(f"fd length {fd.size} does not match frame count {t}")
    keep = scrub_mask(fd, threshold_mm)
    if keep.sum() < 2:
        raise ValueError("fewer than 2 frames survive scrubbing")
    return BoldVolume(bold.meta, bold.data[..., keep])


def scrub_mask(fd: np.ndarray, threshold_mm: float = FD_THRESHOLD_MM) -> np.ndarray:
    """Boolean keep-mask implementing the one-before/two-after removal rule."""
    fd = np.asarray(fd, dtype=float).ravel()
    drop = np.zeros(fd.size, dtype=bool)
    for f in np.flatnonzero(fd > threshold_mm):
        drop[max(f - 1, 0):min(f + 3, fd.size)] = True
    return ~drop


def roi_series(bold: BoldVolume, labels: LabelVolume) -> RoiTimeSeries:
    """Average the BOLD signal over each region's voxels, per frame."""
    check_grids_match("bold", bold.meta, "labels", labels.meta)
    flat_labels = labels.data.ravel()
    flat_bold = bold.data.reshape(-1, bold.num_frames)
    order = np.argsort(flat_labels, kind="stable")
    sorted_labels = flat_labels[order]
    bounds = np.searchsorted(sorted_labels, np.arange(labels.num_regions + 2))
    out = np.empty((labels.num_regions, bold.num_frames), dtype=np.float64)
    for r in range(1, labels.num_regions + 1):
        lo, hi = bounds[r], bounds[r + 1]
        if lo == hi:
            raise ValueError(f"region {r} has no voxels")
        out[r - 1] = flat_bold[order[lo:hi]].mean(axis=0, dtype=np.float64)
    return RoiTimeSeries(out)


def pearson(x, y, return_degenerate: bool = False):
    """Sample Pearson correlation of two equal-length series.

    Computed in 64-bit and clamped to [-1, 1]. If either series has zero
    variance the correlation is defined as 0 and flagged degenerate.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.size != y.size:
        raise ValueError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < 2:
        raise ValueError("series need at least 2 samples")
    xc = x - x.mean()
    yc = y - y.mean()
    nx = np.linalg.norm(xc)
    ny = np.linalg.norm(yc)
    if nx == 0.0 or ny == 0.0:
        return (0.0, True) if return_degenerate else 0.0
    r = float(np.clip(np.dot(xc, yc) / (nx * ny), -1.0, 1.0))
    return (r, False) if return_degenerate else r


def _standardized(data: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Center rows and return (centered rows, row norms)."""
    centered = data - data.mean(axis=1, keepdims=True)
    norms = np.linalg.norm(centered, axis=1)
    return centered, norms


def connectivity_matrix(ts: RoiTimeSeries) -> ConnectivityMatrix:
    """Pairwise Pearson correlation between region series; diagonal forced to 1."""
    centered, norms = _standardized(ts.data)
    safe = np.where(norms > 0.0, norms, 1.0)
    z = centered / safe[:, None]
    values = np.clip(z @ z.T, -1.0, 1.0)
    values[norms == 0.0, :] = 0.0
    values[:, norms == 0.0] = 0.0
    values = (values + values.T) / 2.0
    np.fill_diagonal(values, 1.0)
    return ConnectivityMatrix(values)


def vectorize_upper(matrix: ConnectivityMatrix) -> np.ndarray:
    """Strict upper triangle in row-major order, length R(R-1)/2."""
    r = matrix.num_regions
    iu = np.triu_indices(r, k=1)
    return matrix.values[iu].copy()


def fingerprints(bold: BoldVolume, targets: LabelVolume,
                 mask: MaskVolume) -> FingerprintVolume:
    """Voxel-level connectivity fingerprints against each region's mean signal.

    Channel r at voxel v is the Pearson correlation between v's time series
    and region r's mean series. Voxels outside the mask are zero; masked
    voxels with constant series get all-zero channels and a degenerate flag.
    """
    check_grids_match("bold", bold.meta, "targets", targets.meta)
    check_grids_match("bold", bold.meta, "mask", mask.meta)
    series = roi_series(bold, targets)
    vox_idx = np.flatnonzero(mask.data.ravel())
    flat = bold.data.reshape(-1, bold.num_frames)[vox_idx].astype(np.float64)
    vz, vnorm = _standardized(flat)
    rz, rnorm = _standardized(series.data)
    vsafe = np.where(vnorm > 0.0, vnorm, 1.0)
    rsafe = np.where(rnorm > 0.0, rnorm, 1.0)
    corr = (vz / vsafe[:, None]) @ (rz / rsafe[:, None]).T
    corr[vnorm == 0.0, :] = 0.0
    corr[:, rnorm == 0.0] = 0.0
    np.clip(corr, -1.0, 1.0, out=corr)
    data = np.zeros(bold.meta.dims + (targets.num_regions,), dtype=np.float32)
    data.reshape(-1, targets.num_regions)[vox_idx] = corr.astype(np.float32)
    degenerate = np.zeros(bold.meta.dims, dtype=bool)
    degenerate.ravel()[vox_idx] = vnorm == 0.0
    return FingerprintVolume(bold.meta, data, mask, degenerate)


def matrix_grid(num_regions: int) -> GridMeta:
    """Grid descriptor used to store an R x R matrix in a CVOL container."""
    return GridMeta((num_regions, num_regions, 1))


def write_matrix(path, matrix: ConnectivityMatrix) -> None:
    """Serialize a connectivity matrix as a CVOL file with dims (R, R, 1)."""
    arr = matrix.values.astype(np.float32)[:, :, None]
    write_real_array(path, matrix_grid(matrix.num_regions), arr)


def read_matrix(path) -> ConnectivityMatrix:
    meta, arr = read_real_volume(path)
    if meta.dims[2] != 1 or arr.shape[3] != 1 or meta.dims[0] != meta.dims[1]:
        raise ValueError("file does not hold a square single-channel matrix")
    values = arr[:, :, 0, 0].astype(np.float64)
    values = np.clip((values + values.T) / 2.0, -1.0, 1.0)
    np.fill_diagonal(values, 1.0)
    eigmin = float(np.linalg.eigvalsh(values).min())
    if -1e-4 < eigmin < -PSD_TOLERANCE:
        # f32 storage rounding can push zero eigenvalues of a rank-deficient
        # matrix slightly negative; project back onto the PSD cone and
        # restore the unit diagonal.
        w, q = np.linalg.eigh(values)
        values = (q * np.clip(w, 0.0, None)) @ q.T
        scale = np.sqrt(np.diag(values))
        values = np.clip(values / np.outer(scale, scale), -1.0, 1.0)
        values = (values + values.T) / 2.0
        np.fill_diagonal(values, 1.0)
    return ConnectivityMatrix(values)


def subject_features(bold: BoldVolume, labels: LabelVolume, kind: str,
                     mask: MaskVolume | None = None):
    """One subject's features in the requested representation.

    ``kind`` is 'fingerprint' (FingerprintVolume), 'matrix'
    (ConnectivityMatrix) or 'vector' (upper-triangle feature vector).
    """
    if kind == "fingerprint":
        return fingerprints(bold, labels, mask or labels.support())
    ts = roi_series(bold, labels)
    matrix = connectivity_matrix(ts)
    if kind == "matrix":
        return matrix
    if kind == "vector":
        return vectorize_upper(matrix)
    raise ValueError(f"unknown feature kind {kind!r}")
