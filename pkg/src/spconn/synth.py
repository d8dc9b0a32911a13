"""Synthetic multi-subject BOLD datasets with planted connectivity signal.

Each subject gets two latent region signals whose correlation rho is
controlled: voxels inside blob A carry signal s_A plus voxel noise, blob B
carries s_B = rho * s_A + sqrt(1 - rho^2) * e, and all other voxels are
unit Gaussian noise. For classification rho depends on the group; for
regression the target is an affine function of the subject's rho plus
Gaussian noise, so the irreducible (Bayes-optimal) RMSE equals the planted
noise standard deviation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .volume_io import (
    BoldVolume,
    GridMeta,
    Manifest,
    MaskVolume,
    SubjectRecord,
    write_manifest,
    write_volume,
)


@dataclass(frozen=True)
class SynthConfig:
    """Generator settings; defaults keep a full pipeline run desk-sized."""

    task: str = "classification"
    dims: tuple[int, int, int] = (24, 24, 24)
    spacing: tuple[float, float, float] = (3.0, 3.0, 3.0)
    num_frames: int = 150
    n_per_group: int = 20          # classification: subjects per class
    n_subjects: int = 40           # regression: total subjects
    mask_radius_frac: float = 0.45
    blob_radius_mm: float = 9.0
    blob_offset_mm: float = 18.0
    noise_sd: float = 0.3
    rho_pos: float = 0.3           # classification: positive-class coupling
    rho_neg: float = -0.3          # classification: negative-class coupling
    rho_range: tuple[float, float] = (-0.5, 0.5)  # regression: subject coupling
    age_base: float = 12.0
    age_scale: float = 20.0
    age_noise_sd: float = 3.0
    seed: int = 0

    def __post_init__(self):
        if self.task not in ("classification", "regression"):
            raise ValueError(f"unknown task {self.task!r}")
        if self.num_frames < 2:
            raise ValueError("need at least 2 frames")
        for rho in (self.rho_pos, self.rho_neg, *self.rho_range):
            if not -1.0 < rho < 1.0:
                raise ValueError("couplings must lie strictly inside (-1, 1)")
        if self.noise_sd < 0 or self.age_noise_sd < 0:
            raise ValueError("noise levels must be non-negative")


@dataclass(frozen=True)
class SynthSubject:
    id: str
    rho: float
    label: int | None = None
    age: float | None = None


@dataclass(frozen=True)
class SynthDataset:
    cfg: SynthConfig
    grid: GridMeta
    mask: MaskVolume
    subjects: tuple[SynthSubject, ...]
    bolds: tuple[BoldVolume, ...] = field(repr=False)

    def targets(self) -> np.ndarray:
        if self.cfg.task == "classification":
            return np.array([s.label for s in self.subjects], dtype=int)
        return np.array([s.age for s in self.subjects], dtype=float)


def grid_for(cfg: SynthConfig) -> GridMeta:
    """Grid centered on the world origin so midline_x = 0 splits hemispheres."""
    origin = tuple(-(d - 1) / 2.0 * s for d, s in zip(cfg.dims, cfg.spacing))
    return GridMeta(cfg.dims, cfg.spacing, origin, midline_x=0.0)


def _coords_mm(grid: GridMeta) -> np.ndarray:
    axes = [grid.origin[i] + np.arange(grid.dims[i]) * grid.spacing[i]
            for i in range(3)]
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    return np.stack([gx, gy, gz], axis=-1)


def gray_mask(cfg: SynthConfig) -> MaskVolume:
    """Ball-shaped gray-matter stand-in centered on the grid."""
    grid = grid_for(cfg)
    coords = _coords_mm(grid)
    extent = min(d * s for d, s in zip(cfg.dims, cfg.spacing))
    radius = cfg.mask_radius_frac * extent
    inside = (coords ** 2).sum(axis=-1) <= radius ** 2
    return MaskVolume(grid, inside)


def blob_masks(cfg: SynthConfig) -> tuple[np.ndarray, np.ndarray]:
    """Boolean voxel masks of the two planted signal regions (A left, B right)."""
    grid = grid_for(cfg)
    coords = _coords_mm(grid)
    a_center = np.array([-cfg.blob_offset_mm, 0.0, 0.0])
    b_center = np.array([cfg.blob_offset_mm, 0.0, 0.0])
    blob_a = ((coords - a_center) ** 2).sum(axis=-1) <= cfg.blob_radius_mm ** 2
    blob_b = ((coords - b_center) ** 2).sum(axis=-1) <= cfg.blob_radius_mm ** 2
    mask = gray_mask(cfg).data
    if np.any(blob_a & blob_b):
        raise ValueError("signal blobs overlap")
    if np.any(blob_a & ~mask) or np.any(blob_b & ~mask):
        raise ValueError("signal blobs fall outside the gray mask")
    if not blob_a.any() or not blob_b.any():
        raise ValueError("signal blobs are empty")
    return blob_a, blob_b


def _subject_plan(cfg: SynthConfig) -> list[SynthSubject]:
    """Deterministic subject list with planted couplings and targets."""
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xA5]))
    subjects = []
    if cfg.task == "classification":
        n = 2 * cfg.n_per_group
        for i in range(n):
            label = 1 if i < cfg.n_per_group else -1
            rho = cfg.rho_pos if label == 1 else cfg.rho_neg
            subjects.append(SynthSubject(f"s{i:03d}", rho, label=label))
    else:
        lo, hi = cfg.rho_range
        for i in range(cfg.n_subjects):
            rho = float(rng.uniform(lo, hi))
            age = cfg.age_base + cfg.age_scale * rho \
                + cfg.age_noise_sd * float(rng.standard_normal())
            subjects.append(SynthSubject(f"s{i:03d}", rho, age=age))
    return subjects


def subject_bold(cfg: SynthConfig, index: int, rho: float) -> BoldVolume:
    """Generate one subject's BOLD volume from its derived seed."""
    grid = grid_for(cfg)
    blob_a, blob_b = blob_masks(cfg)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1, index]))
    t = cfg.num_frames
    s_a = rng.standard_normal(t)
    s_b = rho * s_a + np.sqrt(1.0 - rho ** 2) * rng.standard_normal(t)
    data = rng.standard_normal(cfg.dims + (t,), dtype=np.float32)
    data[blob_a] = (s_a[None, :] + cfg.noise_sd * data[blob_a]).astype(np.float32)
    data[blob_b] = (s_b[None, :] + cfg.noise_sd * data[blob_b]).astype(np.float32)
    return BoldVolume(grid, data)


def iter_subjects(cfg: SynthConfig):
    """Yield (SynthSubject, BoldVolume) pairs without holding the dataset."""
    for i, subject in enumerate(_subject_plan(cfg)):
        yield subject, subject_bold(cfg, i, subject.rho)


def generate(cfg: SynthConfig) -> SynthDataset:
    """Materialize the full dataset in memory."""
    subjects = []
    bolds = []
    for subject, bold in iter_subjects(cfg):
        subjects.append(subject)
        bolds.append(bold)
    return SynthDataset(cfg, grid_for(cfg), gray_mask(cfg),
                        tuple(subjects), tuple(bolds))


def truth_record(cfg: SynthConfig) -> dict:
    """Planted-signal descriptor; for regression includes the Bayes RMSE."""
    subjects = _subject_plan(cfg)
    doc: dict = {
        "task": cfg.task,
        "blob_a": {"center_mm": [-cfg.blob_offset_mm, 0.0, 0.0],
                   "radius_mm": cfg.blob_radius_mm},
        "blob_b": {"center_mm": [cfg.blob_offset_mm, 0.0, 0.0],
                   "radius_mm": cfg.blob_radius_mm},
        "noise_sd": cfg.noise_sd,
        "rho": {s.id: s.rho for s in subjects},
        "seed": cfg.seed,
    }
    if cfg.task == "classification":
        doc["rho_pos"] = cfg.rho_pos
        doc["rho_neg"] = cfg.rho_neg
    else:
        doc["age_base"] = cfg.age_base
        doc["age_scale"] = cfg.age_scale
        doc["age_noise_sd"] = cfg.age_noise_sd
        # With age = affine(rho) + noise, no predictor can beat the noise sd.
        doc["bayes_rmse"] = cfg.age_noise_sd
        doc["age"] = {s.id: s.age for s in subjects}
    return doc


def write_dataset(cfg: SynthConfig, out_dir) -> Manifest:
    """Stream the dataset to disk: CVOL volumes, manifest, mask and truth."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = []
    for subject, bold in iter_subjects(cfg):
        bold_path = out_dir / f"{subject.id}_bold.cvol"
        write_volume(bold_path, bold)
        records.append(SubjectRecord(subject.id, bold_path,
                                     label=subject.label, age=subject.age))
    manifest = Manifest(cfg.task, grid_for(cfg), tuple(records))
    write_manifest(out_dir / "manifest.json", manifest)
    write_volume(out_dir / "gray_mask.cvol", gray_mask(cfg))
    (out_dir / "truth.json").write_text(
        json.dumps(truth_record(cfg), indent=1, sort_keys=True) + "\n", "utf-8")
    return manifest
