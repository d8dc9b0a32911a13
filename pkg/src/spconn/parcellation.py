"""Stochastic parcellation by Poisson disk sampling over a gray-matter mask.

Region centers are drawn per hemisphere with a minimum separation ``d``,
then every masked voxel is assigned to the nearest center of its own
hemisphere, so parcels never cross the midline. ``d`` is estimated from the
requested region count and refined until the realized count lands within
tolerance.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .volume_io import GridMeta, LabelVolume, MaskVolume

# Fraction of the mask volume packed per center at saturation, calibrated so
# that sampling with the analytic d0 lands near the requested region count.
DEFAULT_PACKING_ETA = 0.65


@dataclass(frozen=True)
class SamplingConfig:
    """Knobs for one stochastic parcellation draw.

    ``target_regions`` is the requested region count R; ``annulus_attempts``
    is the number of candidate draws per active center before it retires;
    ``region_tolerance`` is the acceptable relative deviation of the realized
    region count; the radius is rescaled and sampling restarted up to
    ``max_radius_iterations`` times to reach it.
    """

    target_regions: int
    seed: int = 0
    annulus_attempts: int = 30
    region_tolerance: float = 0.05
    max_radius_iterations: int = 20
    packing_eta: float = DEFAULT_PACKING_ETA

    def __post_init__(self):
        if self.target_regions < 1:
            raise ValueError("target_regions must be >= 1")
        if not (0.0 < self.region_tolerance < 1.0):
            raise ValueError("region_tolerance must be in (0, 1)")
        if self.annulus_attempts < 1 or self.max_radius_iterations < 1:
            raise ValueError("attempt and iteration counts must be positive")


@dataclass(frozen=True)
class ParcellationResult:
    labels: LabelVolume
    centers: np.ndarray  # (R_realized, 3) voxel coordinates
    radius_mm: float
    hemispheres: np.ndarray  # 'L'/'R' per center
    target_regions: int
    seed: int
    converged: bool
    parcellation_id: str = field(default="", compare=False)

    @property
    def num_regions(self) -> int:
        return self.labels.num_regions


@dataclass(frozen=True)
class ParcelStats:
    """Parcel volume summary in cm^3."""

    num_regions: int
    counts: np.ndarray
    total_cm3: float
    median_cm3: float
    std_cm3: float
    min_cm3: float
    max_cm3: float


def estimate_radius(mask: MaskVolume, num_regions: int,
                    eta: float = DEFAULT_PACKING_ETA) -> float:
    """Initial disk radius (mm) expected to yield about ``num_regions`` centers.

    Uses d0 = (eta * V / R)^(1/3) where V is the masked volume in mm^3 and
    eta the packing fraction per center.
    """
    n_voxels = mask.num_true
    if n_voxels == 0:
        raise ValueError("mask is empty")
    if num_regions < 1:
        raise ValueError("num_regions must be >= 1")
    if num_regions > n_voxels:
        raise ValueError(
            f"requested {num_regions} regions but mask has only {n_voxels} voxels"
        )
    volume_mm3 = n_voxels * mask.meta.voxel_volume_mm3
    return float((eta * volume_mm3 / num_regions) ** (1.0 / 3.0))


def _hemisphere_split(mask: MaskVolume) -> tuple[np.ndarray, np.ndarray]:
    """Voxel index arrays (n, 3) for the left and right hemisphere."""
    voxels = np.argwhere(mask.data)
    left = mask.meta.left_of_midline(voxels[:, 0])
    return voxels[left], voxels[~left]


def _hemisphere_targets(n_left: int, n_right: int, total: int) -> tuple[int, int]:
    """Split the region budget proportionally to hemisphere voxel counts."""
    if n_left == 0:
        return 0, total
    if n_right == 0:
        return total, 0
    exact = total * n_left / (n_left + n_right)
    t_left = int(np.floor(exact))
    if exact - t_left >= 0.5:
        t_left += 1
    t_left = min(max(t_left, 1), total - 1)
    return t_left, total - t_left


def _sample_hemisphere(coords_mm: np.ndarray, d: float, attempts: int,
                       rng: np.random.Generator) -> list[int]:
    """Bridson-style annulus sampling restricted to masked voxel positions.

    Returns indices into ``coords_mm`` of the accepted centers. Candidates
    are drawn uniformly from masked voxels in the spherical annulus [d, 2d]
    around a random active center; a candidate is accepted iff it keeps
    distance >= d to every existing center of this hemisphere.
    """
    n = coords_mm.shape[0]
    if n == 0:
        return []
    tree = cKDTree(coords_mm)
    first = int(rng.integers(n))
    centers = [first]
    center_pos = [coords_mm[first]]
    active = [first]
    annulus_cache: dict[int, np.ndarray] = {}
    while active:
        slot = int(rng.integers(len(active)))
        cidx = active[slot]
        pool = annulus_cache.get(cidx)
        if pool is None:
            near = np.asarray(tree.query_ball_point(coords_mm[cidx], 2.0 * d),
                              dtype=np.intp)
            dist = np.linalg.norm(coords_mm[near] - coords_mm[cidx], axis=1)
            pool = near[dist >= d]
            annulus_cache[cidx] = pool
        accepted = False
        if pool.size:
            existing = np.asarray(center_pos)
            for _ in range(attempts):
                cand = int(pool[rng.integers(pool.size)])
                gap = np.linalg.norm(existing - coords_mm[cand], axis=1)
                if np.all(gap >= d):
                    centers.append(cand)
                    center_pos.append(coords_mm[cand])
                    active.append(cand)
                    accepted = True
                    break
        if not accepted:
            active.pop(slot)
    return centers


def _assign_nearest(coords_mm: np.ndarray, centers_mm: np.ndarray,
                    chunk: int = 8192) -> np.ndarray:
    """Index of the nearest center per voxel; ties favor the lower index."""
    out = np.empty(coords_mm.shape[0], dtype=np.int32)
    for start in range(0, coords_mm.shape[0], chunk):
        block = coords_mm[start:start + chunk]
        d2 = ((block[:, None, :] - centers_mm[None, :, :]) ** 2).sum(axis=2)
        out[start:start + chunk] = np.argmin(d2, axis=1)
    return out


def sample_parcellation(mask: MaskVolume, cfg: SamplingConfig) -> ParcellationResult:
    """Draw one stochastic parcellation; deterministic in (mask, cfg).

    The disk radius starts at the analytic estimate and is rescaled by
    (realized / target)^(1/3) until the realized center count is within
    ``cfg.region_tolerance`` of the target; the closest draw is kept if the
    iteration budget runs out (``converged`` is False in that case).
    """
    meta = mask.meta
    left_vox, right_vox = _hemisphere_split(mask)
    n_left, n_right = len(left_vox), len(right_vox)
    total = n_left + n_right
    if total == 0:
        raise ValueError("mask is empty")
    if cfg.target_regions > total:
        raise ValueError(
            f"requested {cfg.target_regions} regions for {total} masked voxels"
        )
    if n_left and n_right and cfg.target_regions < 2:
        raise ValueError(
            "need at least one region per occupied hemisphere; "
            "mask spans both sides but target_regions < 2"
        )
    t_left, t_right = _hemisphere_targets(n_left, n_right, cfg.target_regions)
    left_mm = meta.voxel_coords_mm(left_vox)
    right_mm = meta.voxel_coords_mm(right_vox)

    rng = np.random.default_rng(cfg.seed)
    d = estimate_radius(mask, cfg.target_regions, cfg.packing_eta)
    tol = cfg.region_tolerance * cfg.target_regions
    best = None
    for _ in range(cfg.max_radius_iterations):
        picks_left = _sample_hemisphere(left_mm, d, cfg.annulus_attempts, rng) \
            if t_left else []
        picks_right = _sample_hemisphere(right_mm, d, cfg.annulus_attempts, rng) \
            if t_right else []
        realized = len(picks_left) + len(picks_right)
        gap = abs(realized - cfg.target_regions)
        if best is None or gap < best[0]:
            best = (gap, d, picks_left, picks_right)
        if gap <= tol:
            break
        d *= (realized / cfg.target_regions) ** (1.0 / 3.0)
    gap, d, picks_left, picks_right = best
    converged = gap <= tol

    centers = np.concatenate([
        left_vox[picks_left].reshape(-1, 3),
        right_vox[picks_right].reshape(-1, 3),
    ]).astype(np.int32)
    hemis = np.array(["L"] * len(picks_left) + ["R"] * len(picks_right))

    label_data = np.zeros(meta.dims, dtype=np.int32)
    if picks_left:
        lab = _assign_nearest(left_mm, left_mm[picks_left])
        label_data[tuple(left_vox.T)] = lab + 1
    if picks_right:
        lab = _assign_nearest(right_mm, right_mm[picks_right])
        label_data[tuple(right_vox.T)] = lab + 1 + len(picks_left)
    labels = LabelVolume(meta, label_data, len(centers))
    return ParcellationResult(
        labels=labels,
        centers=centers,
        radius_mm=float(d),
        hemispheres=hemis,
        target_regions=cfg.target_regions,
        seed=cfg.seed,
        converged=bool(converged),
    )


def parcel_stats(labels: LabelVolume | ParcellationResult) -> ParcelStats:
    """Per-parcel volume statistics in cm^3 (total, median, std, min, max)."""
    if isinstance(labels, ParcellationResult):
        labels = labels.labels
    counts = np.bincount(labels.data.ravel(), minlength=labels.num_regions + 1)[1:]
    vols = counts * labels.meta.voxel_volume_mm3 / 1000.0
    return ParcelStats(
        num_regions=labels.num_regions,
        counts=counts,
        total_cm3=float(vols.sum()),
        median_cm3=float(np.median(vols)),
        std_cm3=float(vols.std()),
        min_cm3=float(vols.min()),
        max_cm3=float(vols.max()),
    )


def write_sidecar(path, result: ParcellationResult) -> None:
    """Write the parcellation descriptor next to its label volume."""
    doc = {
        "parcellation_id": result.parcellation_id,
        "target_regions": result.target_regions,
        "realized_regions": result.num_regions,
        "radius_mm": result.radius_mm,
        "seed": result.seed,
        "converged": result.converged,
        "centers": result.centers.tolist(),
        "hemispheres": result.hemispheres.tolist(),
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n", "utf-8")
