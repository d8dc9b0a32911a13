"""Gradient-based input saliency for trained fingerprint networks.

Saliency weights are the absolute gradient of the model output with
respect to the input fingerprints, obtained in a single backward pass;
the voxel-level map takes the maximum across input channels. For
classification the gradient is taken at the pre-sigmoid logit, which does
not saturate. Ensemble maps are voxelwise averages of member maps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .models import ConnectomeNet
from .validation import check_grids_match
from .volume_io import FingerprintVolume, GridMeta, MaskVolume, read_real_volume, \
    write_real_array


@dataclass(frozen=True)
class SaliencyMap:
    """Non-negative per-voxel saliency over a grid."""

    meta: GridMeta
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        if values.shape != self.meta.dims:
            raise ValueError(f"values shape {values.shape} != grid {self.meta.dims}")
        if not np.isfinite(values).all():
            raise ValueError("saliency values must be finite")
        if values.min() < 0:
            raise ValueError("saliency values must be non-negative")


def input_gradient(model: ConnectomeNet, fingerprint: FingerprintVolume) -> np.ndarray:
    """|dO/dI| for one subject, shaped (R, nx, ny, nz).

    Runs the network in eval mode (dropout off, batchnorm running stats)
    and backpropagates from the scalar output: the pre-sigmoid logit for
    classification, the raw output for regression.
    """
    if model.family != "cnn3d":
        raise ValueError("input saliency is defined for the cnn3d family")
    model._check_fitted()
    net = model.net_
    x = np.moveaxis(fingerprint.data, -1, 0)[None, ...]
    depth = len(net.layers) - 1 if model.task == "classification" else None
    out = net.forward(x, train=False, num_layers=depth)
    if out.size != 1:
        raise ValueError("saliency needs a single-output network")
    grad = net.backward(np.ones_like(out), num_layers=depth)
    return np.abs(grad[0]).astype(np.float64)


def reduce_saliency(weights: np.ndarray, meta: GridMeta,
                    mask: MaskVolume | None = None) -> SaliencyMap:
    """Collapse channel gradients to a voxel map: S_i = max_j w_ij."""
    weights = np.asarray(weights)
    if weights.ndim != 4 or weights.shape[1:] != meta.dims:
        raise ValueError(
            f"expected (R,) + {meta.dims} gradient tensor, got {weights.shape}"
        )
    values = np.abs(weights).max(axis=0)
    if mask is not None:
        check_grids_match("saliency", meta, "mask", mask.meta)
        values = np.where(mask.data, values, 0.0)
    return SaliencyMap(meta, values)


def saliency_map(model: ConnectomeNet, fingerprint: FingerprintVolume,
                 mask: MaskVolume | None = None) -> SaliencyMap:
    """Input gradient followed by the channel-max reduction."""
    if mask is None:
        mask = fingerprint.mask
    return reduce_saliency(input_gradient(model, fingerprint),
                           fingerprint.meta, mask)


def ensemble_saliency(maps: list[SaliencyMap]) -> SaliencyMap:
    """Voxelwise mean of member maps; grids must match."""
    if not maps:
        raise ValueError("need at least one saliency map")
    meta = maps[0].meta
    for i, m in enumerate(maps[1:], start=1):
        check_grids_match("map 0", meta, f"map {i}", m.meta)
    values = np.mean([m.values for m in maps], axis=0)
    return SaliencyMap(meta, values)


def write_saliency(path, saliency: SaliencyMap) -> None:
    write_real_array(path, saliency.meta, saliency.values.astype(np.float32))


def read_saliency(path) -> SaliencyMap:
    meta, arr = read_real_volume(path)
    if arr.shape[3] != 1:
        raise ValueError("saliency files hold a single channel")
    return SaliencyMap(meta, arr[..., 0].astype(np.float64))
