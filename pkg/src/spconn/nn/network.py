"""Sequential network container and the checkpoint file format.

A checkpoint is one UTF-8 JSON header line (architecture descriptor plus
caller metadata) followed by the raw little-endian float32 payload of all
parameter and buffer arrays in layer order, so files round-trip bit-exactly.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .layers import Layer, layer_from_spec

CKPT_MAGIC = "SPCKPT1"


class Network:
    """A stack of layers applied in sequence.

    ``dtype`` governs parameter and activation precision: float64 for
    check-mode exactness, float32 for production training.
    """

    def __init__(self, layers: list[Layer], dtype=np.float64):
        self.layers = list(layers)
        self.dtype = np.dtype(dtype)

    def initialize(self, rng: np.random.Generator) -> "Network":
        for layer in self.layers:
            layer.init_params(rng, self.dtype)
        return self

    def forward(self, x: np.ndarray, train: bool = False, rng=None,
                num_layers: int | None = None) -> np.ndarray:
        out = np.asarray(x, dtype=self.dtype)
        for layer in self.layers[:num_layers]:
            out = layer.forward(out, train=train, rng=rng)
        return out

    def backward(self, grad: np.ndarray,
                 num_layers: int | None = None) -> np.ndarray:
        grad = np.asarray(grad, dtype=self.dtype)
        for layer in reversed(self.layers[:num_layers]):
            grad = layer.backward(grad)
        return grad

    def parameters(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer.params()]

    def gradients(self) -> list[np.ndarray]:
        return [g for layer in self.layers for g in layer.grads()]

    def state_arrays(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out.extend(layer.params())
            out.extend(layer.buffers())
        return out

    @property
    def param_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def specs(self) -> list[dict]:
        return [layer.spec() for layer in self.layers]

    def snapshot(self) -> list[np.ndarray]:
        """Copies of the trainable parameters."""
        return [p.copy() for p in self.parameters()]

    def load_parameters(self, arrays: list[np.ndarray]) -> None:
        params = self.parameters()
        if len(arrays) != len(params):
            raise ValueError(f"expected {len(params)} arrays, got {len(arrays)}")
        for p, a in zip(params, arrays):
            if p.shape != a.shape:
                raise ValueError(f"shape mismatch {p.shape} vs {a.shape}")
            p[...] = a


def network_from_specs(specs: list[dict], dtype=np.float64) -> Network:
    return Network([layer_from_spec(s) for s in specs], dtype=dtype)


def save_network(path, net: Network, meta: dict | None = None) -> None:
    """Write architecture plus f32 payload; ``meta`` must be JSON scalars."""
    state = net.state_arrays()
    if any(a is None for a in state):
        raise ValueError("network has uninitialized parameters")
    header = {
        "format": CKPT_MAGIC,
        "layers": net.specs(),
        "meta": meta or {},
    }
    line = json.dumps(header, sort_keys=True, separators=(",", ":")) + "\n"
    with open(path, "wb") as fh:
        fh.write(line.encode("utf-8"))
        for arr in state:
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_network(path, dtype=np.float32) -> tuple[Network, dict]:
    """Read a checkpoint; returns the network and its metadata dict."""
    path = Path(path)
    with open(path, "rb") as fh:
        line = fh.readline()
        payload = fh.read()
    try:
        header = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ValueError(f"bad checkpoint header: {exc}") from exc
    if header.get("format") != CKPT_MAGIC:
        raise ValueError(f"bad checkpoint magic in {path}")
    net = network_from_specs(header["layers"], dtype=dtype)
    rng = np.random.default_rng(0)
    net.initialize(rng)  # allocates arrays with the right shapes
    state = net.state_arrays()
    total = sum(a.size for a in state)
    if len(payload) != total * 4:
        raise ValueError(
            f"checkpoint payload holds {len(payload)} bytes, expected {total * 4}"
        )
    flat = np.frombuffer(payload, dtype="<f4")
    offset = 0
    for arr in state:
        chunk = flat[offset:offset + arr.size].reshape(arr.shape)
        arr[...] = chunk.astype(net.dtype)
        offset += arr.size
    return net, header.get("meta", {})
