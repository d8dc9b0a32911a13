"""Network layers with explicit forward/backward passes.

Every layer consumes and produces batched numpy arrays (batch axis first).
``backward`` expects the upstream gradient of a scalar objective with
respect to the layer output, stores parameter gradients on the layer, and
returns the gradient with respect to the input. Arrays live in the dtype
the layer was initialized with; check-mode code uses float64, production
training may use float32.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

ACTIVATIONS = ("elu", "relu", "leaky_relu", "sigmoid", "linear")

# Weight init: uniform on +-sqrt(INIT_GAIN / fan_in), biases zero.
INIT_GAIN = 6.0


class Layer:
    kind = "base"

    def init_params(self, rng: np.random.Generator, dtype=np.float64) -> None:
        pass

    def params(self) -> list[np.ndarray]:
        return []

    def grads(self) -> list[np.ndarray]:
        return []

    def buffers(self) -> list[np.ndarray]:
        """Non-trained state that still serializes (e.g. running statistics)."""
        return []

    def forward(self, x: np.ndarray, train: bool = False, rng=None) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def spec(self) -> dict:
        raise NotImplementedError


def _uniform_init(rng, shape, fan_in, dtype):
    limit = float(np.sqrt(INIT_GAIN / fan_in))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def _pad_spatial(x: np.ndarray, p: int) -> np.ndarray:
    if p == 0:
        return x
    pad = [(0, 0), (0, 0)] + [(p, p)] * 3
    return np.pad(x, pad)


class Conv3d(Layer):
    """3D convolution, stride 1, cubic kernel, zero 'same' or 'valid' padding.

    Output channel n is sum_m (X_m * w_{m,n}) + b_n; the nonlinearity is a
    separate Activation layer. Implemented as per-chunk im2col plus one
    matmul so the work lands in BLAS.
    """

    kind = "conv3d"

    def __init__(self, in_channels: int, out_channels: int, kernel: int = 3,
                 padding: str = "same"):
        if kernel < 1:
            raise ValueError("kernel must be positive")
        if padding not in ("same", "valid"):
            raise ValueError("padding must be 'same' or 'valid'")
        if padding == "same" and kernel % 2 == 0:
            raise ValueError("'same' padding requires an odd kernel")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        self.padding = padding
        self.weights = None
        self.bias = None
        self.grad_weights = None
        self.grad_bias = None
        self._cache = None

    def init_params(self, rng, dtype=np.float64):
        k, m, n = self.kernel, self.in_channels, self.out_channels
        self.weights = _uniform_init(rng, (n, m, k, k, k), m * k ** 3, dtype)
        self.bias = np.zeros(n, dtype=dtype)

    def params(self):
        return [self.weights, self.bias]

    def grads(self):
        return [self.grad_weights, self.grad_bias]

    def spec(self):
        return {"kind": self.kind, "in_channels": self.in_channels,
                "out_channels": self.out_channels, "kernel": self.kernel,
                "padding": self.padding}

    def _out_shape(self, spatial):
        k = self.kernel
        p = (k - 1) // 2 if self.padding == "same" else 0
        out = tuple(s + 2 * p - k + 1 for s in spatial)
        if any(s < 1 for s in out):
            raise ValueError(f"input spatial shape {spatial} too small for kernel {k}")
        return p, out

    def _chunk_size(self, patch_len: int, n_out: int) -> int:
        # Bound the im2col buffer to ~2e7 elements per chunk.
        return max(1, int(2e7) // max(1, patch_len * n_out))

    def _im2col(self, xp: np.ndarray, out_sp) -> np.ndarray:
        b, m = xp.shape[:2]
        k = self.kernel
        d2, h2, w2 = out_sp
        col = np.empty((b, m, k, k, k, d2 * h2 * w2), dtype=xp.dtype)
        for a in range(k):
            for c in range(k):
                for e in range(k):
                    block = xp[:, :, a:a + d2, c:c + h2, e:e + w2]
                    col[:, :, a, c, e] = block.reshape(b, m, -1)
        return col.reshape(b, m * k ** 3, -1)

    def forward(self, x, train=False, rng=None):
        if x.ndim != 5 or x.shape[1] != self.in_channels:
            raise ValueError(
                f"expected (B, {self.in_channels}, D, H, W) input, got {x.shape}"
            )
        p, out_sp = self._out_shape(x.shape[2:])
        xp = _pad_spatial(x, p)
        b = x.shape[0]
        n, k = self.out_channels, self.kernel
        w2d = self.weights.reshape(n, -1)
        n_patch = int(np.prod(out_sp))
        out = np.empty((b, n, n_patch), dtype=x.dtype)
        chunk = self._chunk_size(w2d.shape[1], n_patch)
        for s in range(0, b, chunk):
            col = self._im2col(xp[s:s + chunk], out_sp)
            out[s:s + chunk] = np.matmul(w2d, col)
        out += self.bias.reshape(1, n, 1)
        self._cache = (xp, p, out_sp, x.shape)
        return out.reshape(b, n, *out_sp)

    def backward(self, grad_out):
        xp, p, out_sp, x_shape = self._cache
        b, n = grad_out.shape[:2]
        k = self.kernel
        g2d = grad_out.reshape(b, n, -1)
        self.grad_bias = g2d.sum(axis=(0, 2)).astype(self.bias.dtype)
        w2d = self.weights.reshape(n, -1)
        grad_w2d = np.zeros_like(w2d)
        grad_xp = np.zeros_like(xp)
        d2, h2, w2 = out_sp
        chunk = self._chunk_size(w2d.shape[1], g2d.shape[2])
        for s in range(0, b, chunk):
            col = self._im2col(xp[s:s + chunk], out_sp)
            gc = g2d[s:s + chunk]
            grad_w2d += np.einsum("bnp,bmp->nm", gc, col, optimize=True)
            grad_col = np.matmul(w2d.T, gc)
            gc5 = grad_col.reshape(gc.shape[0], self.in_channels, k, k, k, d2, h2, w2)
            for a in range(k):
                for c in range(k):
                    for e in range(k):
                        grad_xp[s:s + chunk, :, a:a + d2, c:c + h2, e:e + w2] += \
                            gc5[:, :, a, c, e]
        self.grad_weights = grad_w2d.reshape(self.weights.shape)
        if p:
            grad_x = grad_xp[:, :, p:-p, p:-p, p:-p]
        else:
            grad_x = grad_xp
        return np.ascontiguousarray(grad_x)


class MaxPool3d(Layer):
    """Max pooling over cubic windows; gradient routes to the argmax.

    Ties go to the first element in scan order of the window (x offset
    slowest, z fastest), which makes the backward pass deterministic.
    """

    kind = "maxpool3d"

    def __init__(self, window: int = 2, stride: int | None = None):
        if window < 1:
            raise ValueError("window must be positive")
        self.window = window
        self.stride = window if stride is None else stride
        if self.stride < 1:
            raise ValueError("stride must be positive")
        self._cache = None

    def spec(self):
        return {"kind": self.kind, "window": self.window, "stride": self.stride}

    def forward(self, x, train=False, rng=None):
        w, s = self.window, self.stride
        if any(dim < w for dim in x.shape[2:]):
            raise ValueError(
                f"pool window {w} exceeds input extent {x.shape[2:]}"
            )
        view = np.lib.stride_tricks.sliding_window_view(x, (w, w, w), axis=(2, 3, 4))
        view = view[:, :, ::s, ::s, ::s]
        b, c, d2, h2, w2 = view.shape[:5]
        flat = view.reshape(b, c, d2, h2, w2, w ** 3)
        arg = flat.argmax(axis=-1)
        out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]
        self._cache = (x.shape, arg)
        return np.ascontiguousarray(out)

    def backward(self, grad_out):
        x_shape, arg = self._cache
        w, s = self.window, self.stride
        b, c, d2, h2, w2 = grad_out.shape
        bi, ci, di, hi, wi = np.indices((b, c, d2, h2, w2), sparse=True)
        dd = di * s + arg // (w * w)
        hh = hi * s + (arg // w) % w
        ww = wi * s + arg % w
        grad_x = np.zeros(x_shape, dtype=grad_out.dtype)
        if s >= w:
            # Non-overlapping windows: each input cell receives at most one term.
            grad_x[bi, ci, dd, hh, ww] = grad_out
        else:
            np.add.at(grad_x, (bi, ci, dd, hh, ww), grad_out)
        return grad_x


class BatchNorm(Layer):
    """Per-channel batch normalization with learned scale and shift.

    Normalizes over the batch and spatial axes at train time and keeps
    exponential running statistics (biased variance) for evaluation.
    """

    kind = "batchnorm"

    def __init__(self, num_channels: int, eps: float = 1e-5, momentum: float = 0.1):
        self.num_channels = num_channels
        self.eps = eps
        self.momentum = momentum
        self.gamma = None
        self.beta = None
        self.running_mean = None
        self.running_var = None
        self.grad_gamma = None
        self.grad_beta = None
        self._cache = None

    def init_params(self, rng, dtype=np.float64):
        c = self.num_channels
        self.gamma = np.ones(c, dtype=dtype)
        self.beta = np.zeros(c, dtype=dtype)
        self.running_mean = np.zeros(c, dtype=dtype)
        self.running_var = np.ones(c, dtype=dtype)

    def params(self):
        return [self.gamma, self.beta]

    def grads(self):
        return [self.grad_gamma, self.grad_beta]

    def buffers(self):
        return [self.running_mean, self.running_var]

    def spec(self):
        return {"kind": self.kind, "num_channels": self.num_channels,
                "eps": self.eps, "momentum": self.momentum}

    def _shape_for(self, x):
        if x.ndim < 2 or x.shape[1] != self.num_channels:
            raise ValueError(
                f"expected channel axis of size {self.num_channels}, got {x.shape}"
            )
        return (1, self.num_channels) + (1,) * (x.ndim - 2)

    def forward(self, x, train=False, rng=None):
        bshape = self._shape_for(x)
        axes = (0,) + tuple(range(2, x.ndim))
        if train:
            if x.shape[0] < 2:
                raise ValueError("batchnorm requires batch size >= 2 at train time")
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            m = self.momentum
            self.running_mean += m * (mean.astype(self.running_mean.dtype)
                                      - self.running_mean)
            self.running_var += m * (var.astype(self.running_var.dtype)
                                     - self.running_var)
        else:
            mean = self.running_mean
            var = self.running_var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean.reshape(bshape)) * inv_std.reshape(bshape)
        self._cache = (xhat, inv_std, axes, bshape, train)
        return self.gamma.reshape(bshape) * xhat + self.beta.reshape(bshape)

    def backward(self, grad_out):
        xhat, inv_std, axes, bshape, train = self._cache
        self.grad_gamma = (grad_out * xhat).sum(axis=axes).astype(self.gamma.dtype)
        self.grad_beta = grad_out.sum(axis=axes).astype(self.beta.dtype)
        gxhat = grad_out * self.gamma.reshape(bshape)
        if not train:
            return gxhat * inv_std.reshape(bshape)
        n = grad_out.size // grad_out.shape[1]
        term = (n * gxhat
                - gxhat.sum(axis=axes, keepdims=True)
                - xhat * (gxhat * xhat).sum(axis=axes, keepdims=True))
        return term * inv_std.reshape(bshape) / n


class Dense(Layer):
    """Fully connected layer: y = x W^T + b on (B, in_features) input."""

    kind = "dense"

    def __init__(self, in_features: int, out_features: int):
        self.in_features = in_features
        self.out_features = out_features
        self.weights = None
        self.bias = None
        self.grad_weights = None
        self.grad_bias = None
        self._cache = None

    def init_params(self, rng, dtype=np.float64):
        self.weights = _uniform_init(
            rng, (self.out_features, self.in_features), self.in_features, dtype)
        self.bias = np.zeros(self.out_features, dtype=dtype)

    def params(self):
        return [self.weights, self.bias]

    def grads(self):
        return [self.grad_weights, self.grad_bias]

    def spec(self):
        return {"kind": self.kind, "in_features": self.in_features,
                "out_features": self.out_features}

    def forward(self, x, train=False, rng=None):
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ValueError(
                f"expected (B, {self.in_features}) input, got {x.shape}"
            )
        self._cache = x
        return x @ self.weights.T + self.bias

    def backward(self, grad_out):
        x = self._cache
        self.grad_weights = grad_out.T @ x
        self.grad_bias = grad_out.sum(axis=0)
        return grad_out @ self.weights


class Activation(Layer):
    """Elementwise nonlinearity: elu, relu, leaky_relu(alpha), sigmoid, linear."""

    kind = "activation"

    def __init__(self, name: str, alpha: float = 0.33):
        if name not in ACTIVATIONS:
            raise ValueError(f"unknown activation {name!r}")
        self.name = name
        self.alpha = alpha
        self._cache = None

    def spec(self):
        out = {"kind": self.kind, "name": self.name}
        if self.name == "leaky_relu":
            out["alpha"] = self.alpha
        return out

    def forward(self, x, train=False, rng=None):
        if self.name == "relu":
            y = np.maximum(x, 0)
        elif self.name == "leaky_relu":
            y = np.where(x > 0, x, self.alpha * x)
        elif self.name == "elu":
            y = np.where(x > 0, x, np.expm1(np.minimum(x, 0)))
        elif self.name == "sigmoid":
            y = expit(x)
        else:
            y = x
        self._cache = (x, y)
        return y

    def backward(self, grad_out):
        x, y = self._cache
        if self.name == "relu":
            return grad_out * (x > 0)
        if self.name == "leaky_relu":
            return grad_out * np.where(x > 0, 1.0, self.alpha).astype(x.dtype)
        if self.name == "elu":
            return grad_out * np.where(x > 0, 1.0, y + 1.0)
        if self.name == "sigmoid":
            return grad_out * y * (1.0 - y)
        return grad_out


class Dropout(Layer):
    """Inverted dropout: scales kept units by 1/(1-rate); identity at eval."""

    kind = "dropout"

    def __init__(self, rate: float):
        if not (0.0 <= rate < 1.0):
            raise ValueError("dropout rate must be in [0, 1)")
        self.rate = rate
        self._cache = None

    def spec(self):
        return {"kind": self.kind, "rate": self.rate}

    def forward(self, x, train=False, rng=None):
        if not train or self.rate == 0.0:
            self._cache = None
            return x
        if rng is None:
            raise ValueError("dropout in train mode needs an rng")
        keep = (rng.random(x.shape) >= self.rate)
        scale = 1.0 / (1.0 - self.rate)
        mask = keep.astype(x.dtype) * x.dtype.type(scale)
        self._cache = mask
        return x * mask

    def backward(self, grad_out):
        if self._cache is None:
            return grad_out
        return grad_out * self._cache


class Flatten(Layer):
    kind = "flatten"

    def __init__(self):
        self._cache = None

    def spec(self):
        return {"kind": self.kind}

    def forward(self, x, train=False, rng=None):
        self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad_out):
        return grad_out.reshape(self._cache)


class EdgeToNode(Layer):
    """Adjacency-matrix filter producing one response per node.

    For input A of shape (B, C, R, R), filter f with row weights r^f and
    column weights c^f (each (C, R)) yields
    out[f, i] = sum_c sum_j (r^f[c, j] A[c, i, j] + c^f[c, j] A[c, j, i]) + b_f.
    """

    kind = "edge_to_node"

    def __init__(self, in_channels: int, size: int, filters: int):
        self.in_channels = in_channels
        self.size = size
        self.filters = filters
        self.row_weights = None
        self.col_weights = None
        self.bias = None
        self.grad_row = None
        self.grad_col = None
        self.grad_bias = None
        self._cache = None

    def init_params(self, rng, dtype=np.float64):
        shape = (self.filters, self.in_channels, self.size)
        fan_in = 2 * self.in_channels * self.size
        self.row_weights = _uniform_init(rng, shape, fan_in, dtype)
        self.col_weights = _uniform_init(rng, shape, fan_in, dtype)
        self.bias = np.zeros(self.filters, dtype=dtype)

    def params(self):
        return [self.row_weights, self.col_weights, self.bias]

    def grads(self):
        return [self.grad_row, self.grad_col, self.grad_bias]

    def spec(self):
        return {"kind": self.kind, "in_channels": self.in_channels,
                "size": self.size, "filters": self.filters}

    def forward(self, x, train=False, rng=None):
        expect = (self.in_channels, self.size, self.size)
        if x.ndim != 4 or x.shape[1:] != expect:
            raise ValueError(f"expected (B, {expect}) input, got {x.shape}")
        self._cache = x
        out = np.einsum("fcj,bcij->bfi", self.row_weights, x)
        out += np.einsum("fcj,bcji->bfi", self.col_weights, x)
        return out + self.bias[None, :, None]

    def backward(self, grad_out):
        x = self._cache
        self.grad_row = np.einsum("bfi,bcij->fcj", grad_out, x)
        self.grad_col = np.einsum("bfi,bcji->fcj", grad_out, x)
        self.grad_bias = grad_out.sum(axis=(0, 2))
        grad_x = np.einsum("bfi,fcj->bcij", grad_out, self.row_weights)
        grad_x += np.einsum("bfq,fcp->bcpq", grad_out, self.col_weights)
        return grad_x


class NodeToGraph(Layer):
    """Dense contraction over all (filter, node) pairs: (B, F, R) -> (B, G)."""

    kind = "node_to_graph"

    def __init__(self, in_filters: int, size: int, out_features: int):
        self.in_filters = in_filters
        self.size = size
        self.out_features = out_features
        self.weights = None
        self.bias = None
        self.grad_weights = None
        self.grad_bias = None
        self._cache = None

    def init_params(self, rng, dtype=np.float64):
        shape = (self.out_features, self.in_filters, self.size)
        self.weights = _uniform_init(rng, shape, self.in_filters * self.size, dtype)
        self.bias = np.zeros(self.out_features, dtype=dtype)

    def params(self):
        return [self.weights, self.bias]

    def grads(self):
        return [self.grad_weights, self.grad_bias]

    def spec(self):
        return {"kind": self.kind, "in_filters": self.in_filters,
                "size": self.size, "out_features": self.out_features}

    def forward(self, x, train=False, rng=None):
        expect = (self.in_filters, self.size)
        if x.ndim != 3 or x.shape[1:] != expect:
            raise ValueError(f"expected (B, {expect}) input, got {x.shape}")
        self._cache = x
        return np.einsum("gfr,bfr->bg", self.weights, x) + self.bias

    def backward(self, grad_out):
        x = self._cache
        self.grad_weights = np.einsum("bg,bfr->gfr", grad_out, x)
        self.grad_bias = grad_out.sum(axis=0)
        return np.einsum("bg,gfr->bfr", grad_out, self.weights)


_LAYER_KINDS = {
    cls.kind: cls
    for cls in (Conv3d, MaxPool3d, BatchNorm, Dense, Activation, Dropout,
                Flatten, EdgeToNode, NodeToGraph)
}


def layer_from_spec(spec: dict) -> Layer:
    """Instantiate a layer from its spec dict (inverse of ``Layer.spec``)."""
    spec = dict(spec)
    kind = spec.pop("kind", None)
    cls = _LAYER_KINDS.get(kind)
    if cls is None:
        raise ValueError(f"unknown layer kind {kind!r}")
    return cls(**spec)
