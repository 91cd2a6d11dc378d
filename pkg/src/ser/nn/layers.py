"""Layers with hand-written forward/backward passes.

Images are NCHW, sequences are (N, T, D). Every layer caches what its
backward pass needs during ``forward`` and writes parameter gradients into
``self.grads`` (overwriting, not accumulating).
"""

from __future__ import annotations

import numpy as np

from ser.nn.lstm import lstm_sequence_backward, lstm_sequence_forward


class BackwardWithoutForward(RuntimeError):
    pass


class Layer:
    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}
        self.children: dict[str, "Layer"] = {}
        self.frozen = False
        self._cache = None

    def forward(self, x, train: bool = False):
        raise NotImplementedError

    def backward(self, dout):
        raise NotImplementedError

    def _take_cache(self):
        if self._cache is None:
            raise BackwardWithoutForward(f"{type(self).__name__}.backward called before forward")
        cache, self._cache = self._cache, None
        return cache

    def named_tensors(self, prefix: str = ""):
        """Yield (name, array, is_buffer) for this layer and its children."""
        for k, v in self.params.items():
            yield prefix + k, v, False
        for k, v in self.buffers.items():
            yield prefix + k, v, True
        for name, child in self.children.items():
            yield from child.named_tensors(f"{prefix}{name}.")

    def named_grads(self, prefix: str = ""):
        for k, v in self.grads.items():
            yield prefix + k, v
        for name, child in self.children.items():
            yield from child.named_grads(f"{prefix}{name}.")

    def set_frozen(self, names: set, prefix: str = ""):
        self.frozen = any(prefix + k in names for k in self.params)
        for name, child in self.children.items():
            child.set_frozen(names, f"{prefix}{name}.")


def he_normal(rng, shape, fan_in, dtype):
    return (rng.normal(size=shape) * np.sqrt(2.0 / fan_in)).astype(dtype)


class Dense(Layer):
    def __init__(self, n_in: int, n_out: int, rng, dtype=np.float32):
        super().__init__()
        self.params["weight"] = he_normal(rng, (n_in, n_out), n_in, dtype)
        self.params["bias"] = np.zeros(n_out, dtype=dtype)

    def forward(self, x, train=False):
        w = self.params["weight"]
        if x.ndim != 2 or x.shape[1] != w.shape[0]:
            raise ValueError(f"dense expects (N, {w.shape[0]}), got {x.shape}")
        self._cache = x
        return x @ w + self.params["bias"]

    def backward(self, dout):
        x = self._take_cache()
        self.grads["weight"] = x.T @ dout
        self.grads["bias"] = dout.sum(axis=0)
        return dout @ self.params["weight"].T


class Conv2d(Layer):
    """Cross-correlation with zero padding ``k // 2``."""

    def __init__(self, c_in: int, c_out: int, kernel: int, stride: int, rng, dtype=np.float32):
        super().__init__()
        if stride not in (1, 2):
            raise ValueError("stride must be 1 or 2")
        self.k, self.stride, self.pad = kernel, stride, kernel // 2
        fan_in = c_in * kernel * kernel
        self.params["weight"] = he_normal(rng, (c_out, c_in, kernel, kernel), fan_in, dtype)
        self.params["bias"] = np.zeros(c_out, dtype=dtype)

    def forward(self, x, train=False):
        w = self.params["weight"]
        if x.ndim != 4 or x.shape[1] != w.shape[1]:
            raise ValueError(f"conv expects (N, {w.shape[1]}, H, W), got {x.shape}")
        k, s, p = self.k, self.stride, self.pad
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
        win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::s, ::s]
        out = np.tensordot(win, w, axes=([1, 4, 5], [1, 2, 3]))  # N, Ho, Wo, F
        self._cache = (xp.shape, win)
        return out.transpose(0, 3, 1, 2) + self.params["bias"][None, :, None, None]

    def backward(self, dout):
        xp_shape, win = self._take_cache()
        w = self.params["weight"]
        k, s, p = self.k, self.stride, self.pad
        ho, wo = dout.shape[2:]
        self.grads["weight"] = np.tensordot(dout, win, axes=([0, 2, 3], [0, 2, 3]))
        self.grads["bias"] = dout.sum(axis=(0, 2, 3))
        dcols = np.tensordot(dout, w, axes=([1], [0]))  # N, Ho, Wo, C, k, k
        dxp = np.zeros(xp_shape, dtype=dout.dtype)
        for i in range(k):
            for j in range(k):
                dxp[:, :, i : i + s * (ho - 1) + 1 : s, j : j + s * (wo - 1) + 1 : s] += (
                    dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
                )
        if p:
            dxp = dxp[:, :, p:-p, p:-p]
        return dxp


class BatchNorm(Layer):
    """Batch normalization over the channel axis of (N, C) or (N, C, H, W) input.

    A frozen batchnorm always uses its running statistics.
    """

    def __init__(self, channels: int, dtype=np.float32, momentum: float = 0.1, eps: float = 1e-5):
        super().__init__()
        self.momentum, self.eps = momentum, eps
        self.params["gamma"] = np.ones(channels, dtype=dtype)
        self.params["beta"] = np.zeros(channels, dtype=dtype)
        self.buffers["running_mean"] = np.zeros(channels, dtype=dtype)
        self.buffers["running_var"] = np.ones(channels, dtype=dtype)

    def _shape(self, x):
        if x.ndim == 2:
            return (0,), (1, -1)
        return (0, 2, 3), (1, -1, 1, 1)

    def forward(self, x, train=False):
        axes, bshape = self._shape(x)
        gamma = self.params["gamma"].reshape(bshape)
        beta = self.params["beta"].reshape(bshape)
        batch_stats = train and not self.frozen
        if batch_stats:
            n = x.size // x.shape[1]
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            m = self.momentum
            rm, rv = self.buffers["running_mean"], self.buffers["running_var"]
            rm[...] = (1 - m) * rm + m * mean
            rv[...] = (1 - m) * rv + m * var * (n / max(n - 1, 1))
        else:
            mean, var = self.buffers["running_mean"], self.buffers["running_var"]
        inv_std = 1.0 / np.sqrt(var + self.eps)
        x_hat = (x - mean.reshape(bshape)) * inv_std.reshape(bshape)
        self._cache = (x_hat, inv_std, batch_stats)
        return gamma * x_hat + beta

    def backward(self, dout):
        x_hat, inv_std, batch_stats = self._take_cache()
        axes, bshape = self._shape(dout)
        gamma = self.params["gamma"]
        self.grads["gamma"] = (dout * x_hat).sum(axis=axes)
        self.grads["beta"] = dout.sum(axis=axes)
        dx_hat = dout * gamma.reshape(bshape)
        if not batch_stats:
            return dx_hat * inv_std.reshape(bshape)
        n = dout.size // dout.shape[1]
        s1 = dx_hat.sum(axis=axes).reshape(bshape)
        s2 = (dx_hat * x_hat).sum(axis=axes).reshape(bshape)
        return (inv_std.reshape(bshape) / n) * (n * dx_hat - s1 - x_hat * s2)


class ReLU(Layer):
    def forward(self, x, train=False):
        mask = x > 0
        self._cache = mask
        return x * mask

    def backward(self, dout):
        return dout * self._take_cache()


class MaxPool2(Layer):
    """2x2 max pooling, stride 2; an odd trailing row/column is dropped."""

    def forward(self, x, train=False):
        n, c, h, w = x.shape
        h2, w2 = h // 2, w // 2
        if h2 == 0 or w2 == 0:
            raise ValueError(f"maxpool input {x.shape} too small")
        xc = x[:, :, : 2 * h2, : 2 * w2]
        blocks = xc.reshape(n, c, h2, 2, w2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h2, w2, 4)
        idx = blocks.argmax(axis=-1)
        self._cache = (x.shape, idx)
        return np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0]

    def backward(self, dout):
        shape, idx = self._take_cache()
        n, c, h, w = shape
        h2, w2 = h // 2, w // 2
        onehot = (np.arange(4) == idx[..., None]) * dout[..., None]
        blocks = onehot.reshape(n, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, 2 * h2, 2 * w2)
        dx = np.zeros(shape, dtype=dout.dtype)
        dx[:, :, : 2 * h2, : 2 * w2] = blocks
        return dx


class GlobalAvgPool(Layer):
    def forward(self, x, train=False):
        self._cache = x.shape
        return x.mean(axis=(2, 3))

    def backward(self, dout):
        n, c, h, w = self._take_cache()
        return np.broadcast_to(dout[:, :, None, None] / (h * w), (n, c, h, w)).copy()


class Dropout(Layer):
    """Inverted dropout; identity in eval mode. ``rng`` must be set before training."""

    def __init__(self, p: float):
        super().__init__()
        if not 0 <= p < 1:
            raise ValueError("dropout p must be in [0, 1)")
        self.p = p
        self.rng = None

    def forward(self, x, train=False):
        if not train or self.p == 0:
            self._cache = None
            self._passthrough = True
            return x
        if self.rng is None:
            raise RuntimeError("dropout rng not set")
        keep = (self.rng.random(x.shape) >= self.p) / (1.0 - self.p)
        keep = keep.astype(x.dtype)
        self._passthrough = False
        self._cache = keep
        return x * keep

    def backward(self, dout):
        if getattr(self, "_passthrough", False):
            return dout
        return dout * self._take_cache()


class ResidualBlock(Layer):
    """conv-bn-relu-conv-bn plus identity (1x1 projection on shape change), then relu."""

    def __init__(self, c_in: int, c_out: int, stride: int, rng, dtype=np.float32):
        super().__init__()
        self.children["conv1"] = Conv2d(c_in, c_out, 3, stride, rng, dtype)
        self.children["bn1"] = BatchNorm(c_out, dtype)
        self.children["relu1"] = ReLU()
        self.children["conv2"] = Conv2d(c_out, c_out, 3, 1, rng, dtype)
        self.children["bn2"] = BatchNorm(c_out, dtype)
        if c_in != c_out or stride != 1:
            self.children["proj"] = Conv2d(c_in, c_out, 1, stride, rng, dtype)
        self.out_relu = ReLU()

    def forward(self, x, train=False):
        h = x
        for name in ("conv1", "bn1", "relu1", "conv2", "bn2"):
            h = self.children[name].forward(h, train)
        skip = self.children["proj"].forward(x, train) if "proj" in self.children else x
        return self.out_relu.forward(h + skip, train)

    def backward(self, dout):
        d = self.out_relu.backward(dout)
        dh = d
        for name in ("bn2", "conv2", "relu1", "bn1", "conv1"):
            dh = self.children[name].backward(dh)
        dskip = self.children["proj"].backward(d) if "proj" in self.children else d
        return dh + dskip


class BiLSTM(Layer):
    """Stacked bidirectional LSTM over (N, T, D) input.

    Output is the concatenation of the top layer's final forward state
    (after t = T-1) and final backward state (after t = 0): shape (N, 2H).
    Gate order in the packed weights is input, forget, cell, output.
    """

    def __init__(self, n_in: int, hidden: int, n_layers: int, rng, dtype=np.float32):
        super().__init__()
        self.hidden, self.n_layers = hidden, n_layers
        bound = 1.0 / np.sqrt(hidden)
        for layer in range(n_layers):
            d_in = n_in if layer == 0 else 2 * hidden
            for direction in ("fwd", "bwd"):
                key = f"l{layer}_{direction}"
                self.params[f"{key}.w_ih"] = rng.uniform(-bound, bound, (d_in, 4 * hidden)).astype(dtype)
                self.params[f"{key}.w_hh"] = rng.uniform(-bound, bound, (hidden, 4 * hidden)).astype(dtype)
                self.params[f"{key}.bias"] = rng.uniform(-bound, bound, 4 * hidden).astype(dtype)

    def _weights(self, key):
        p = self.params
        return p[f"{key}.w_ih"], p[f"{key}.w_hh"], p[f"{key}.bias"]

    def forward(self, x, train=False):
        if x.ndim != 3 or x.shape[2] != self.params["l0_fwd.w_ih"].shape[0]:
            raise ValueError(f"bilstm expects (N, T, {self.params['l0_fwd.w_ih'].shape[0]}), got {x.shape}")
        caches = []
        h = x
        for layer in range(self.n_layers):
            hf, cf = lstm_sequence_forward(h, *self._weights(f"l{layer}_fwd"))
            hb_rev, cb = lstm_sequence_forward(h[:, ::-1], *self._weights(f"l{layer}_bwd"))
            caches.append((cf, cb))
            h = np.concatenate([hf, hb_rev[:, ::-1]], axis=2)
        self._cache = (caches, x.shape)
        hid = self.hidden
        return np.concatenate([h[:, -1, :hid], h[:, 0, hid:]], axis=1)

    def backward(self, dout):
        caches, (n, t, _) = self._take_cache()
        hid = self.hidden
        dhf = np.zeros((n, t, hid), dtype=dout.dtype)
        dhb = np.zeros((n, t, hid), dtype=dout.dtype)
        dhf[:, -1] = dout[:, :hid]
        dhb[:, 0] = dout[:, hid:]
        for layer in reversed(range(self.n_layers)):
            cf, cb = caches[layer]
            kf, kb = f"l{layer}_fwd", f"l{layer}_bwd"
            dxf, gf = lstm_sequence_backward(dhf, cf, *self._weights(kf))
            dxb_rev, gb = lstm_sequence_backward(dhb[:, ::-1], cb, *self._weights(kb))
            for key, g in ((kf, gf), (kb, gb)):
                for name, val in zip(("w_ih", "w_hh", "bias"), g):
                    self.grads[f"{key}.{name}"] = val
            dx = dxf + dxb_rev[:, ::-1]
            if layer > 0:
                dhf, dhb = dx[..., :hid], dx[..., hid:]
        return dx
