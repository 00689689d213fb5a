"""Minimal neural-network layers on numpy with exact backward passes.

Everything the beat classifier and the GAN need: dense and 2-D convolution
(im2col + BLAS matmul), batch norm, average pooling, nearest-neighbor
upsampling, dropout, the usual activations, softmax/sigmoid losses and Adam.
Layers cache what their backward pass needs, accumulate parameter gradients
in ``Param.grad``, and are composed with :class:`Sequential`.

Conventions: images are channels-last (N, H, W, C); convolutions use odd kernels with
symmetric padding; all randomness (init, dropout, sampling) flows through
explicitly passed ``numpy.random.Generator`` objects, so identical seeds
give bit-identical runs.
"""

from dataclasses import dataclass

import numpy as np


@dataclass
class RunCtx:
    """Per-call forward context.

    ``train`` switches dropout and batch-stat use; ``update_stats`` controls
    whether batch norm running statistics are written (kept off when a frozen
    network is merely traversed for gradients); ``rng`` feeds dropout masks.
    """

    train: bool = False
    rng: object = None
    update_stats: bool = False


EVAL_CTX = RunCtx(train=False, rng=None, update_stats=False)


def train_ctx(rng, update_stats=True):
    return RunCtx(train=True, rng=rng, update_stats=update_stats)


class Param:
    __slots__ = ("value", "grad")

    def __init__(self, value):
        self.value = value
        self.grad = np.zeros_like(value)


def he_normal(rng, shape, fan_in, dtype):
    """He-initialized weights: normal with variance 2/fan_in."""
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)


class Layer:
    def params(self):
        return []

    def state_items(self):
        """(name, array) pairs covering parameters and buffers."""
        return []

    def load_state_items(self, mapping, prefix):
        for name, arr in self.state_items():
            src = mapping[prefix + name]
            if src.shape != arr.shape:
                raise ValueError(f"{prefix}{name}: shape {src.shape} != {arr.shape}")
            arr[...] = src

    def forward(self, x, ctx):
        raise NotImplementedError

    def backward(self, dout):
        raise NotImplementedError


class Dense(Layer):
    def __init__(self, n_in, n_out, rng, dtype=np.float32):
        self.W = Param(he_normal(rng, (n_in, n_out), n_in, dtype))
        self.b = Param(np.zeros(n_out, dtype=dtype))

    def params(self):
        return [self.W, self.b]

    def state_items(self):
        return [("W", self.W.value), ("b", self.b.value)]

    def forward(self, x, ctx):
        self._x = x
        return x @ self.W.value + self.b.value

    def backward(self, dout):
        self.W.grad += self._x.T @ dout
        self.b.grad += dout.sum(axis=0)
        return dout @ self.W.value.T


class Conv2d(Layer):
    """2-D convolution on (N, H, W, C) tensors, odd kernel, symmetric padding.

    With pad = k//2, stride 1 preserves H and W, and stride 2 exactly halves
    even H and W. Patches are gathered channels-last with k*k dense slice
    copies so the im2col GEMM folds the whole batch into one matmul.
    """

    def __init__(self, c_in, c_out, k, rng, stride=1, pad=None, dtype=np.float32):
        if k % 2 == 0:
            raise ValueError(f"kernel size must be odd, got {k}")
        self.c_in, self.c_out, self.k = c_in, c_out, k
        self.stride = stride
        self.pad = k // 2 if pad is None else pad
        self.W = Param(he_normal(rng, (k, k, c_in, c_out), c_in * k * k, dtype))
        self.b = Param(np.zeros(c_out, dtype=dtype))
        self._buffers = {}  # patch/pad scratch per input shape; training reuses them

    def params(self):
        return [self.W, self.b]

    def state_items(self):
        return [("W", self.W.value), ("b", self.b.value)]

    def _scratch(self, name, shape, dtype):
        buf = self._buffers.get(name)
        if buf is None or buf.shape != shape or buf.dtype != dtype:
            buf = np.empty(shape, dtype=dtype)
            self._buffers[name] = buf
        return buf

    def forward(self, x, ctx):
        n, h, w, _ = x.shape
        s, k, p = self.stride, self.k, self.pad
        if p:
            xp = self._scratch("xp", (n, h + 2 * p, w + 2 * p, self.c_in), x.dtype)
            xp[:] = 0
            xp[:, p : p + h, p : p + w, :] = x
        else:
            xp = x
        self._padded_shape = xp.shape
        oh = (xp.shape[1] - k) // s + 1
        ow = (xp.shape[2] - k) // s + 1
        patches = self._scratch("patches", (n, oh, ow, k, k, self.c_in), x.dtype)
        for i in range(k):
            for j in range(k):
                patches[:, :, :, i, j] = xp[:, i : i + s * oh : s, j : j + s * ow : s]
        cols = patches.reshape(n * oh * ow, -1)
        self._cols = cols
        y = cols @ self.W.value.reshape(-1, self.c_out) + self.b.value
        return y.reshape(n, oh, ow, self.c_out)

    def backward(self, dout):
        n, oh, ow, _ = dout.shape
        s, k, p = self.stride, self.k, self.pad
        dout2 = dout.reshape(n * oh * ow, self.c_out)
        self.W.grad += (self._cols.T @ dout2).reshape(self.W.value.shape)
        self.b.grad += dout2.sum(axis=0)
        dcols = (dout2 @ self.W.value.reshape(-1, self.c_out).T).reshape(n, oh, ow, k, k, self.c_in)
        # col2im: scatter patch gradients back with k*k dense strided adds
        dxp = self._scratch("dxp", self._padded_shape, dout.dtype)
        dxp[:] = 0
        for i in range(k):
            for j in range(k):
                dxp[:, i : i + s * oh : s, j : j + s * ow : s] += dcols[:, :, :, i, j]
        if p:
            return dxp[:, p:-p, p:-p, :]
        return dxp


class BatchNorm(Layer):
    """Batch normalization over (N, F) features or (N, H, W, C) channels."""

    def __init__(self, num_features, spatial, dtype=np.float32, eps=1e-5, momentum=0.9):
        self.axes = (0, 1, 2) if spatial else (0,)
        shape = (1, 1, 1, num_features) if spatial else (1, num_features)
        self.gamma = Param(np.ones(shape, dtype=dtype))
        self.beta = Param(np.zeros(shape, dtype=dtype))
        self.running_mean = np.zeros(shape, dtype=dtype)
        self.running_var = np.ones(shape, dtype=dtype)
        self.eps = eps
        self.momentum = momentum

    def params(self):
        return [self.gamma, self.beta]

    def state_items(self):
        return [
            ("gamma", self.gamma.value),
            ("beta", self.beta.value),
            ("running_mean", self.running_mean),
            ("running_var", self.running_var),
        ]

    def forward(self, x, ctx):
        if ctx.train:
            mean = x.mean(axis=self.axes, keepdims=True)
            var = x.var(axis=self.axes, keepdims=True)
            if ctx.update_stats:
                m = self.momentum
                self.running_mean[...] = m * self.running_mean + (1 - m) * mean
                self.running_var[...] = m * self.running_var + (1 - m) * var
        else:
            mean, var = self.running_mean, self.running_var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean) * inv_std
        self._cache = (xhat, inv_std, ctx.train)
        return self.gamma.value * xhat + self.beta.value

    def backward(self, dout):
        xhat, inv_std, used_batch_stats = self._cache
        self.gamma.grad += (dout * xhat).sum(axis=self.axes, keepdims=True)
        self.beta.grad += dout.sum(axis=self.axes, keepdims=True)
        dxhat = dout * self.gamma.value
        if not used_batch_stats:
            return dxhat * inv_std  # running stats are constants
        # standard batch-norm backward, folded form
        return (
            dxhat
            - dxhat.mean(axis=self.axes, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=self.axes, keepdims=True)
        ) * inv_std


class ReLU(Layer):
    def forward(self, x, ctx):
        self._mask = x > 0
        return x * self._mask

    def backward(self, dout):
        return dout * self._mask


class LeakyReLU(Layer):
    def __init__(self, alpha=0.2):
        self.alpha = alpha

    def forward(self, x, ctx):
        self._mask = x > 0
        return np.where(self._mask, x, self.alpha * x)

    def backward(self, dout):
        return np.where(self._mask, dout, self.alpha * dout)


class Tanh(Layer):
    def forward(self, x, ctx):
        self._y = np.tanh(x)
        return self._y

    def backward(self, dout):
        return dout * (1.0 - self._y * self._y)


class Sigmoid(Layer):
    def forward(self, x, ctx):
        self._y = sigmoid(x)
        return self._y

    def backward(self, dout):
        return dout * self._y * (1.0 - self._y)


class AvgPool2d(Layer):
    def __init__(self, size=2):
        self.size = size

    def forward(self, x, ctx):
        n, h, w, c = x.shape
        s = self.size
        if h % s or w % s:
            raise ValueError(f"pooling needs H,W divisible by {s}, got {h}x{w}")
        return x.reshape(n, h // s, s, w // s, s, c).mean(axis=(2, 4))

    def backward(self, dout):
        s = self.size
        d = dout / (s * s)
        return d.repeat(s, axis=1).repeat(s, axis=2)


class Upsample2d(Layer):
    """Nearest-neighbor upsampling by an integer factor."""

    def __init__(self, factor=2):
        self.factor = factor

    def forward(self, x, ctx):
        f = self.factor
        return x.repeat(f, axis=1).repeat(f, axis=2)

    def backward(self, dout):
        n, h, w, c = dout.shape
        f = self.factor
        return dout.reshape(n, h // f, f, w // f, f, c).sum(axis=(2, 4))


class Dropout(Layer):
    def __init__(self, p):
        if not 0.0 <= p < 1.0:
            raise ValueError(f"dropout rate must be in [0,1), got {p}")
        self.p = p

    def forward(self, x, ctx):
        if not ctx.train or self.p == 0.0:
            self._mask = None
            return x
        if ctx.rng is None:
            raise ValueError("training-mode dropout needs ctx.rng")
        keep = ctx.rng.random(x.shape) >= self.p
        self._mask = keep.astype(x.dtype) / x.dtype.type(1.0 - self.p)
        return x * self._mask

    def backward(self, dout):
        return dout if self._mask is None else dout * self._mask


class Flatten(Layer):
    def forward(self, x, ctx):
        self._in_shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self._in_shape)


class Reshape(Layer):
    def __init__(self, shape):
        self.shape = shape  # per-sample shape

    def forward(self, x, ctx):
        self._in_shape = x.shape
        return x.reshape((x.shape[0],) + tuple(self.shape))

    def backward(self, dout):
        return dout.reshape(self._in_shape)


class Sequential(Layer):
    def __init__(self, layers):
        self.layers = list(layers)

    def params(self):
        out = []
        for layer in self.layers:
            out.extend(layer.params())
        return out

    def state_items(self):
        out = []
        for i, layer in enumerate(self.layers):
            for name, arr in layer.state_items():
                out.append((f"{i}.{name}", arr))
        return out

    def load_state_items(self, mapping, prefix=""):
        for i, layer in enumerate(self.layers):
            layer.load_state_items(mapping, f"{prefix}{i}.")

    def forward(self, x, ctx):
        for layer in self.layers:
            x = layer.forward(x, ctx)
        return x

    def backward(self, dout):
        for layer in reversed(self.layers):
            dout = layer.backward(dout)
        return dout


def zero_grads(params):
    for p in params:
        p.grad[...] = 0


def state_dict(net, prefix=""):
    """Copy of all parameters and buffers, keyed by hierarchical name."""
    return {prefix + name: arr.copy() for name, arr in net.state_items()}


def load_state_dict(net, mapping, prefix=""):
    net.load_state_items(mapping, prefix)


def state_bytes(net):
    """Canonical byte string of a network's full state (for freeze checks)."""
    return b"".join(np.ascontiguousarray(arr).tobytes() for _, arr in sorted(net.state_items()))


class Adam:
    """Adam with bias correction; one slot pair per parameter."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params_list = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in self.params_list]
        self.v = [np.zeros_like(p.value) for p in self.params_list]

    def zero_grad(self):
        zero_grads(self.params_list)

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1**self.t
        bias2 = 1.0 - b2**self.t
        for p, m, v in zip(self.params_list, self.m, self.v):
            g = p.grad
            m[...] = b1 * m + (1 - b1) * g
            v[...] = b2 * v + (1 - b2) * (g * g)
            p.value -= self.lr * (m / bias1) / (np.sqrt(v / bias2) + self.eps)

    def state_items(self):
        out = [("t", np.array([self.t], dtype=np.int64))]
        for i, (m, v) in enumerate(zip(self.m, self.v)):
            out.append((f"m{i}", m))
            out.append((f"v{i}", v))
        return out

    def load_state_items(self, mapping, prefix):
        self.t = int(mapping[prefix + "t"][0])
        for i, (m, v) in enumerate(zip(self.m, self.v)):
            m[...] = mapping[prefix + f"m{i}"]
            v[...] = mapping[prefix + f"v{i}"]


def sigmoid(x):
    """Numerically stable sigmoid, clamped strictly inside (0, 1)."""
    out = np.empty_like(x, dtype=np.result_type(x, np.float32))
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return np.clip(out, 1e-12, 1.0 - 1e-12)


def softmax(logits):
    """Row-wise softmax, numerically stable."""
    z = logits - logits.max(axis=-1, keepdims=True)
    ez = np.exp(z)
    return ez / ez.sum(axis=-1, keepdims=True)


def one_hot(labels, num_classes, dtype=np.float64):
    out = np.zeros((len(labels), num_classes), dtype=dtype)
    out[np.arange(len(labels)), labels] = 1
    return out


def bce_with_logits(logits, target):
    """Mean binary cross-entropy from logits; returns (loss, dlogits)."""
    logits = logits.reshape(-1)
    target = np.broadcast_to(np.asarray(target, dtype=logits.dtype), logits.shape)
    loss = np.maximum(logits, 0) - logits * target + np.log1p(np.exp(-np.abs(logits)))
    d = (sigmoid(logits) - target) / logits.size
    return float(loss.mean()), d


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy over integer labels; returns (loss, probs, dlogits).

    dlogits is the exact gradient (softmax - onehot) / N.
    """
    probs = softmax(logits)
    n = logits.shape[0]
    logp = logits - logits.max(axis=1, keepdims=True)
    logp = logp - np.log(np.exp(logp).sum(axis=1, keepdims=True))
    loss = float(-logp[np.arange(n), labels].mean())
    d = probs.copy()
    d[np.arange(n), labels] -= 1.0
    return loss, probs, d / n


def cross_entropy_probs(probs, onehot_labels, eps=1e-12):
    """Mean -sum(y log p) on probability rows, with p clamped at ``eps``."""
    p = np.clip(probs, eps, None)
    return float(-(onehot_labels * np.log(p)).sum(axis=1).mean())
