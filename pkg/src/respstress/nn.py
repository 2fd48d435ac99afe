"""Minimal dense-tensor network kernel, forward and backward, from scratch.

Layers operate on float64 numpy arrays shaped (batch, channels, height,
width) or (batch, features). Convolution is valid (no padding, stride 1)
cross-correlation; pooling is 2x2 averaging with stride 2; the loss is
half the summed squared error against one-hot targets. Parameter
gradients are accumulated as sums over the batch; `sgd_step` divides by
the batch size so the update uses the mean per-example gradient.

Weight initialization draws from numpy's PCG64 generator (seeded, and
stream-stable across numpy versions), uniform in +-sqrt(6/(fan_in+fan_out)).
"""

from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _im2col(x: np.ndarray, kh: int, kw: int):
    """Unfold (B, C, H, W) into (B*oh*ow, C*kh*kw) patch rows."""
    b, c, h, w = x.shape
    oh, ow = h - kh + 1, w - kw + 1
    view = sliding_window_view(x, (kh, kw), axis=(2, 3))  # (B, C, oh, ow, kh, kw)
    cols = view.transpose(0, 2, 3, 1, 4, 5).reshape(b * oh * ow, c * kh * kw)
    return cols, oh, ow


def conv2d_forward(x: np.ndarray, kernels: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Valid stride-1 cross-correlation with full channel connectivity.

    x: (B, C, H, W); kernels: (O, C, kh, kw); bias: (O,).
    Output spatial size is (H-kh+1, W-kw+1).
    """
    out_ch, in_ch, kh, kw = kernels.shape
    b, c, h, w = x.shape
    if c != in_ch:
        raise ValueError(f"input has {c} channels, kernels expect {in_ch}")
    if h < kh or w < kw:
        raise ValueError(f"input {h}x{w} smaller than kernel {kh}x{kw}")
    cols, oh, ow = _im2col(x, kh, kw)
    out = cols @ kernels.reshape(out_ch, -1).T + bias
    return out.reshape(b, oh, ow, out_ch).transpose(0, 3, 1, 2)


def conv2d_backward(cols, x_shape, kernels, grad_out, need_input_grad=True):
    """Gradients of conv2d_forward given cached im2col rows.

    Returns (grad_input or None, grad_kernels, grad_bias); parameter
    gradients are sums over the batch.
    """
    out_ch, in_ch, kh, kw = kernels.shape
    b, oh, ow = grad_out.shape[0], grad_out.shape[2], grad_out.shape[3]
    gcols = grad_out.transpose(0, 2, 3, 1).reshape(b * oh * ow, out_ch)
    grad_kernels = (gcols.T @ cols).reshape(kernels.shape)
    grad_bias = gcols.sum(axis=0)
    grad_input = None
    if need_input_grad:
        # full correlation of the padded upstream gradient with the
        # spatially flipped kernels, channels swapped
        flipped = np.ascontiguousarray(kernels[:, :, ::-1, ::-1].swapaxes(0, 1))
        gpad = np.pad(grad_out, ((0, 0), (0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1)))
        grad_input = conv2d_forward(gpad, flipped, np.zeros(in_ch))
    return grad_input, grad_kernels, grad_bias


def avgpool2_forward(x: np.ndarray) -> np.ndarray:
    """2x2 average pooling with stride 2; spatial dims must be even."""
    b, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"avgpool2 needs even spatial dims, got {h}x{w}")
    return x.reshape(b, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))


def avgpool2_backward(grad_out: np.ndarray) -> np.ndarray:
    b, c, h, w = grad_out.shape
    spread = np.empty((b, c, h, 2, w, 2))
    spread[...] = (grad_out * 0.25)[:, :, :, None, :, None]
    return spread.reshape(b, c, 2 * h, 2 * w)


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Elementwise 1/(1+exp(-x)), stable for large |x|."""
    x = np.asarray(x, dtype=np.float64)
    with np.errstate(over="ignore"):
        return np.where(x >= 0, 1.0 / (1.0 + np.exp(-x)), np.exp(x) / (1.0 + np.exp(x)))


def sigmoid_backward(out: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    return grad_out * out * (1.0 - out)


def fc_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Affine map y = W x + b for a batch of row vectors; weight is (out, in)."""
    if x.shape[-1] != weight.shape[1]:
        raise ValueError(f"input length {x.shape[-1]} != weight columns {weight.shape[1]}")
    return x @ weight.T + bias


def fc_backward(x, weight, grad_out):
    grad_weight = grad_out.T @ x
    grad_bias = grad_out.sum(axis=0)
    grad_input = grad_out @ weight
    return grad_input, grad_weight, grad_bias


def mse_loss(pred: np.ndarray, target: np.ndarray):
    """Half summed squared error and its gradient (pred - target).

    For batched inputs the loss is the sum of per-example losses; divide
    by the batch size for a mean. Gradient shape matches pred.
    """
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    diff = pred - target
    return 0.5 * float(np.sum(diff * diff)), diff


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


class Conv2d:
    """5x5-style valid convolution layer with per-output-channel bias."""

    def __init__(self, in_ch: int, out_ch: int, kernel: int = 5):
        self.kernels = np.zeros((out_ch, in_ch, kernel, kernel))
        self.bias = np.zeros(out_ch)
        self.grad_kernels = np.zeros_like(self.kernels)
        self.grad_bias = np.zeros_like(self.bias)
        self._cols = None
        self._x_shape = None

    def init_params(self, rng: np.random.Generator) -> None:
        out_ch, in_ch, kh, kw = self.kernels.shape
        self.kernels = glorot_uniform(rng, self.kernels.shape, in_ch * kh * kw, out_ch * kh * kw)
        self.bias = np.zeros(out_ch)

    def forward(self, x):
        kh, kw = self.kernels.shape[2:]
        out_ch = self.kernels.shape[0]
        b = x.shape[0]
        self._cols, oh, ow = _im2col(x, kh, kw)
        self._x_shape = x.shape
        out = self._cols @ self.kernels.reshape(out_ch, -1).T + self.bias
        return out.reshape(b, oh, ow, out_ch).transpose(0, 3, 1, 2)

    def backward(self, grad_out, need_input_grad=True):
        grad_input, self.grad_kernels, self.grad_bias = conv2d_backward(
            self._cols, self._x_shape, self.kernels, grad_out, need_input_grad
        )
        return grad_input

    def params(self):
        return [self.kernels, self.bias]

    def grads(self):
        return [self.grad_kernels, self.grad_bias]


class AvgPool2:
    def forward(self, x):
        return avgpool2_forward(x)

    def backward(self, grad_out, need_input_grad=True):
        return avgpool2_backward(grad_out)

    def params(self):
        return []

    def grads(self):
        return []


class Sigmoid:
    def __init__(self):
        self._out = None

    def forward(self, x):
        self._out = sigmoid(x)
        return self._out

    def backward(self, grad_out, need_input_grad=True):
        return sigmoid_backward(self._out, grad_out)

    def params(self):
        return []

    def grads(self):
        return []


class Flatten:
    def __init__(self):
        self._shape = None

    def forward(self, x):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad_out, need_input_grad=True):
        return grad_out.reshape(self._shape)

    def params(self):
        return []

    def grads(self):
        return []


class Dense:
    def __init__(self, in_features: int, out_features: int):
        self.weight = np.zeros((out_features, in_features))
        self.bias = np.zeros(out_features)
        self.grad_weight = np.zeros_like(self.weight)
        self.grad_bias = np.zeros_like(self.bias)
        self._x = None

    def init_params(self, rng: np.random.Generator) -> None:
        out_features, in_features = self.weight.shape
        self.weight = glorot_uniform(rng, self.weight.shape, in_features, out_features)
        self.bias = np.zeros(out_features)

    def forward(self, x):
        self._x = x
        return fc_forward(x, self.weight, self.bias)

    def backward(self, grad_out, need_input_grad=True):
        grad_input, self.grad_weight, self.grad_bias = fc_backward(
            self._x, self.weight, grad_out
        )
        return grad_input if need_input_grad else None

    def params(self):
        return [self.weight, self.bias]

    def grads(self):
        return [self.grad_weight, self.grad_bias]


class Network:
    """Plain layer stack with reverse-mode backprop through mse_loss."""

    def __init__(self, layers):
        self.layers = list(layers)

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward_from(self, grad):
        """Propagate an output gradient back through all layers, filling
        each parameterized layer's grads. Skips the input gradient of the
        first parameterized layer (never needed)."""
        first_param = next(
            (i for i, l in enumerate(self.layers) if l.params()), len(self.layers)
        )
        for i in range(len(self.layers) - 1, -1, -1):
            grad = self.layers[i].backward(grad, need_input_grad=(i > first_param))
        return grad

    def init_params(self, seed: int) -> None:
        rng = np.random.default_rng(seed)
        for layer in self.layers:
            if hasattr(layer, "init_params"):
                layer.init_params(rng)

    def parameters(self):
        return [p for layer in self.layers for p in layer.params()]

    def gradients(self):
        return [g for layer in self.layers for g in layer.grads()]

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.parameters())


def backward(network: Network, x: np.ndarray, target: np.ndarray):
    """Full forward + reverse pass; returns (loss_sum, parameter gradients).

    Gradients are exact derivatives of the summed loss over the batch.
    """
    pred = network.forward(x)
    loss, grad = mse_loss(pred, target)
    network.backward_from(grad)
    return loss, network.gradients()


def sgd_step(params, grads, lr: float, batch_size: int) -> None:
    """In-place p -= lr * (batch-summed grad / batch_size). No momentum."""
    if len(params) != len(grads):
        raise ValueError("params/grads length mismatch")
    scale = lr / batch_size
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ValueError(f"shape mismatch {p.shape} vs {g.shape}")
        p -= scale * g
