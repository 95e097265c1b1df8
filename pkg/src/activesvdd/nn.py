"""Dense networks with explicit forward/backward passes and Adam.

Everything runs in float64 numpy. ``forward`` records a tape of layer
inputs and pre-activations; ``backward`` replays it in reverse and returns
exact gradients for whatever scalar loss produced the output gradient.
Hidden layers use a leaky rectifier, the final layer is linear, and by
default there are no bias terms anywhere, so an all-zero weight state maps
every input to the zero vector (which downstream code treats as a
degenerate, collapsed state).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "LEAKY_SLOPE",
    "DenseNet",
    "Tape",
    "Adam",
    "minibatches",
    "mirrored_decoder",
    "reconstruction_loss",
    "pretrain_autoencoder",
    "save_net",
    "load_net",
]

LEAKY_SLOPE = 0.1


def _leaky(z: np.ndarray) -> np.ndarray:
    return np.where(z > 0.0, z, LEAKY_SLOPE * z)


def _leaky_grad(z: np.ndarray) -> np.ndarray:
    return np.where(z > 0.0, 1.0, LEAKY_SLOPE)


@dataclass
class Tape:
    """Per-layer inputs and pre-activations captured during forward."""

    net: "DenseNet"
    inputs: list
    preacts: list


class DenseNet:
    """Fully connected net: leaky rectifier after every layer but the last.

    widths lists every layer size including the input, e.g. (33, 32, 16, 8).
    Weights are drawn uniformly with a fan-in 1/sqrt(fan_in) scale from the
    supplied generator; rng=None leaves all weights zero.
    """

    def __init__(self, widths, bias_enabled: bool = False, rng=None):
        widths = tuple(int(w) for w in widths)
        if len(widths) < 2:
            raise ValueError("widths needs at least an input and an output size")
        if min(widths) < 1:
            raise ValueError("layer widths must be positive")
        self.widths = widths
        self.bias_enabled = bool(bias_enabled)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] | None = [] if self.bias_enabled else None
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            if rng is None:
                w = np.zeros((fan_in, fan_out))
            else:
                limit = math.sqrt(3.0 / fan_in)
                w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
            self.weights.append(w)
            if self.bias_enabled:
                self.biases.append(np.zeros(fan_out))

    @property
    def input_dim(self) -> int:
        return self.widths[0]

    @property
    def output_dim(self) -> int:
        return self.widths[-1]

    def params(self) -> list[np.ndarray]:
        """The live parameter arrays (weights first, then any biases)."""
        ps = list(self.weights)
        if self.bias_enabled:
            ps.extend(self.biases)
        return ps

    def clone(self) -> "DenseNet":
        other = DenseNet(self.widths, bias_enabled=self.bias_enabled)
        other.weights = [w.copy() for w in self.weights]
        if self.bias_enabled:
            other.biases = [b.copy() for b in self.biases]
        return other

    def forward(self, batch) -> tuple[np.ndarray, Tape]:
        x = np.asarray(batch, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise ValueError(
                f"batch shape {x.shape} does not match input width {self.input_dim}"
            )
        inputs: list[np.ndarray] = []
        preacts: list[np.ndarray] = []
        a = x
        last = len(self.weights) - 1
        for layer, w in enumerate(self.weights):
            inputs.append(a)
            z = a @ w
            if self.bias_enabled:
                z = z + self.biases[layer]
            preacts.append(z)
            a = z if layer == last else _leaky(z)
        return a, Tape(net=self, inputs=inputs, preacts=preacts)

    def backward(self, tape: Tape, output_gradient) -> tuple[list[np.ndarray], np.ndarray]:
        """Exact reverse-mode gradients for the scalar loss behind output_gradient.

        Returns (param_grads, input_grad) with param_grads laid out exactly
        like params(). The tape must come from this net's most recent state;
        a foreign or shape-stale tape is rejected.
        """
        if tape.net is not self:
            raise ValueError("tape was recorded by a different network")
        g = np.asarray(output_gradient, dtype=np.float64)
        if g.shape != tape.preacts[-1].shape:
            raise ValueError(
                f"output gradient shape {g.shape} does not match "
                f"forward output {tape.preacts[-1].shape} (stale tape?)"
            )
        n_layers = len(self.weights)
        grad_w: list[np.ndarray | None] = [None] * n_layers
        grad_b: list[np.ndarray | None] = [None] * n_layers
        dz = g
        da = g
        for layer in range(n_layers - 1, -1, -1):
            grad_w[layer] = tape.inputs[layer].T @ dz
            if self.bias_enabled:
                grad_b[layer] = dz.sum(axis=0)
            da = dz @ self.weights[layer].T
            if layer > 0:
                dz = da * _leaky_grad(tape.preacts[layer - 1])
        grads = list(grad_w)
        if self.bias_enabled:
            grads.extend(grad_b)
        return grads, da


class Adam:
    """Bias-corrected Adam over a fixed list of parameter arrays."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self._shapes = [p.shape for p in params]

    def step(self, params, grads) -> None:
        if len(params) != len(self._shapes) or len(grads) != len(self._shapes):
            raise ValueError("params/grads length does not match optimizer state")
        for p, g, shape in zip(params, grads, self._shapes):
            if p.shape != shape or g.shape != shape:
                raise ValueError("parameter or gradient shape drifted")
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for m, v, p, g in zip(self.m, self.v, params, grads):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def minibatches(n: int, batch_size: int, rng):
    """Seeded shuffle each epoch; the short tail batch is kept, not dropped."""
    if n < 1:
        raise ValueError("cannot iterate an empty dataset")
    if batch_size < 1:
        raise ValueError("batch_size must be positive")
    perm = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield perm[start : start + batch_size]


def mirrored_decoder(encoder: DenseNet, rng) -> DenseNet:
    return DenseNet(
        encoder.widths[::-1], bias_enabled=encoder.bias_enabled, rng=rng
    )


def reconstruction_loss(encoder: DenseNet, decoder: DenseNet, data) -> float:
    """Mean over rows of the squared reconstruction error."""
    x = np.asarray(data, dtype=np.float64)
    h, _ = encoder.forward(x)
    xh, _ = decoder.forward(h)
    r = xh - x
    return float(np.mean(np.sum(r * r, axis=1)))


def pretrain_autoencoder(
    encoder: DenseNet, data, epochs: int = 100, batch_size: int = 128, rng=None
):
    """Train encoder plus a mirrored decoder on reconstruction error.

    The decoder is discarded; the encoder is updated in place and returned
    together with the loss trace (entry 0 is the pre-training loss, so the
    trace has epochs + 1 entries). Deterministic given the generator state.
    """
    x = np.asarray(data, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("pretraining needs a non-empty 2-d matrix")
    if epochs < 0:
        raise ValueError("epochs must be non-negative")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    decoder = mirrored_decoder(encoder, rng)
    n_enc = len(encoder.params())
    params = encoder.params() + decoder.params()
    opt = Adam(params)
    trace = [reconstruction_loss(encoder, decoder, x)]
    for _ in range(epochs):
        for idx in minibatches(x.shape[0], batch_size, rng):
            xb = x[idx]
            h, tape_e = encoder.forward(xb)
            xh, tape_d = decoder.forward(h)
            g_out = (2.0 / xb.shape[0]) * (xh - xb)
            g_dec, g_h = decoder.backward(tape_d, g_out)
            g_enc, _ = encoder.backward(tape_e, g_h)
            opt.step(params, g_enc + g_dec)
        trace.append(reconstruction_loss(encoder, decoder, x))
    assert len(encoder.params()) == n_enc
    return encoder, trace


NET_FORMAT_VERSION = 1


def save_net(net: DenseNet, path) -> None:
    """Versioned binary dump: widths, bias flag, and per-layer arrays."""
    arrays = {f"w{i}": w for i, w in enumerate(net.weights)}
    if net.bias_enabled:
        arrays.update({f"b{i}": b for i, b in enumerate(net.biases)})
    np.savez(
        path,
        format_version=np.int64(NET_FORMAT_VERSION),
        widths=np.asarray(net.widths, dtype=np.int64),
        bias_enabled=np.int64(1 if net.bias_enabled else 0),
        **arrays,
    )


def load_net(path) -> DenseNet:
    with np.load(path) as blob:
        version = int(blob["format_version"])
        if version != NET_FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint format version {version}")
        widths = tuple(int(w) for w in blob["widths"])
        bias_enabled = bool(int(blob["bias_enabled"]))
        net = DenseNet(widths, bias_enabled=bias_enabled)
        net.weights = [blob[f"w{i}"].copy() for i in range(len(widths) - 1)]
        if bias_enabled:
            net.biases = [blob[f"b{i}"].copy() for i in range(len(widths) - 1)]
    return net
