"""Multilayer perceptrons built on :mod:`gnnjed.nn.tensor`."""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import Tensor


class Mlp:
    """Fully connected network with ReLU hidden layers and a linear output.

    The first layer accepts several input blocks; ``mlp(a, b, c)`` equals
    ``mlp(concat(a, b, c))`` but lets each block broadcast on its own leading
    shape (a per-type attribute of shape ``(d,)`` next to per-edge states of
    shape ``(E, B, d)``).
    """

    def __init__(self, widths, rng: np.random.Generator | None = None, dtype=np.float64, name: str = "mlp", zero=False):
        widths = [int(w) for w in widths]
        if len(widths) < 2 or min(widths) < 1:
            raise ValueError(f"invalid layer widths {widths}")
        self.widths = widths
        self.name = name
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weights: list[Tensor] = []
        self.biases: list[Tensor] = []
        for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
            if zero:
                w = np.zeros((fan_in, fan_out))
            else:
                limit = np.sqrt(6.0 / (fan_in + fan_out))
                w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
            self.weights.append(Tensor(w.astype(dtype), requires_grad=True, name=f"{name}.{i}.weight"))
            self.biases.append(Tensor(np.zeros(fan_out, dtype=dtype), requires_grad=True, name=f"{name}.{i}.bias"))

    @property
    def in_features(self) -> int:
        return self.widths[0]

    @property
    def out_features(self) -> int:
        return self.widths[-1]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def parameters(self) -> dict[str, Tensor]:
        out = {}
        for w, b in zip(self.weights, self.biases):
            out[w.name] = w
            out[b.name] = b
        return out

    def __call__(self, *blocks) -> Tensor:
        sizes = [T._data(b).shape[-1] for b in blocks]
        if sum(sizes) != self.in_features:
            raise ValueError(f"{self.name}: input width {sum(sizes)} != {self.in_features}")
        w0 = self.weights[0]
        h = None
        start = 0
        for blk, n in zip(blocks, sizes):
            part = T.matmul(blk, w0 if len(blocks) == 1 else T.getitem(w0, slice(start, start + n)))
            h = part if h is None else T.add(h, part)
            start += n
        h = T.add(h, self.biases[0])
        for w, b in zip(self.weights[1:], self.biases[1:]):
            h = T.add(T.matmul(T.relu(h), w), b)
        return h
