"""Dense networks with hand-written backprop and an Adam optimizer."""
from __future__ import annotations

import numpy as np


class MLP:
    """Fully connected tanh network with a linear output layer.

    ``sizes`` lists every layer width including input and output, e.g.
    ``[6, 30, 30, 30, 30, 30, 9]`` for five hidden layers of 30 units.
    """

    def __init__(self, sizes, seed=0, out_scale=1.0):
        rng = np.random.default_rng(seed)
        self.sizes = list(sizes)
        self.params = []
        for i, (n_in, n_out) in enumerate(zip(sizes, sizes[1:])):
            scale = np.sqrt(1.0 / n_in)
            if i == len(sizes) - 2:
                scale *= out_scale
            W = rng.normal(0.0, scale, size=(n_in, n_out)) if scale else np.zeros((n_in, n_out))
            self.params += [W, np.zeros(n_out)]
        self._cache = None

    @property
    def n_layers(self):
        return len(self.sizes) - 1

    def forward(self, X):
        h = np.atleast_2d(np.asarray(X, dtype=np.float64))
        acts = [h]
        for i in range(self.n_layers):
            W, b = self.params[2 * i], self.params[2 * i + 1]
            z = h @ W + b
            h = np.tanh(z) if i < self.n_layers - 1 else z
            acts.append(h)
        self._cache = acts
        return h

    def backward(self, dout):
        """Gradients of the params given dLoss/dOutput of the last forward."""
        acts = self._cache
        grads = [None] * len(self.params)
        d = np.asarray(dout, dtype=np.float64)
        for i in reversed(range(self.n_layers)):
            W = self.params[2 * i]
            if i < self.n_layers - 1:
                d = d * (1.0 - acts[i + 1] ** 2)
            grads[2 * i] = acts[i].T @ d
            grads[2 * i + 1] = d.sum(axis=0)
            d = d @ W.T
        return grads

    def get_flat(self):
        return np.concatenate([p.ravel() for p in self.params])

    def set_flat(self, flat):
        k = 0
        for p in self.params:
            n = p.size
            p[...] = flat[k : k + n].reshape(p.shape)
            k += n

    def copy_params(self):
        return [p.copy() for p in self.params]

    def load_params(self, params):
        for p, q in zip(self.params, params):
            p[...] = q

    def to_json(self):
        return {
            "shapes": [list(p.shape) for p in self.params],
            "params": [p.ravel(order="C").tolist() for p in self.params],
        }

    @classmethod
    def from_json(cls, data):
        shapes = data["shapes"]
        sizes = [shapes[0][0]] + [s[1] for s in shapes[0::2]]
        net = cls(sizes)
        for p, flat, shape in zip(net.params, data["params"], shapes):
            p[...] = np.asarray(flat, dtype=np.float64).reshape(shape)
        return net


class Adam:
    def __init__(self, params, lr=3e-4, betas=(0.9, 0.999), eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, betas[0], betas[1], eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state(self):
        return self.t, [m.copy() for m in self.m], [v.copy() for v in self.v]

    def restore(self, state):
        self.t, m, v = state
        for a, b in zip(self.m, m):
            a[...] = b
        for a, b in zip(self.v, v):
            a[...] = b


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
