"""Minimal neural substrate: dense MLPs with explicit backprop, Adam, and
categorical sampling. Everything is float64 numpy; no autograd framework.

Networks serialize to a versioned JSON dict whose floats round-trip exactly
(Python's shortest-repr float encoding is lossless for binary64).
"""

from __future__ import annotations

import numpy as np

HIDDEN_ACTIVATIONS = ("relu",)
FORMAT_NAME = "hrteam-net"
FORMAT_VERSION = 1


class Mlp:
    """Fully connected net: linear layers with ReLU between, linear output."""

    def __init__(self, weights: list[np.ndarray], biases: list[np.ndarray]):
        if len(weights) != len(biases) or not weights:
            raise ValueError("need matching weight/bias lists")
        for w, b in zip(weights, biases):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValueError("layer shape mismatch")
        for prev, nxt in zip(weights, weights[1:]):
            if prev.shape[1] != nxt.shape[0]:
                raise ValueError("consecutive layers do not chain")
        self.weights = weights
        self.biases = biases

    @classmethod
    def init(cls, sizes: list[int], rng: np.random.Generator, out_scale: float = 0.01) -> "Mlp":
        """He-scaled Gaussian hidden layers; small-output init keeps initial
        policies near uniform and initial values near zero."""
        ws, bs = [], []
        for i, (n_in, n_out) in enumerate(zip(sizes, sizes[1:])):
            scale = np.sqrt(2.0 / n_in)
            if i == len(sizes) - 2:
                scale = out_scale
            ws.append(rng.normal(0.0, scale, size=(n_in, n_out)))
            bs.append(np.zeros(n_out))
        return cls(ws, bs)

    @property
    def sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def forward(self, x: np.ndarray) -> np.ndarray:
        out, _ = self.forward_cached(np.asarray(x, dtype=float))
        return out

    def forward_cached(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        """Returns (output, cache). Accepts a single vector or a batch."""
        single = x.ndim == 1
        a = x[None, :] if single else x
        cache = [a]
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            a = a @ w + b
            if i < last:
                a = np.maximum(a, 0.0)
            cache.append(a)
        return (a[0] if single else a), cache

    def backward(
        self, cache: list[np.ndarray], grad_out: np.ndarray
    ) -> tuple[list[np.ndarray], list[np.ndarray]]:
        """Gradients of a scalar loss wrt every weight/bias, given dL/d(output).

        ReLU subgradient at 0 is taken as 0.
        """
        g = grad_out if grad_out.ndim == 2 else grad_out[None, :]
        grads_w: list[np.ndarray] = [np.empty(0)] * len(self.weights)
        grads_b: list[np.ndarray] = [np.empty(0)] * len(self.weights)
        for i in range(len(self.weights) - 1, -1, -1):
            a_in = cache[i]
            grads_w[i] = a_in.T @ g
            grads_b[i] = g.sum(axis=0)
            if i > 0:
                g = (g @ self.weights[i].T) * (cache[i] > 0.0)
        return grads_w, grads_b

    def copy(self) -> "Mlp":
        return Mlp([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    # -- serialization -----------------------------------------------------

    def to_dict(self, meta: dict | None = None) -> dict:
        return {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "sizes": self.sizes,
            "hidden_activation": "relu",
            "weights": [w.reshape(-1).tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "meta": meta or {},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Mlp":
        if d.get("format") != FORMAT_NAME:
            raise ValueError(f"not a {FORMAT_NAME} file")
        if d.get("version") != FORMAT_VERSION:
            raise ValueError(
                f"unsupported network file version {d.get('version')!r}; "
                f"this build reads version {FORMAT_VERSION}"
            )
        if d.get("hidden_activation") not in HIDDEN_ACTIVATIONS:
            raise ValueError(f"unsupported activation {d.get('hidden_activation')!r}")
        sizes = d["sizes"]
        ws = [
            np.asarray(flat, dtype=float).reshape(n_in, n_out)
            for flat, n_in, n_out in zip(d["weights"], sizes, sizes[1:])
        ]
        bs = [np.asarray(b, dtype=float) for b in d["biases"]]
        return cls(ws, bs)


class Adam:
    """Adam over one Mlp's parameter list, updating in place."""

    def __init__(self, net: Mlp, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.net = net
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in net.weights + net.biases]
        self.v = [np.zeros_like(p) for p in net.weights + net.biases]

    def step(self, grads_w: list[np.ndarray], grads_b: list[np.ndarray]) -> None:
        self.t += 1
        params = self.net.weights + self.net.biases
        grads = grads_w + grads_b
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(g)
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def sample_categorical(logits: np.ndarray, rng: np.random.Generator) -> tuple[int, float]:
    """Draw one action from softmax(logits); returns (action, log-prob)."""
    logp = log_softmax(logits)
    p = np.exp(logp)
    a = int(rng.choice(len(p), p=p / p.sum()))
    return a, float(logp[a])


class Policy:
    """Categorical policy over a feature vector. Ties in ``argmax`` break
    toward the lowest action index (np.argmax semantics)."""

    def __init__(self, net: Mlp):
        self.net = net

    @property
    def action_count(self) -> int:
        return self.net.sizes[-1]

    def logits(self, feats: np.ndarray) -> np.ndarray:
        return self.net.forward(feats)

    def action_probs(self, feats: np.ndarray) -> np.ndarray:
        return softmax(self.net.forward(feats))

    def log_probs(self, feats: np.ndarray) -> np.ndarray:
        return log_softmax(self.net.forward(feats))

    def sample(self, feats: np.ndarray, rng: np.random.Generator) -> tuple[int, float]:
        return sample_categorical(self.net.forward(feats), rng)

    def argmax(self, feats: np.ndarray) -> int:
        return int(np.argmax(self.net.forward(feats)))
