"""Small tanh MLPs with hand-written backpropagation.

The actor maps a state to portfolio weights through a softmax head; the
critic maps ``concat(state, action)`` to a scalar.  Everything works on
batches (rows are samples) and stays in float64 so finite-difference checks
are meaningful.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeMismatch


@dataclass
class NetworkParams:
    weights: list[np.ndarray]  # W_l has shape (in, out)
    biases: list[np.ndarray]
    head: str = "linear"  # linear | softmax

    def __post_init__(self) -> None:
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ShapeMismatch("weights and biases must pair up")
        for l, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.ndim != 2 or b.shape != (W.shape[1],):
                raise ShapeMismatch(f"layer {l}: W {W.shape}, b {b.shape}")
            if l and W.shape[0] != self.weights[l - 1].shape[1]:
                raise ShapeMismatch(f"layer {l} input {W.shape[0]} != previous output")
        if self.head not in ("linear", "softmax"):
            raise ValueError(f"unknown head {self.head!r}")

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[1]

    def arrays(self) -> list[np.ndarray]:
        return [a for pair in zip(self.weights, self.biases) for a in pair]

    def copy(self) -> "NetworkParams":
        return NetworkParams([W.copy() for W in self.weights], [b.copy() for b in self.biases], self.head)

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())

    def equals(self, other: "NetworkParams") -> bool:
        return self.head == other.head and all(
            a.shape == b.shape and np.array_equal(a, b) for a, b in zip(self.arrays(), other.arrays())
        )


def init_network(
    sizes: list[int], rng: np.random.Generator, head: str = "linear", final_scale: float = 3e-3
) -> NetworkParams:
    """Fan-in uniform init for hidden layers, small uniform init for the output layer."""
    weights, biases = [], []
    for l, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        bound = final_scale if l == len(sizes) - 2 else 1.0 / np.sqrt(a)
        weights.append(rng.uniform(-bound, bound, size=(a, b)))
        biases.append(rng.uniform(-bound, bound, size=b))
    return NetworkParams(weights, biases, head)


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def mlp_forward(net: NetworkParams, X: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Pre-head output and the list of layer inputs (for backprop)."""
    X = np.atleast_2d(X)
    if X.shape[1] != net.in_dim:
        raise ShapeMismatch(f"input width {X.shape[1]}, network expects {net.in_dim}")
    acts = [X]
    h = X
    last = len(net.weights) - 1
    for l, (W, b) in enumerate(zip(net.weights, net.biases)):
        h = h @ W + b
        if l < last:
            h = np.tanh(h)
            acts.append(h)
    return h, acts


def mlp_backward(
    net: NetworkParams, acts: list[np.ndarray], grad_out: np.ndarray, *, params: bool = True
) -> tuple[list[np.ndarray], list[np.ndarray], np.ndarray]:
    """Gradients of ``sum(grad_out * output)`` w.r.t. weights, biases and input.

    With ``params=False`` only the input gradient is computed.
    """
    gW = [None] * len(net.weights)
    gb = [None] * len(net.weights)
    g = grad_out
    for l in range(len(net.weights) - 1, -1, -1):
        if params:
            gW[l] = acts[l].T @ g
            gb[l] = g.sum(axis=0)
        g = g @ net.weights[l].T
        if l > 0:
            g = g * (1.0 - acts[l] ** 2)
    return gW, gb, g


def actor_forward(actor: NetworkParams, state: np.ndarray) -> np.ndarray:
    """Portfolio weights for one state (1-D) or a batch of states (2-D)."""
    logits, _ = mlp_forward(actor, state)
    w = softmax(logits)
    return w[0] if np.ndim(state) == 1 else w


def critic_forward(critic: NetworkParams, state: np.ndarray, action: np.ndarray) -> np.ndarray:
    X = np.concatenate([np.atleast_2d(state), np.atleast_2d(action)], axis=1)
    q, _ = mlp_forward(critic, X)
    q = q[:, 0]
    return q[0] if np.ndim(state) == 1 else q


def critic_gradients(
    critic: NetworkParams, states: np.ndarray, actions: np.ndarray, grad_q: np.ndarray, *, acts=None, params=True
):
    """Back-propagate ``sum(grad_q * Q(s, a))``; returns (gW, gb, dQ/da).

    ``acts`` may carry the cached layer inputs of a previous forward pass.
    """
    states = np.atleast_2d(states)
    if acts is None:
        X = np.concatenate([states, np.atleast_2d(actions)], axis=1)
        _, acts = mlp_forward(critic, X)
    gW, gb, gX = mlp_backward(critic, acts, np.asarray(grad_q, float).reshape(-1, 1), params=params)
    return gW, gb, gX[:, states.shape[1]:]


def softmax_vjp(w: np.ndarray, grad_w: np.ndarray) -> np.ndarray:
    return w * (grad_w - (w * grad_w).sum(axis=1, keepdims=True))


def actor_gradients(actor: NetworkParams, states: np.ndarray, grad_w: np.ndarray, *, cache=None):
    """Back-propagate ``sum(grad_w * softmax(logits(s)))``; returns (gW, gb, weights).

    ``cache`` may carry ``(weights, acts)`` from a previous forward pass.
    """
    if cache is None:
        logits, acts = mlp_forward(actor, states)
        w = softmax(logits)
    else:
        w, acts = cache
    gW, gb, _ = mlp_backward(actor, acts, softmax_vjp(w, np.atleast_2d(grad_w)))
    return gW, gb, w


def flat_norm(grads: list[np.ndarray]) -> float:
    return float(np.sqrt(sum(float((g * g).sum()) for g in grads)))


def polyak(target: NetworkParams, live: NetworkParams, tau: float) -> None:
    """In-place ``target += tau * (live - target)``; tau = 1 copies, tau = 0 is a no-op."""
    for t, s in zip(target.arrays(), live.arrays()):
        if tau == 1.0:
            t[...] = s
        elif tau:
            t += tau * (s - t)
