"""Learned additive-update optimizer.

Each optimization variable ``x_i`` has its own MLP.  The MLP input is the
gradient of the loss at the fixed starting point ``x_i0`` and never changes;
its output is the update, so iterate ``t`` is ``proj(x_i0 + mlp_i(g_i0))``.
The MLP weights are trained by Adam on the loss of that iterate, and the best
iterate seen is buffered and returned.
"""
import hashlib
from dataclasses import dataclass, field

import numba
import numpy as np

from . import autodiff as ad
from .errors import NonFiniteGradient, NonFiniteLoss, ShapeMismatch

ACTIVATIONS = {
    "sigmoid": ad.sigmoid,
    "tanh": ad.tanh,
    "identity": lambda x: x,
}


@dataclass(frozen=True)
class MlpSpec:
    input_width: int
    hidden: tuple = (400, 400, 400)
    activations: tuple = ("sigmoid", "tanh", "tanh", "identity")
    output_width: int = None

    def __post_init__(self):
        if self.output_width is None:
            object.__setattr__(self, "output_width", self.input_width)
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        object.__setattr__(self, "activations", tuple(self.activations))
        if len(self.activations) != len(self.hidden) + 1:
            raise ShapeMismatch("need one activation per hidden layer plus the output layer")
        for a in self.activations:
            if a not in ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")

    @property
    def widths(self):
        return (self.input_width, *self.hidden, self.output_width)

    @classmethod
    def precoder(cls, width, hidden=400):
        """Three hidden layers: sigmoid, tanh, tanh; linear output."""
        return cls(width, (hidden,) * 3, ("sigmoid", "tanh", "tanh", "identity"))

    @classmethod
    def ris(cls, width, hidden=400):
        """Four hidden layers, the last one without activation."""
        return cls(width, (hidden,) * 4, ("sigmoid", "tanh", "tanh", "identity", "identity"))


def mlp_init(spec, rng):
    """Glorot-uniform weights, zero biases; returns ``[W0, b0, W1, b1, ...]``."""
    params = []
    for fan_in, fan_out in zip(spec.widths[:-1], spec.widths[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        params.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        params.append(np.zeros(fan_out))
    return params


def mlp_zeros(spec):
    return [np.zeros_like(p) for p in mlp_init(spec, np.random.default_rng(0))]


def mlp_forward(params, spec, x):
    if np.shape(ad.value(x))[-1] != spec.input_width:
        raise ShapeMismatch(f"input width {np.shape(ad.value(x))[-1]} != {spec.input_width}")
    h = x
    for layer, act in enumerate(spec.activations):
        W, b = params[2 * layer], params[2 * layer + 1]
        h = ACTIVATIONS[act](h @ W + b)
    return h


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params, lr=1e-3, **kw):
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], 0, lr, **kw)


@numba.njit(cache=True, fastmath=False)
def _adam_kernel(p, g, m, v, beta1, beta2, step, eps):
    for i in range(p.size):
        gi = g[i]
        mi = beta1 * m[i] + (1.0 - beta1) * gi
        vi = beta2 * v[i] + (1.0 - beta2) * (gi * gi)
        m[i] = mi
        v[i] = vi
        p[i] -= step * mi / (np.sqrt(vi) + eps)


def adam_step(state, params, grads):
    """One bias-corrected Adam step that decreases the loss.

    Updates ``state`` and ``params`` in place and returns both.
    """
    state.t += 1
    c1 = 1.0 - state.beta1 ** state.t
    c2 = 1.0 - state.beta2 ** state.t
    # lr * m_hat / (sqrt(v_hat) + eps) with the bias corrections folded in
    step = state.lr * np.sqrt(c2) / c1
    eps = state.eps * np.sqrt(c2)
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ShapeMismatch(f"gradient shape {g.shape} != parameter shape {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient("non-finite gradient passed to Adam")
        _adam_kernel(p.reshape(-1), np.ascontiguousarray(g, dtype=np.float64).reshape(-1),
                     m.reshape(-1), v.reshape(-1), state.beta1, state.beta2, step, eps)
    return params, state


def _digest(arrays):
    h = hashlib.sha256()
    for a in arrays:
        h.update(np.ascontiguousarray(a).tobytes())
    return h.hexdigest()


@dataclass
class MetaResult:
    best_loss: float
    best: list  # best value of each variable
    initial_loss: float
    losses: np.ndarray  # loss of the iterate at each iteration
    best_losses: np.ndarray  # running best after each iteration
    best_iteration: int  # 0 means the starting point was never beaten
    input_digests: tuple = field(default=("", ""))
    params: list = field(default=None, repr=False)

    @property
    def best_single(self):
        return self.best[0]


def meta_optimize(objective, x0s, specs, T, lrs, rng=None, projections=None, params=None):
    """Run the learned optimizer over any number of variables.

    ``objective(*xs)`` returns the loss for real vectors ``xs`` (arrays or
    tape tensors).  ``projections[i]`` (or ``None``) maps a raw iterate to a
    feasible one and must be tape-aware.
    """
    n = len(x0s)
    if T < 1:
        raise ValueError("T must be at least 1")
    x0s = [np.asarray(x, dtype=np.float64).copy() for x in x0s]
    projections = list(projections) if projections is not None else [None] * n
    if params is None:
        params = [mlp_init(s, rng) for s in specs]
    else:
        params = [[np.array(p, dtype=np.float64) for p in ps] for ps in params]
    for s, x in zip(specs, x0s):
        if s.input_width != x.size or s.output_width != x.size:
            raise ShapeMismatch(f"MLP widths {s.input_width}/{s.output_width} != variable size {x.size}")
    adams = [AdamState.zeros_like(ps, lr) for ps, lr in zip(params, lrs)]

    tape = ad.Tape()
    slots = [tape.param(x) for x in x0s]
    loss0 = objective(*slots)
    initial = float(ad.value(loss0))
    if not np.isfinite(initial):
        raise NonFiniteLoss("initial loss is not finite", iteration=0)
    g0s = ad.grad(loss0, slots) if isinstance(loss0, ad.Tensor) else [np.zeros_like(x) for x in x0s]
    for g in g0s:
        g.flags.writeable = False
    first_digest = _digest(g0s)

    best_loss, best = initial, [x.copy() for x in x0s]
    best_iter = 0
    losses = np.empty(T)
    best_losses = np.empty(T)
    for t in range(T):
        tape = ad.Tape()
        thetas = [[tape.param(p, copy=False) for p in ps] for ps in params]
        xs = []
        for i in range(n):
            x = x0s[i] + mlp_forward(thetas[i], specs[i], g0s[i])
            if projections[i] is not None:
                x = projections[i](x)
            xs.append(x)
        loss = objective(*xs)
        lv = float(ad.value(loss))
        if not np.isfinite(lv):
            raise NonFiniteLoss(f"loss became {lv} at iteration {t + 1}", iteration=t + 1)
        if lv < best_loss:
            best_loss = lv
            best = [np.array(ad.value(x), dtype=np.float64) for x in xs]
            best_iter = t + 1
        losses[t] = lv
        best_losses[t] = best_loss
        flat = [p for ps in thetas for p in ps]
        grads = ad.grad(loss, flat) if isinstance(loss, ad.Tensor) else [np.zeros(p.shape) for p in flat]
        pos = 0
        for i in range(n):
            k = len(params[i])
            if adams[i].lr != 0.0:
                adam_step(adams[i], params[i], grads[pos:pos + k])
            pos += k
    return MetaResult(best_loss, best, initial, losses, best_losses, best_iter,
                      (first_digest, _digest(g0s)), params)


def meta_optimize_single(objective, x0, spec, T, lr, rng=None, projection=None, params=None):
    return meta_optimize(objective, [x0], [spec], T, [lr], rng,
                         [projection], None if params is None else [params])


def meta_optimize_dual(objective, x0_1, x0_2, specs, T, lrs, rng=None, projections=(None, None),
                       params=None):
    return meta_optimize(objective, [x0_1, x0_2], list(specs), T, list(lrs), rng,
                         list(projections), params)
