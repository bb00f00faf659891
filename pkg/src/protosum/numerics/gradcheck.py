"""Central finite-difference gradient checking."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor


def relative_error(analytic, numeric) -> float:
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)
    return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0


def grad_check(
    f: Callable[[], Tensor],
    point: Sequence[Tensor] | Tensor,
    eps: float = 1e-5,
    coords: dict[int, np.ndarray] | None = None,
) -> float:
    """Max relative error between backward gradients and central differences.

    ``f`` takes no arguments and reads the tensors in ``point`` (which must
    require gradients). ``coords`` optionally restricts the comparison, per
    tensor index, to a subset of flat coordinates; by default every
    coordinate is checked.
    """
    tensors = [point] if isinstance(point, Tensor) else list(point)
    for t in tensors:
        t.grad = None
    f().backward()
    analytic = [t.grad.copy() if t.grad is not None else np.zeros_like(t.data) for t in tensors]
    worst = 0.0
    for i, t in enumerate(tensors):
        flat = t.data.reshape(-1)
        idx = range(flat.size) if coords is None or i not in coords else coords[i]
        numeric, exact = [], []
        for j in idx:
            orig = flat[j]
            flat[j] = orig + eps
            up = f().item()
            flat[j] = orig - eps
            down = f().item()
            flat[j] = orig
            numeric.append((up - down) / (2 * eps))
            exact.append(analytic[i].reshape(-1)[j])
        worst = max(worst, relative_error(exact, numeric))
    return worst


def _param(rng: np.random.Generator, *shape, low=-1.0, high=1.0) -> Tensor:
    return Tensor(rng.uniform(low, high, shape), requires_grad=True)


def _away_from_zero(rng: np.random.Generator, *shape) -> Tensor:
    """Values with |x| in [0.1, 1], keeping finite differences off kinks."""
    return Tensor(rng.uniform(0.1, 1.0, shape) * rng.choice([-1.0, 1.0], shape), requires_grad=True)


def _primitive_cases(rng: np.random.Generator):
    """name -> (output builder, input tensors). Each builder's output is
    contracted with fixed random weights so no gradient vanishes by symmetry."""
    from . import nn
    from . import tensor as T

    a, b = _param(rng, 3, 4), _param(rng, 3, 4)
    pos = _param(rng, 3, 4, low=0.5, high=2.0)
    row = _param(rng, 4)
    m1, m2, m3 = _param(rng, 2, 3, 4), _param(rng, 4, 5), _param(rng, 2, 5, 3)
    w = _param(rng, 6, 3)
    gamma, beta = _param(rng, 4, low=0.5, high=1.5), _param(rng, 4)
    q, k, v = _param(rng, 2, 3, 4), _param(rng, 2, 5, 4), _param(rng, 2, 5, 4)
    mask = np.zeros((3, 4))
    mask[:, 1] = T.NEG_INF
    ids = np.array([[0, 2, 2], [5, 1, 0]])
    kink = _away_from_zero(rng, 3, 4)
    return {
        "add": (lambda: a + row, [a, row]),
        "sub": (lambda: a - b, [a, b]),
        "mul": (lambda: a * row, [a, row]),
        "div": (lambda: a / pos, [a, pos]),
        "neg": (lambda: -a, [a]),
        "relu": (lambda: T.relu(kink), [kink]),
        "sigmoid": (lambda: T.sigmoid(a * 3.0), [a]),
        "log_sigmoid": (lambda: T.log_sigmoid(a * 3.0), [a]),
        "exp": (lambda: T.exp(a), [a]),
        "log": (lambda: T.log(pos), [pos]),
        "clamp_min": (lambda: T.clamp_min(kink, 0.0), [kink]),
        "matmul": (lambda: m1 @ m2, [m1, m2]),
        "matmul_batched": (lambda: m3 @ m1, [m3, m1]),
        "sum_axis": (lambda: T.tsum(m1, axis=1), [m1]),
        "mean": (lambda: T.mean(m1, axis=-1, keepdims=True), [m1]),
        "reshape": (lambda: T.reshape(m1, (6, 4)), [m1]),
        "transpose": (lambda: T.transpose(m1, (2, 0, 1)), [m1]),
        "getitem": (lambda: m1[:, np.array([0, 2, 2]), 1:], [m1]),
        "concat": (lambda: T.concat([a, b], axis=0), [a, b]),
        "embedding": (lambda: T.embedding(w, ids), [w]),
        "softmax": (lambda: T.softmax(a, axis=-1), [a]),
        "softmax_masked": (lambda: T.softmax(a, axis=-1, mask=mask), [a]),
        "layer_norm": (lambda: T.layer_norm(a, gamma, beta), [a, gamma, beta]),
        "attention": (lambda: nn.multi_head_attention(q, k, v, 2)[0], [q, k, v]),
    }


def primitive_checks(seed: int, eps: float = 1e-5) -> dict[str, float]:
    """Max relative gradient error of every primitive at one random point."""
    rng = np.random.default_rng(seed)
    out = {}
    for name, (build, inputs) in _primitive_cases(rng).items():
        weights = rng.uniform(-1.0, 1.0, build().shape)
        out[name] = grad_check(lambda: (build() * weights).sum(), inputs, eps)
    return out
