"""Scalar-valued probes of every autograd primitive, shared by unit and acceptance tests.

Each case maps a name to ``(f, inputs)`` where ``f(inputs)`` returns a scalar
Tensor; a fixed random weighting turns tensor outputs into scalars so every
output coordinate contributes to the checked gradient.
"""
import zlib

import numpy as np

from ctcsim import autograd as ag
from ctcsim.autograd import Tensor


def _probe(out, rng):
    w = rng.normal(size=out.shape)
    return ag.sum_(ag.mul(out, Tensor(w)))


def primitive_cases(seed=0):
    rng = np.random.default_rng(seed)

    def T(*shape, lo=None):
        x = rng.normal(size=shape)
        if lo is not None:
            x = lo + np.abs(x)
        return Tensor(x, requires_grad=True)

    def away_from_zero(*shape):
        x = rng.normal(size=shape)
        return Tensor(np.sign(x) * (0.1 + np.abs(x)), requires_grad=True)

    W = {}

    def case(name, fn, inputs):
        key = zlib.crc32(name.encode())
        W[name] = (lambda xs: _probe(fn(xs), np.random.default_rng(key)), inputs)

    mask = np.array([[1, 1, 0, 0], [1, 1, 1, 0], [1, 0, 0, 0]], dtype=float)
    ids = np.array([[0, 2, 2], [4, 1, 0]])
    case("add", lambda xs: ag.add(xs[0], xs[1]), [T(3, 4), T(4)])
    case("mul", lambda xs: ag.mul(xs[0], xs[1]), [T(3, 4), T(3, 1)])
    case("scale", lambda xs: ag.scale(xs[0], -2.5), [T(2, 5)])
    case("matmul", lambda xs: ag.matmul(xs[0], xs[1]), [T(2, 3, 4), T(4, 5)])
    case("transpose", lambda xs: ag.transpose(xs[0], (0, 2, 1)), [T(2, 3, 4)])
    case("reshape", lambda xs: ag.reshape(xs[0], (4, 3)), [T(2, 6)])
    case("row_softmax", lambda xs: ag.row_softmax(xs[0]), [T(3, 5)])
    case("log", lambda xs: ag.log(xs[0]), [T(3, 4, lo=0.2)])
    case("log_clamped", lambda xs: ag.log(xs[0], clamp=1e-12), [T(3, 4, lo=0.2)])
    case("relu", lambda xs: ag.relu(xs[0]), [away_from_zero(3, 4)])
    case("softplus", lambda xs: ag.softplus(xs[0]), [T(3, 4)])
    case("sigmoid", lambda xs: ag.sigmoid(xs[0]), [T(3, 4)])
    case("sum", lambda xs: ag.sum_(xs[0], axis=1), [T(3, 4)])
    case("mean", lambda xs: ag.mean(xs[0], axis=0), [T(3, 4)])
    case("masked_mean", lambda xs: ag.masked_mean(xs[0], mask), [T(3, 4)])
    case("layer_norm", lambda xs: ag.layer_norm(xs[0], xs[1], xs[2]), [T(3, 6), T(6), T(6)])
    case("embedding_lookup", lambda xs: ag.embedding_lookup(xs[0], ids), [T(5, 3)])
    case("concat", lambda xs: ag.concat([xs[0], xs[1]], axis=1), [T(2, 3), T(2, 2)])
    case("slice", lambda xs: ag.slice_(xs[0], (slice(None), slice(1, 3))), [T(3, 4)])
    return W


LINEAR = {"add", "scale", "transpose", "reshape", "sum", "mean", "masked_mean",
          "embedding_lookup", "concat", "slice"}
