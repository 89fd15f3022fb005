import math

import numpy as np
import pytest

from charnmt.layers import GruParams
from charnmt.model import ModelConfig, init_params


def tiny_model(variant, src_vocab=7, trg_vocab=6, embed=3, hidden=4, attn=3, seed=0,
               space_id=4, scale=0.8):
    """A small model with every parameter (biases included) drawn from U(-scale, scale)."""
    cfg = ModelConfig(variant, src_vocab, trg_vocab, space_id, embed=embed, hidden=hidden, attn=attn)
    params = init_params(cfg, seed)
    rng = np.random.default_rng(seed + 1000)
    for p in params.values():
        p.data[...] = rng.uniform(-scale, scale, size=p.shape)
    return cfg, params


def gru_scalar_loop(x, h, p: GruParams):
    """Plain-Python GRU with explicit loops, independent of the tensor code."""
    W = {k: getattr(p, k).data for k in GruParams._fields}
    n = len(h)

    def affine(Wx, Ux, b, xv, hv):
        return [sum(Wx[i][j] * xv[j] for j in range(len(xv)))
                + sum(Ux[i][j] * hv[j] for j in range(n)) + b[i] for i in range(n)]

    def sig(v):
        return 1.0 / (1.0 + math.exp(-v))

    z = [sig(v) for v in affine(W["W_z"], W["U_z"], W["b_z"], x, h)]
    r = [sig(v) for v in affine(W["W_r"], W["U_r"], W["b_r"], x, h)]
    rh = [r[i] * h[i] for i in range(n)]
    c = [math.tanh(v) for v in affine(W["W_h"], W["U_h"], W["b_h"], x, rh)]
    return [(1 - z[i]) * h[i] + z[i] * c[i] for i in range(n)]


@pytest.fixture
def char_model():
    return tiny_model("char")


@pytest.fixture
def c2w_model():
    return tiny_model("char2word")
