"""Conditional encoder-decoder that maps (transcript, WER code) to CTC posterior frames."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from .. import autograd as ag
from ..autograd import Tensor, no_grad
from ..core import BLANK_ID, STREAM_INIT, SeedSpec

LOG_CLAMP = 1e-12
NEG_INF = -1e9


@dataclass(frozen=True)
class SimArch:
    V: int = 32
    K: int = 3
    enc_layers: int = 2
    dec_layers: int = 2
    d_model: int = 64
    n_heads: int = 4
    d_ff: int = 128
    max_T: int = 64
    fusion: str = "prepend"

    def __post_init__(self):
        if self.d_model % self.n_heads:
            raise ValueError(f"d_model={self.d_model} not divisible by n_heads={self.n_heads}")
        if self.max_T < 1:
            raise ValueError("max_T must be at least 1")
        if self.V < 2 or self.K < 1:
            raise ValueError("need V >= 2 and K >= 1")
        if self.fusion not in ("prepend", "add"):
            raise ValueError(f"fusion must be 'prepend' or 'add', got {self.fusion!r}")

    def to_dict(self) -> dict:
        return asdict(self)


Params = dict  # name -> Tensor, insertion-ordered


def _shapes(arch: SimArch) -> dict:
    """Parameter name -> (shape, init bound). LayerNorm gains are initialised to one, biases to zero."""
    d, f, V = arch.d_model, arch.d_ff, arch.V
    lin = lambda n_in: 1.0 / math.sqrt(n_in)
    spec = {
        # one-hot inputs have fan-in 1
        "tok_emb": ((V, d), 1.0),
        "code_emb": ((arch.K, d), 1.0),
    }

    def attn(prefix):
        for w in ("q", "k", "v", "o"):
            spec[f"{prefix}.w{w}"] = ((d, d), lin(d))
            spec[f"{prefix}.b{w}"] = ((d,), lin(d))

    def ln(prefix):
        spec[f"{prefix}.g"] = ((d,), None)
        spec[f"{prefix}.b"] = ((d,), None)

    def ff(prefix):
        spec[f"{prefix}.w1"] = ((d, f), lin(d))
        spec[f"{prefix}.b1"] = ((f,), lin(d))
        spec[f"{prefix}.w2"] = ((f, d), lin(f))
        spec[f"{prefix}.b2"] = ((d,), lin(f))

    for l in range(arch.enc_layers):
        ln(f"enc.{l}.ln1"); attn(f"enc.{l}.self"); ln(f"enc.{l}.ln2"); ff(f"enc.{l}.ff")
    ln("enc.ln_f")
    spec["dec.bos"] = ((d,), 1.0)
    spec["dec.in_w"] = ((V, d), lin(V))
    spec["dec.in_b"] = ((d,), lin(V))
    for l in range(arch.dec_layers):
        ln(f"dec.{l}.ln1"); attn(f"dec.{l}.self")
        ln(f"dec.{l}.ln2"); attn(f"dec.{l}.cross")
        ln(f"dec.{l}.ln3"); ff(f"dec.{l}.ff")
    ln("dec.ln_f")
    spec["out.w"] = ((d, V), lin(d))
    spec["out.b"] = ((V,), lin(d))
    spec["stop.w"] = ((d, 1), lin(d))
    spec["stop.b"] = ((1,), lin(d))
    return spec


def init_bounds(arch: SimArch) -> dict:
    return {k: (1.0 if b is None else b) for k, (_, b) in _shapes(arch).items()}


def init_params(arch: SimArch, seed: int = 0) -> Params:
    rng = SeedSpec(seed).rng(STREAM_INIT)
    params = {}
    for name, (shape, bound) in _shapes(arch).items():
        if bound is None:
            data = np.ones(shape) if name.endswith(".g") else np.zeros(shape)
        else:
            data = rng.uniform(-bound, bound, size=shape)
        params[name] = Tensor(data, requires_grad=True, name=name)
    return params


def sinusoid(n: int, d: int) -> np.ndarray:
    pos = np.arange(n)[:, None]
    i = np.arange(d)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / d)
    return np.where(i % 2 == 0, np.sin(angle), np.cos(angle))


# ---------------------------------------------------------------- blocks

def _linear(x, p, w, b):
    return ag.add(ag.matmul(x, p[w]), p[b])


def _ln(x, p, prefix):
    return ag.layer_norm(x, p[f"{prefix}.g"], p[f"{prefix}.b"])


def _attention(xq, xkv, p, prefix, n_heads, bias):
    B, Tq, d = xq.shape
    Tk = xkv.shape[1]
    dh = d // n_heads
    q = ag.transpose(ag.reshape(_linear(xq, p, f"{prefix}.wq", f"{prefix}.bq"), (B, Tq, n_heads, dh)), (0, 2, 1, 3))
    k = ag.transpose(ag.reshape(_linear(xkv, p, f"{prefix}.wk", f"{prefix}.bk"), (B, Tk, n_heads, dh)), (0, 2, 3, 1))
    v = ag.transpose(ag.reshape(_linear(xkv, p, f"{prefix}.wv", f"{prefix}.bv"), (B, Tk, n_heads, dh)), (0, 2, 1, 3))
    scores = ag.add(ag.scale(ag.matmul(q, k), 1.0 / math.sqrt(dh)), bias)
    ctx = ag.matmul(ag.row_softmax(scores), v)
    ctx = ag.reshape(ag.transpose(ctx, (0, 2, 1, 3)), (B, Tq, d))
    return _linear(ctx, p, f"{prefix}.wo", f"{prefix}.bo")


def _ff(x, p, prefix):
    h = ag.relu(_linear(x, p, f"{prefix}.w1", f"{prefix}.b1"))
    return _linear(h, p, f"{prefix}.w2", f"{prefix}.b2")


def _key_bias(valid: np.ndarray) -> np.ndarray:
    """(B, S) validity -> additive (B, 1, 1, S) attention bias."""
    return np.where(valid, 0.0, NEG_INF)[:, None, None, :]


def _causal_bias(T: int) -> np.ndarray:
    return np.triu(np.full((T, T), NEG_INF), k=1)[None, None]


# ---------------------------------------------------------------- encoder / decoder

@dataclass
class Memory:
    states: Tensor          # (B, S, d)
    valid: np.ndarray       # (B, S) bool


def pad_tokens(transcripts: Sequence, pad_id: int = BLANK_ID):
    U = max(len(y) for y in transcripts)
    tokens = np.full((len(transcripts), U), pad_id, dtype=np.int64)
    valid = np.zeros((len(transcripts), U), dtype=bool)
    for i, y in enumerate(transcripts):
        tokens[i, : len(y)] = y
        valid[i, : len(y)] = True
    return tokens, valid


def encode_batch(transcripts: Sequence, codes: Sequence[int], params: Params, arch: SimArch) -> Memory:
    """Embed transcripts with sinusoidal positions, fuse the WER code and run the encoder.

    With ``fusion='prepend'`` the code embedding occupies memory slot 0, giving
    U+1 memory positions; with ``'add'`` it is added to every token slot.
    """
    codes = np.asarray(codes, dtype=np.int64)
    if codes.min() < 1 or codes.max() > arch.K:
        raise ValueError(f"WER code outside [1, {arch.K}]: {codes.tolist()}")
    for y in transcripts:
        y = np.asarray(y)
        if y.size < 1 or y.min() < 0 or y.max() >= arch.V:
            raise ValueError(f"transcript token outside [0, {arch.V}): {y.tolist()}")
    tokens, valid = pad_tokens(transcripts)
    B, U = tokens.shape
    x = ag.add(ag.embedding_lookup(params["tok_emb"], tokens), sinusoid(U, arch.d_model))
    code = ag.reshape(ag.embedding_lookup(params["code_emb"], codes - 1), (B, 1, arch.d_model))
    if arch.fusion == "prepend":
        x = ag.concat([code, x], axis=1)
        valid = np.concatenate([np.ones((B, 1), dtype=bool), valid], axis=1)
    else:
        x = ag.add(x, code)
    bias = _key_bias(valid)
    for l in range(arch.enc_layers):
        h = _ln(x, params, f"enc.{l}.ln1")
        x = ag.add(x, _attention(h, h, params, f"enc.{l}.self", arch.n_heads, bias))
        x = ag.add(x, _ff(_ln(x, params, f"enc.{l}.ln2"), params, f"enc.{l}.ff"))
    return Memory(_ln(x, params, "enc.ln_f"), valid)


def encode(y, c: int, params: Params, arch: SimArch) -> Tensor:
    """Single-transcript memory of shape (U+1, d_model) under prepend fusion."""
    mem = encode_batch([y], [c], params, arch)
    return ag.reshape(mem.states, mem.states.shape[1:])


def _decoder_inputs(prev_frames: Optional[Tensor], B: int, params: Params, arch: SimArch) -> Tensor:
    """BOS vector at step 0, a learned linear map of frame t-1 at step t."""
    bos = ag.add(np.zeros((B, 1, arch.d_model)), params["dec.bos"])
    if prev_frames is None or prev_frames.shape[1] == 0:
        return bos
    return ag.concat([bos, _linear(prev_frames, params, "dec.in_w", "dec.in_b")], axis=1)


def decode(inputs: Tensor, memory: Memory, params: Params, arch: SimArch):
    """Run the decoder stack; returns (posteriors (B,T,V), stop logits (B,T))."""
    B, T, d = inputs.shape
    h = ag.add(inputs, sinusoid(T, d))
    self_bias = _causal_bias(T)
    cross_bias = _key_bias(memory.valid)
    for l in range(arch.dec_layers):
        a = _ln(h, params, f"dec.{l}.ln1")
        h = ag.add(h, _attention(a, a, params, f"dec.{l}.self", arch.n_heads, self_bias))
        a = _ln(h, params, f"dec.{l}.ln2")
        h = ag.add(h, _attention(a, memory.states, params, f"dec.{l}.cross", arch.n_heads, cross_bias))
        h = ag.add(h, _ff(_ln(h, params, f"dec.{l}.ln3"), params, f"dec.{l}.ff"))
    h = _ln(h, params, "dec.ln_f")
    probs = ag.row_softmax(_linear(h, params, "out.w", "out.b"))
    stop = ag.reshape(_linear(h, params, "stop.w", "stop.b"), (B, T))
    return probs, stop


def forward_teacher_forced(memory: Memory, targets: np.ndarray, params: Params, arch: SimArch):
    """Teacher-forced pass over padded targets (B, T, V)."""
    targets = np.asarray(targets, dtype=np.float64)
    if targets.ndim != 3 or targets.shape[2] != arch.V or targets.shape[0] != memory.states.shape[0]:
        raise ValueError(f"targets shape {targets.shape} inconsistent with batch "
                         f"{memory.states.shape[0]} and V={arch.V}")
    prev = Tensor(targets[:, :-1])
    return decode(_decoder_inputs(prev, targets.shape[0], params, arch), memory, params, arch)


def stop_targets(mask: np.ndarray) -> np.ndarray:
    """1 at the last valid frame (the step after which generation should end), else 0."""
    mask = np.asarray(mask, dtype=np.float64)
    nxt = np.concatenate([mask[:, 1:], np.zeros((mask.shape[0], 1))], axis=1)
    return mask * (1.0 - nxt)


def loss_sim(probs: Tensor, targets: np.ndarray, mask: np.ndarray,
             stop_logits: Optional[Tensor] = None, lam_stop: float = 0.1):
    """Mask-normalised posterior cross-entropy averaged over the batch, plus the stop-flag BCE.

    Returns (total loss Tensor, CE term Tensor).
    """
    mask = np.asarray(mask, dtype=np.float64)
    if mask.ndim == 1:
        mask = mask[None]
    if np.any(mask.sum(axis=-1) == 0):
        raise ValueError("loss_sim: every sequence needs at least one valid frame")
    targets = np.asarray(targets, dtype=np.float64).reshape(probs.shape)
    # masked positions must not leak non-finite values into the sum
    targets = np.where(mask[..., None] > 0, targets, 0.0)
    frame_ce = ag.scale(ag.sum_(ag.mul(ag.log(probs, clamp=LOG_CLAMP), targets), axis=-1), -1.0)
    ce = ag.mean(ag.masked_mean(frame_ce, mask))
    if stop_logits is None or lam_stop == 0.0:
        return ce, ce
    s = stop_targets(mask)
    bce = ag.add(ag.softplus(stop_logits), ag.scale(ag.mul(stop_logits, s), -1.0))
    total = ag.add(ce, ag.scale(ag.mean(ag.masked_mean(bce, mask)), lam_stop))
    return total, ce


def teacher_forced_posteriors(transcripts, codes, teacher_seqs, params: Params, arch: SimArch):
    """Teacher-forced simulated frames for each sequence, cropped to its valid length."""
    lens = [min(len(P), arch.max_T) for P in teacher_seqs]
    T = max(lens)
    targets = np.zeros((len(teacher_seqs), T, arch.V))
    targets[:, :, BLANK_ID] = 1.0
    for i, P in enumerate(teacher_seqs):
        targets[i, : lens[i]] = P[: lens[i]]
    with no_grad():
        mem = encode_batch(transcripts, codes, params, arch)
        probs, _ = forward_teacher_forced(mem, targets, params, arch)
    return [probs.data[i, :n].copy() for i, n in enumerate(lens)]


def simulate_batch(transcripts, codes, params: Params, arch: SimArch, max_T: Optional[int] = None):
    """Autoregressive generation conditioned only on (transcript, code).

    Each emitted frame is fed back as the next decoder input; a sequence stops
    once its stop-flag sigmoid exceeds 0.5 or at ``max_T`` frames.
    """
    max_T = arch.max_T if max_T is None else max_T
    B = len(transcripts)
    with no_grad():
        mem = encode_batch(transcripts, codes, params, arch)
        frames = np.zeros((B, 0, arch.V))
        lengths = np.full(B, max_T)
        done = np.zeros(B, dtype=bool)
        for t in range(max_T):
            inputs = _decoder_inputs(Tensor(frames), B, params, arch)
            probs, stop = decode(inputs, mem, params, arch)
            frames = np.concatenate([frames, probs.data[:, -1:]], axis=1)
            halt = (stop.data[:, -1] > 0.0) & ~done
            lengths[halt] = t + 1
            done |= halt
            if done.all():
                break
    return [frames[i, : lengths[i]].copy() for i in range(B)]


def simulate(y, c: int, params: Params, arch: SimArch, max_T: Optional[int] = None) -> np.ndarray:
    return simulate_batch([y], [c], params, arch, max_T)[0]
