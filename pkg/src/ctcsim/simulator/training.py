"""Teacher-forced AdamW training of the conditional simulator."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from ..autograd import AdamW, clip_grad_norm
from ..core import BLANK_ID, STREAM_SHUFFLE, NumericalError, SeedSpec, SupervisionTuple
from .model import Params, SimArch, encode_batch, forward_teacher_forced, init_params, loss_sim

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 5e-5
    epochs: int = 5
    batch_size: int = 32
    seed: int = 0
    clip_norm: float = 1.0
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.01
    lam_stop: float = 0.1
    lr_decay: float = 1.0   # per-epoch multiplier: epoch e runs at lr * lr_decay**e
    balance_bins: bool = False   # draw each epoch with probability 1/|bin| per tuple

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if not 0.0 < self.lr_decay <= 1.0:
            raise ValueError("lr_decay must lie in (0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainState:
    params: Params
    optimizer: AdamW
    epoch: int = 0
    trace: list = field(default_factory=list)


def make_batch(tuples: Sequence[SupervisionTuple], arch: SimArch):
    """Stack targets cropped to the longest valid length in the batch.

    Positions past a sequence's valid length carry the blank pad frame and mask 0;
    causal attention keeps the crop from changing any valid-position output.
    """
    lens = [min(t.target.valid_len if t.target is not None else len(t.teacher), arch.max_T)
            for t in tuples]
    T = max(lens)
    targets = np.zeros((len(tuples), T, arch.V))
    targets[:, :, BLANK_ID] = 1.0
    mask = np.zeros((len(tuples), T))
    for i, (t, n) in enumerate(zip(tuples, lens)):
        targets[i, :n] = t.teacher[:n]
        mask[i, :n] = 1.0
    return [t.transcript for t in tuples], [t.code for t in tuples], targets, mask


def batch_loss(batch, params: Params, arch: SimArch, lam_stop: float):
    transcripts, codes, targets, mask = batch
    mem = encode_batch(transcripts, codes, params, arch)
    probs, stop = forward_teacher_forced(mem, targets, params, arch)
    return loss_sim(probs, targets, mask, stop, lam_stop)


def epoch_order(tuples: Sequence[SupervisionTuple], cfg: TrainConfig, epoch: int) -> np.ndarray:
    """Tuple indices visited in ``epoch``.

    Plain runs use a permutation. With ``balance_bins`` the epoch keeps its size but
    samples with replacement so every WER bin is drawn equally often in expectation.
    """
    rng = SeedSpec(cfg.seed).rng(STREAM_SHUFFLE, epoch)
    n = len(tuples)
    if not cfg.balance_bins:
        return rng.permutation(n)
    codes = np.array([t.code for t in tuples])
    _, inverse, counts = np.unique(codes, return_inverse=True, return_counts=True)
    w = 1.0 / counts[inverse]
    return rng.choice(n, size=n, replace=True, p=w / w.sum())


def new_state(arch: SimArch, cfg: TrainConfig, params: Optional[Params] = None) -> TrainState:
    params = init_params(arch, cfg.seed) if params is None else params
    opt = AdamW(list(params.values()), lr=cfg.lr, betas=tuple(cfg.betas), eps=cfg.eps,
                weight_decay=cfg.weight_decay)
    return TrainState(params, opt)


def train(tuples: Sequence[SupervisionTuple], arch: SimArch, cfg: TrainConfig,
          state: Optional[TrainState] = None,
          on_epoch: Optional[Callable[[TrainState], None]] = None) -> TrainState:
    """Run epochs ``state.epoch .. cfg.epochs-1``.

    Epoch ``e`` shuffles with its own seeded stream and runs at ``lr * lr_decay**e``,
    so a resumed run retraces an uninterrupted one exactly.
    """
    if not tuples:
        raise ValueError("training set is empty")
    state = new_state(arch, cfg) if state is None else state
    params_list = list(state.params.values())
    n = len(tuples)
    while state.epoch < cfg.epochs:
        e = state.epoch
        order = epoch_order(tuples, cfg, e)
        state.optimizer.lr = cfg.lr * cfg.lr_decay ** e
        losses = []
        for bi, start in enumerate(range(0, n, cfg.batch_size)):
            batch = make_batch([tuples[i] for i in order[start:start + cfg.batch_size]], arch)
            state.optimizer.zero_grad()
            total, _ = batch_loss(batch, state.params, arch, cfg.lam_stop)
            value = float(total.data)
            if not np.isfinite(value):
                raise NumericalError(f"non-finite loss at epoch {e} batch {bi}")
            total.backward()
            clip_grad_norm(params_list, cfg.clip_norm)
            state.optimizer.step()
            losses.append(value)
        state.trace.append(float(np.mean(losses)))
        state.epoch += 1
        log.info("epoch %d mean loss %.6f", e + 1, state.trace[-1])
        if on_epoch is not None:
            on_epoch(state)
    return state
