"""Conditional text-to-posterior simulator: model, training, checkpoints and an estimator wrapper."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .checkpoint import load_checkpoint, save_checkpoint
from .model import (Memory, SimArch, encode, encode_batch, forward_teacher_forced, init_params,
                    loss_sim, simulate, simulate_batch, teacher_forced_posteriors)
from .training import TrainConfig, TrainState, new_state, train


class CTCPosteriorSimulator(BaseEstimator):
    """Estimator over supervision tuples.

    ``fit`` takes a sequence of :class:`~ctcsim.core.SupervisionTuple`;
    ``predict`` takes ``(transcript, code)`` pairs and returns one posterior
    sequence per pair; ``score`` is the negative teacher-forced cross-entropy.
    """

    def __init__(self, vocab_size=32, n_codes=3, enc_layers=2, dec_layers=2, d_model=64,
                 n_heads=4, d_ff=128, max_T=64, fusion="prepend", lr=5e-5, epochs=5,
                 batch_size=32, weight_decay=0.01, clip_norm=1.0, lam_stop=0.1, lr_decay=1.0,
                 balance_bins=False, seed=0):
        self.vocab_size = vocab_size
        self.n_codes = n_codes
        self.enc_layers = enc_layers
        self.dec_layers = dec_layers
        self.d_model = d_model
        self.n_heads = n_heads
        self.d_ff = d_ff
        self.max_T = max_T
        self.fusion = fusion
        self.lr = lr
        self.epochs = epochs
        self.batch_size = batch_size
        self.weight_decay = weight_decay
        self.clip_norm = clip_norm
        self.lam_stop = lam_stop
        self.lr_decay = lr_decay
        self.balance_bins = balance_bins
        self.seed = seed

    def _arch(self) -> SimArch:
        return SimArch(V=self.vocab_size, K=self.n_codes, enc_layers=self.enc_layers,
                       dec_layers=self.dec_layers, d_model=self.d_model, n_heads=self.n_heads,
                       d_ff=self.d_ff, max_T=self.max_T, fusion=self.fusion)

    def _train_config(self) -> TrainConfig:
        return TrainConfig(lr=self.lr, epochs=self.epochs, batch_size=self.batch_size,
                           seed=self.seed, clip_norm=self.clip_norm,
                           weight_decay=self.weight_decay, lam_stop=self.lam_stop,
                           lr_decay=self.lr_decay, balance_bins=self.balance_bins)

    def fit(self, X, y=None):
        self.arch_ = self._arch()
        self.state_ = train(list(X), self.arch_, self._train_config())
        self.params_ = self.state_.params
        self.loss_trace_ = list(self.state_.trace)
        return self

    def predict(self, X):
        pairs = list(X)
        return simulate_batch([t for t, _ in pairs], [c for _, c in pairs], self.params_, self.arch_)

    def score(self, X, y=None) -> float:
        tuples = list(X)
        outs = teacher_forced_posteriors([t.transcript for t in tuples], [t.code for t in tuples],
                                         [t.teacher for t in tuples], self.params_, self.arch_)
        total, frames = 0.0, 0
        for t, Q in zip(tuples, outs):
            P = t.teacher[: len(Q)]
            total += float(-(P * np.log(np.maximum(Q, 1e-12))).sum())
            frames += len(Q)
        return -total / frames

    def save(self, path) -> None:
        save_checkpoint(path, self.state_, self.arch_, self._train_config())

    @classmethod
    def from_checkpoint(cls, path) -> "CTCPosteriorSimulator":
        state, arch, cfg = load_checkpoint(path)
        est = cls(vocab_size=arch.V, n_codes=arch.K, enc_layers=arch.enc_layers,
                  dec_layers=arch.dec_layers, d_model=arch.d_model, n_heads=arch.n_heads,
                  d_ff=arch.d_ff, max_T=arch.max_T, fusion=arch.fusion, lr=cfg.lr,
                  epochs=cfg.epochs, batch_size=cfg.batch_size, weight_decay=cfg.weight_decay,
                  clip_norm=cfg.clip_norm, lam_stop=cfg.lam_stop, lr_decay=cfg.lr_decay,
                  balance_bins=cfg.balance_bins, seed=cfg.seed)
        est.arch_, est.state_, est.params_ = arch, state, state.params
        est.loss_trace_ = list(state.trace)
        return est


__all__ = ["CTCPosteriorSimulator", "Memory", "SimArch", "TrainConfig", "TrainState", "encode",
           "encode_batch", "forward_teacher_forced", "init_params", "load_checkpoint", "loss_sim",
           "new_state", "save_checkpoint", "simulate", "simulate_batch",
           "teacher_forced_posteriors", "train"]
