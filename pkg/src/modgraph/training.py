"""Optimization: stratified splits, AdamW, LR plateau scheduling, and the
training loop with rotation augmentation and early stopping.

The loop is deterministic for a fixed seed: batch order, augmentation draws
and initial weights all come from seeded generators, so two runs produce
byte-identical history files and checkpoints.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import dsp
from .autodiff import Tensor

__all__ = ["DivergenceError", "split_dataset", "cross_entropy", "AdamW",
           "clip_grad_norm", "PlateauScheduler", "TrainConfig", "TrainResult",
           "train_model"]


class DivergenceError(RuntimeError):
    """Raised when the training loss stops being finite."""


def split_dataset(dataset, seed, fractions=(0.6, 0.2, 0.2), min_cell=5):
    """Stratified train/val/test indices.

    Every (label, SNR) cell is shuffled and cut with floor proportions, so
    each split sees every class at every SNR; the test split absorbs the
    remainder.  Cells smaller than ``min_cell`` records cannot be cut three
    ways meaningfully and raise.
    """
    if len(fractions) != 3 or abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"split_dataset: fractions must be 3 values summing to 1, got {fractions}")
    rng = np.random.default_rng(seed)
    train, val, test = [], [], []
    for key, idx in dataset.cells().items():
        if idx.size < min_cell:
            raise ValueError(
                f"split_dataset: cell (label={key[0]}, snr={key[1]}) has only "
                f"{idx.size} records; need at least {min_cell}")
        shuffled = rng.permutation(idx)
        n_train = int(np.floor(fractions[0] * idx.size))
        n_val = int(np.floor(fractions[1] * idx.size))
        train.append(shuffled[:n_train])
        val.append(shuffled[n_train:n_train + n_val])
        test.append(shuffled[n_train + n_val:])
    return (np.sort(np.concatenate(train)), np.sort(np.concatenate(val)),
            np.sort(np.concatenate(test)))


def cross_entropy(logits, labels):
    """Mean negative log-likelihood of integer ``labels`` under ``logits``."""
    labels = np.asarray(labels)
    b, c = logits.shape
    if labels.shape != (b,):
        raise ad.ShapeError(f"cross_entropy: {b} logit rows vs labels {labels.shape}")
    onehot = np.zeros((b, c), dtype=logits.dtype)
    onehot[np.arange(b), labels] = 1.0
    logp = ad.log_softmax(logits, axis=-1)
    return ad.neg(ad.reduce_mean(ad.reduce_sum(ad.mul(logp, Tensor(onehot)), axis=-1)))


class AdamW:
    """Adam with decoupled weight decay.

    The decay step ``theta -= lr * weight_decay * theta`` is applied
    separately from the gradient step, so a parameter with an all-zero
    gradient still shrinks by exactly that amount.
    """

    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8,
                 weight_decay=1e-2):
        self.params = [p for _, p in params] if params and isinstance(params[0], tuple) else list(params)
        self.lr = float(lr)
        self.betas = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self):
        self.t += 1
        b1, b2 = self.betas
        bc1 = 1.0 - b1 ** self.t
        bc2 = 1.0 - b2 ** self.t
        for p, m, v in zip(self.params, self._m, self._v):
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            if self.weight_decay:
                p.data -= self.lr * self.weight_decay * p.data
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def clip_grad_norm(params, max_norm):
    """Scale all gradients so their global L2 norm is at most ``max_norm``;
    returns the pre-clip norm."""
    params = [p for _, p in params] if params and isinstance(params[0], tuple) else list(params)
    grads = [p.grad for p in params if p.grad is not None]
    total = float(np.sqrt(sum(float(np.sum(g.astype(np.float64) ** 2)) for g in grads)))
    if total > max_norm > 0:
        scale = max_norm / total
        for g in grads:
            g *= scale
    return total


class PlateauScheduler:
    """Halve the learning rate when the validation loss stops improving.

    After ``patience`` consecutive epochs without a new best, the rate is
    multiplied by ``factor`` (never below ``min_lr``) and the stall counter
    resets; the historical best is kept.
    """

    def __init__(self, optimizer, factor=0.5, patience=5, min_lr=1e-6):
        self.optimizer = optimizer
        self.factor = factor
        self.patience = patience
        self.min_lr = min_lr
        self.best = np.inf
        self.stalled = 0

    def step(self, value):
        if value < self.best:
            self.best = value
            self.stalled = 0
            return False
        self.stalled += 1
        if self.stalled >= self.patience:
            self.optimizer.lr = max(self.optimizer.lr * self.factor, self.min_lr)
            self.stalled = 0
            return True
        return False


@dataclass
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 256
    epochs: int = 100
    early_stop_patience: int = 20
    plateau_patience: int = 5
    plateau_factor: float = 0.5
    min_lr: float = 1e-6
    weight_decay: float = 1e-2
    clip_norm: float = 5.0
    augment: bool = True
    aux_weight: float = 0.1
    seed: int = 0
    split_seed: int = 0


@dataclass
class TrainResult:
    history: list
    best_epoch: int
    best_val_loss: float
    epochs_run: int

    def history_csv(self):
        lines = ["epoch,train_loss,val_loss,val_acc,lr"]
        for row in self.history:
            lines.append("%d,%.6f,%.6f,%.6f,%.8f" % row)
        return "\n".join(lines) + "\n"


def _batch_inputs(model, frames, rng, augment):
    """Augmented I/Q plus spectrograms for one batch.

    Quarter-turn rotations only touch the I/Q branch: the magnitude
    spectrogram of a rotated record equals that of the original, so it is
    computed from the unrotated samples and the invariance is exact.
    """
    cfg = model.config
    specs = dsp.dstft_batch(frames[:, 0], frames[:, 1], n_dft=cfg.n_dft,
                            win_len=cfg.win_len).astype(model.dtype)
    if augment:
        turns = rng.integers(0, 4, size=frames.shape[0])
        frames = dsp.rotate_batch(frames, turns)
    return frames.astype(model.dtype), specs


def _epoch_loss(model, dataset, indices, batch_size):
    """Mean cross-entropy over a split, in eval mode, no gradients."""
    model.eval()
    frames = dataset.frames()
    labels = dataset.label
    total, correct, n = 0.0, 0, 0
    cfg = model.config
    with ad.no_grad():
        for start in range(0, indices.size, batch_size):
            sel = indices[start:start + batch_size]
            fb = frames[sel].astype(model.dtype)
            specs = dsp.dstft_batch(fb[:, 0], fb[:, 1], n_dft=cfg.n_dft,
                                    win_len=cfg.win_len).astype(model.dtype)
            logits = model.forward(fb, specs)
            loss = cross_entropy(logits, labels[sel])
            total += float(loss.data) * sel.size
            correct += int(np.sum(np.argmax(logits.data, -1) == labels[sel]))
            n += sel.size
    return total / n, correct / n


def train_model(model, dataset, train_idx, val_idx, config, log=None):
    """Run the optimization loop; the model ends at its best-validation state.

    ``log`` is an optional callable fed one formatted line per epoch.
    Returns a TrainResult whose history rows are
    (epoch, train_loss, val_loss, val_acc, lr).
    """
    train_idx = np.asarray(train_idx)
    val_idx = np.asarray(val_idx)
    order_rng = np.random.default_rng(config.seed)
    aug_rng = np.random.default_rng(config.seed + 1)
    opt = AdamW(model.params(), lr=config.lr, weight_decay=config.weight_decay)
    sched = PlateauScheduler(opt, factor=config.plateau_factor,
                             patience=config.plateau_patience, min_lr=config.min_lr)
    frames_all = dataset.frames()
    labels_all = dataset.label

    best_val = np.inf
    best_epoch = 0
    best_state = [arr.copy() for _, arr in model.state()]
    stalled = 0
    history = []

    for epoch in range(1, config.epochs + 1):
        model.train()
        order = order_rng.permutation(train_idx)
        running, seen = 0.0, 0
        for start in range(0, order.size, config.batch_size):
            sel = order[start:start + config.batch_size]
            fb, specs = _batch_inputs(model, frames_all[sel], aug_rng, config.augment)
            aux = [] if model.config.aux_losses else None
            logits = model.forward(fb, specs, aux=aux)
            loss = cross_entropy(logits, labels_all[sel])
            if aux:
                for term in aux:
                    loss = ad.add(loss, ad.mul(term, config.aux_weight))
            if not np.isfinite(loss.data):
                raise DivergenceError(f"training loss became {float(loss.data)} at epoch {epoch}")
            opt.zero_grad()
            loss.backward()
            clip_grad_norm(opt.params, config.clip_norm)
            opt.step()
            running += float(loss.data) * sel.size
            seen += sel.size

        val_loss, val_acc = _epoch_loss(model, dataset, val_idx, config.batch_size)
        if not np.isfinite(val_loss):
            raise DivergenceError(f"validation loss became {val_loss} at epoch {epoch}")
        row = (epoch, running / seen, val_loss, val_acc, opt.lr)
        history.append(row)
        if log is not None:
            log("epoch %3d  train %.4f  val %.4f  acc %.4f  lr %.2e" % row)

        if val_loss < best_val:
            best_val = val_loss
            best_epoch = epoch
            best_state = [arr.copy() for _, arr in model.state()]
            stalled = 0
        else:
            stalled += 1
            if stalled >= config.early_stop_patience:
                break
        sched.step(val_loss)

    for (_, arr), saved in zip(model.state(), best_state):
        arr[...] = saved
    model.eval()
    return TrainResult(history=history, best_epoch=best_epoch,
                       best_val_loss=float(best_val), epochs_run=len(history))
