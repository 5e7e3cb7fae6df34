"""Classification metrics and evaluation reports.

Everything is computed from a single confusion matrix (rows = true class,
columns = predicted class), so the individual metrics stay consistent with
each other.  Reports break accuracy out per SNR level, which is the natural
x-axis for channel-impaired recognition.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import dsp

__all__ = ["confusion_matrix", "accuracy", "macro_f1", "cohen_kappa",
           "MetricsReport", "evaluate_model", "top_confusions"]


def confusion_matrix(y_true, y_pred, n_classes):
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape or y_true.ndim != 1:
        raise ValueError(f"confusion_matrix: label shapes {y_true.shape} vs {y_pred.shape}")
    if y_true.size and (min(y_true.min(), y_pred.min()) < 0
                        or max(y_true.max(), y_pred.max()) >= n_classes):
        raise ValueError("confusion_matrix: labels out of range")
    conf = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(conf, (y_true, y_pred), 1)
    return conf


def accuracy(conf):
    conf = np.asarray(conf)
    total = conf.sum()
    return float(np.trace(conf) / total) if total else 0.0


def macro_f1(conf):
    """Unweighted mean of per-class F1; a class with no true and no predicted
    examples contributes zero rather than being skipped."""
    conf = np.asarray(conf, dtype=np.float64)
    tp = np.diag(conf)
    fp = conf.sum(axis=0) - tp
    fn = conf.sum(axis=1) - tp
    denom = 2 * tp + fp + fn
    f1 = np.divide(2 * tp, denom, out=np.zeros_like(tp, dtype=np.float64),
                   where=denom > 0)
    return float(f1.mean())


def cohen_kappa(conf):
    conf = np.asarray(conf, dtype=np.float64)
    total = conf.sum()
    if total == 0:
        return 0.0
    po = np.trace(conf) / total
    pe = float(conf.sum(axis=1) @ conf.sum(axis=0)) / total ** 2
    if pe >= 1.0:
        return 1.0 if po >= 1.0 else 0.0
    return float((po - pe) / (1.0 - pe))


def top_confusions(conf, label_names, count=3):
    """The ``count`` largest off-diagonal cells as (true, predicted, n)."""
    conf = np.asarray(conf)
    off = conf.astype(np.float64).copy()
    np.fill_diagonal(off, -1)
    order = np.argsort(off, axis=None, kind="stable")[::-1]
    out = []
    for flat in order[:count]:
        i, j = np.unravel_index(flat, conf.shape)
        out.append((label_names[i], label_names[j], int(conf[i, j])))
    return out


@dataclass
class MetricsReport:
    overall_accuracy: float
    macro_f1: float
    kappa: float
    confusion: np.ndarray
    per_snr_accuracy: dict = field(default_factory=dict)   # snr_db -> accuracy
    label_names: tuple = ()

    @property
    def best_snr(self):
        """(snr_db, accuracy) of the level with the highest accuracy."""
        if not self.per_snr_accuracy:
            return None
        snr = max(sorted(self.per_snr_accuracy), key=lambda s: self.per_snr_accuracy[s])
        return snr, self.per_snr_accuracy[snr]

    def summary_text(self):
        lines = [
            f"records          {int(self.confusion.sum())}",
            f"overall accuracy {self.overall_accuracy:.4f}",
            f"macro F1         {self.macro_f1:.4f}",
            f"Cohen kappa      {self.kappa:.4f}",
        ]
        for snr in sorted(self.per_snr_accuracy):
            lines.append(f"accuracy @ {snr:+d} dB = {self.per_snr_accuracy[snr]:.4f}")
        return "\n".join(lines) + "\n"

    def write_confusion_csv(self, path):
        names = list(self.label_names) or [f"class{i}" for i in range(len(self.confusion))]
        with open(path, "w") as f:
            f.write("true\\pred," + ",".join(names) + "\n")
            for name, row in zip(names, self.confusion):
                f.write(name + "," + ",".join(str(int(v)) for v in row) + "\n")
        return path

    def write_per_snr_csv(self, path):
        with open(path, "w") as f:
            f.write("snr_db,accuracy\n")
            for snr in sorted(self.per_snr_accuracy):
                f.write(f"{snr},{self.per_snr_accuracy[snr]:.6f}\n")
        return path


def batched_predictions(model, dataset, indices=None, batch_size=256):
    """Model predictions for the given record indices (all by default)."""
    idx = np.arange(dataset.n_records) if indices is None else np.asarray(indices)
    frames = dataset.frames()
    preds = np.empty(idx.size, dtype=np.int64)
    cfg = model.config
    for start in range(0, idx.size, batch_size):
        sel = idx[start:start + batch_size]
        fb = frames[sel].astype(model.dtype)
        specs = dsp.dstft_batch(fb[:, 0], fb[:, 1], n_dft=cfg.n_dft,
                                win_len=cfg.win_len).astype(model.dtype)
        preds[start:start + sel.size] = model.predict(fb, specs)
    return idx, preds


def evaluate_model(model, dataset, indices=None, batch_size=256):
    model.eval()
    with ad.no_grad():
        idx, preds = batched_predictions(model, dataset, indices, batch_size)
    truth = dataset.label[idx].astype(np.int64)
    conf = confusion_matrix(truth, preds, dataset.n_classes)
    per_snr = {}
    snrs = dataset.snr_db[idx]
    for snr in np.unique(snrs):
        m = snrs == snr
        per_snr[int(snr)] = float(np.mean(preds[m] == truth[m]))
    return MetricsReport(overall_accuracy=accuracy(conf), macro_f1=macro_f1(conf),
                         kappa=cohen_kappa(conf), confusion=conf,
                         per_snr_accuracy=per_snr,
                         label_names=tuple(dataset.label_names))
