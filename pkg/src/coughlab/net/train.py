"""Mini-batch training loop and hyperparameter grid search."""
from __future__ import annotations

import csv
import itertools
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import ConfigError, NumericError, TrainingDivergedError
from .model import _as_matrix, batch_losses, dropout_masks, group_by_length, loss_and_grad_batch, predict_batch
from .params import NetworkConfig, NetworkParams, init_params

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 16
    max_epochs: int = 100
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    gradient_clip_norm: float = 5.0
    early_stop_patience: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float


@dataclass
class History:
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False

    def column(self, name):
        return [getattr(r, name) for r in self.records]

    def best(self) -> EpochRecord:
        return self.records[self.best_epoch - 1]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "train_loss", "train_acc", "val_loss", "val_acc"])
            for r in self.records:
                w.writerow([r.epoch] + [repr(float(v)) for v in (r.train_loss, r.train_acc, r.val_loss, r.val_acc)])


class Adam:
    def __init__(self, cfg: TrainConfig):
        self.cfg = cfg
        self.m = {}
        self.v = {}
        self.t = 0

    def step(self, params: NetworkParams, grads: NetworkParams) -> None:
        c = self.cfg
        self.t += 1
        bc1 = 1.0 - c.beta1 ** self.t
        bc2 = 1.0 - c.beta2 ** self.t
        for k in grads.arrays:
            g = grads[k]
            m = self.m.setdefault(k, np.zeros_like(g))
            v = self.v.setdefault(k, np.zeros_like(g))
            m *= c.beta1
            m += (1.0 - c.beta1) * g
            v *= c.beta2
            v += (1.0 - c.beta2) * g * g
            params[k] -= c.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + c.eps)


class Sgd:
    def __init__(self, cfg: TrainConfig):
        self.cfg = cfg

    def step(self, params: NetworkParams, grads: NetworkParams) -> None:
        for k in grads.arrays:
            params[k] -= self.cfg.learning_rate * grads[k]


def _unpack(dataset):
    mats = [_as_matrix(f) for f, _ in dataset]
    labels = np.array([int(y) for _, y in dataset], dtype=int)
    return mats, labels


def evaluate_set(params, cfg, mats, labels) -> tuple[float, float]:
    """Mean loss and accuracy in inference mode; NaNs for an empty set."""
    if not mats:
        return math.nan, math.nan
    probs = predict_batch(params, cfg, mats)
    losses = batch_losses(probs, labels)
    acc = float(np.mean(np.argmax(probs, axis=1) == labels))
    return float(losses.mean()), acc


def input_statistics(mats) -> tuple[np.ndarray, np.ndarray]:
    frames = np.vstack(mats)
    std = frames.std(axis=0)
    std[std < 1e-8] = 1.0
    return frames.mean(axis=0), std


def train(train_set, val_set, net_cfg: NetworkConfig, train_cfg: TrainConfig, init: NetworkParams | None = None):
    """Fit the classifier; returns ``(best_params, history)``.

    ``train_set``/``val_set`` are sequences of ``(features, label)`` pairs.
    Within a mini-batch, equal-length sequences are processed together and
    the summed gradient is divided by the batch size. The snapshot with the
    lowest validation loss (training loss if ``val_set`` is empty) is
    returned.
    """
    mats, labels = _unpack(train_set)
    if not mats:
        raise ConfigError("training set is empty")
    val_mats, val_labels = _unpack(val_set or [])
    if np.any(labels < 0) or np.any(labels >= net_cfg.num_classes):
        raise ConfigError("training label outside [0, num_classes)")

    params = init.copy() if init is not None else init_params(net_cfg)
    if net_cfg.standardize_inputs and "in.mean" not in params:
        params["in.mean"], params["in.std"] = input_statistics(mats)
    opt = Adam(train_cfg) if train_cfg.optimizer == "adam" else Sgd(train_cfg)
    rng = np.random.default_rng(train_cfg.seed)
    history = History()
    best_score = math.inf
    best_params = params.copy()
    since_best = 0
    n = len(mats)

    for epoch in range(1, train_cfg.max_epochs + 1):
        order = rng.permutation(n)
        for start in range(0, n, train_cfg.batch_size):
            batch = order[start : start + train_cfg.batch_size]
            grads = params.zeros_like()
            batch_loss = 0.0
            for group in group_by_length([mats[i] for i in batch]):
                idx = batch[group]
                x = np.stack([mats[i] for i in idx])
                masks = dropout_masks(rng, net_cfg, len(idx), x.shape[1])
                l_sum, g, _ = loss_and_grad_batch(params, net_cfg, x, labels[idx], masks)
                batch_loss += l_sum
                for k in g.arrays:
                    grads[k] += g[k]
            if not math.isfinite(batch_loss):
                raise TrainingDivergedError(epoch)
            scale = 1.0 / len(batch)
            for k in grads.arrays:
                grads[k] *= scale
            norm = grads.global_norm()
            if not math.isfinite(norm):
                raise TrainingDivergedError(epoch)
            clip = train_cfg.gradient_clip_norm
            if clip and norm > clip:
                for k in grads.arrays:
                    grads[k] *= clip / norm
            opt.step(params, grads)

        tr_loss, tr_acc = evaluate_set(params, net_cfg, mats, labels)
        va_loss, va_acc = evaluate_set(params, net_cfg, val_mats, val_labels)
        if not math.isfinite(tr_loss) or (val_mats and not math.isfinite(va_loss)):
            raise TrainingDivergedError(epoch)
        history.records.append(EpochRecord(epoch, tr_loss, tr_acc, va_loss, va_acc))
        log.debug("epoch %d train_loss=%.4f train_acc=%.3f val_loss=%.4f val_acc=%.3f",
                  epoch, tr_loss, tr_acc, va_loss, va_acc)

        score = va_loss if val_mats else tr_loss
        if score < best_score:
            best_score = score
            best_params = params.copy()
            history.best_epoch = epoch
            since_best = 0
        else:
            since_best += 1
            if train_cfg.early_stop_patience and since_best >= train_cfg.early_stop_patience:
                history.stopped_early = True
                break

    if history.best_epoch == 0:
        history.best_epoch = 1
    return best_params, history


# --------------------------------------------------------------------------
# grid search
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class GridSearchSpec:
    hidden_units: tuple = (50,)
    num_bilstm_layers: tuple = (2,)
    dropout_rate: tuple = (0.3,)
    selection: str = "training-loss"

    def __post_init__(self):
        if not (self.hidden_units and self.num_bilstm_layers and self.dropout_rate):
            raise ConfigError("grid lists must be nonempty")
        if self.selection not in ("training-loss", "validation-accuracy"):
            raise ConfigError(f"unknown selection metric {self.selection!r}")

    def cells(self):
        return list(itertools.product(self.hidden_units, self.num_bilstm_layers, self.dropout_rate))


@dataclass
class GridRow:
    index: int
    hidden_units: int
    num_bilstm_layers: int
    dropout_rate: float
    n_params: int
    best_epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float
    diverged: bool = False


def grid_search(spec: GridSearchSpec, train_set, val_set, base_cfg: NetworkConfig, train_cfg: TrainConfig):
    """Train every cell of the grid with identical seeds and pick a winner.

    Ties on the selection metric go to fewer parameters, then lower
    dropout, then declaration order. Returns ``(best_cfg, rows)``.
    """
    rows = []
    for index, (hidden, layers, dropout) in enumerate(spec.cells()):
        cfg = base_cfg.replace(hidden_units=hidden, num_bilstm_layers=layers, dropout_rate=dropout)
        try:
            _, hist = train(train_set, val_set, cfg, train_cfg)
            best = hist.best()
            row = GridRow(index, hidden, layers, dropout, cfg.n_params(), hist.best_epoch,
                          best.train_loss, best.train_acc, best.val_loss, best.val_acc)
        except NumericError as exc:
            log.warning("grid cell %d (%s, %s, %s) failed: %s", index, hidden, layers, dropout, exc)
            row = GridRow(index, hidden, layers, dropout, cfg.n_params(), 0,
                          math.inf, math.nan, math.inf, math.nan, diverged=True)
        rows.append(row)

    def key(r: GridRow):
        if spec.selection == "training-loss":
            primary = r.train_loss
        else:
            primary = -r.val_acc if math.isfinite(r.val_acc) else math.inf
        return (primary, r.n_params, r.dropout_rate, r.index)

    winner = min(rows, key=key)
    best_cfg = base_cfg.replace(hidden_units=winner.hidden_units, num_bilstm_layers=winner.num_bilstm_layers,
                                dropout_rate=winner.dropout_rate)
    return best_cfg, rows


def write_grid_csv(rows, path) -> None:
    names = list(asdict(rows[0])) if rows else [f for f in GridRow.__dataclass_fields__]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for r in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in asdict(r).values()])
