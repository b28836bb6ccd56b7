"""Adjustment-model training on held-out data.

The adjustment function A(f,w) is a linear model over hashed meta-features
of each link. Its weights are fit by maximizing the multinomial
log-likelihood of held-out events with mini-batch updates and per-weight
AdaGrad learning rates.

The per-batch gradient uses two maps instead of touching every vocabulary
word per event: one keyed by (feature, target) links accumulating
M_ft / y_t(e), and one keyed by feature accumulating alpha_f = sum of
1/y(e) over the events containing f. At the end of the batch the gradient
for every stored link of every encountered feature is
``first_term(f,w) - M_fw * alpha_f``, which is then pushed onto the
weights through the links' meta-feature weights.

The in-memory matrix (cells and normalizers) stays fixed while an epoch
runs and is recomputed from the updated weights at epoch end, optionally
after every batch instead.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .corpus import Vocabulary
from .counts import CountStore
from .errors import DataError
from .extraction import Event, Feature, render_feature
from .metafeatures import (
    LinkHasher,
    Mode,
    compute_metafeatures,
    feature_type,
    fingerprint,
)
from .model import SnmModel, materialize, perplexity, renormalize

_ADJ_MAGIC = b"SNMADJ\x01"
_HASH_SCHEME_ID = 1
_MODE_CODES = {Mode.FULL: 0, Mode.FEATURE_ONLY: 1, Mode.UNLEXICALIZED: 2}
_MODE_FROM_CODE = {v: k for k, v in _MODE_CODES.items()}


class AdjustmentModel:
    """Flat hashed weight table with AdaGrad accumulators.

    All-zero weights leave every link adjustment at zero, so the freshly
    initialized model reproduces plain relative frequencies.
    """

    __slots__ = ("theta", "grad_sq", "gamma", "delta0", "batch_size", "mode")

    def __init__(
        self,
        table_size: int,
        gamma: float = 0.1,
        delta0: float = 1.0,
        batch_size: int = 2048,
        mode: Mode = Mode.FULL,
    ):
        if table_size < 1:
            raise ValueError(f"table_size must be >= 1, got {table_size}")
        if batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {batch_size}")
        if gamma <= 0 or delta0 <= 0:
            raise ValueError("gamma and delta0 must be positive")
        self.theta = np.zeros(table_size, dtype=np.float64)
        self.grad_sq = np.zeros(table_size, dtype=np.float64)
        self.gamma = gamma
        self.delta0 = delta0
        self.batch_size = batch_size
        self.mode = mode

    @property
    def table_size(self) -> int:
        return len(self.theta)

    @property
    def nonzero_params(self) -> int:
        return int(np.count_nonzero(self.theta))

    def link_weights(
        self, f: Feature, w: int, counts: CountStore, vocab: Vocabulary
    ) -> list[tuple[int, float]]:
        """(table index, weight) pairs of the link's meta-features."""
        mfs = compute_metafeatures(
            f, w, counts.feature_count(f), counts.link_count(f, w), self.mode, vocab
        )
        size = self.table_size
        return [(mf.hash % size, mf.weight) for mf in mfs]

    def adjust(self, f: Feature, w: int, counts: CountStore, vocab: Vocabulary) -> float:
        """A(f,w): weighted sum of the link's hashed meta-feature weights."""
        theta = self.theta
        return float(
            sum(theta[k] * wt for k, wt in self.link_weights(f, w, counts, vocab))
        )

    def save(self, path) -> None:
        """Header (table size, gamma, delta0, mode, hash scheme) + weights."""
        with open(path, "wb") as fh:
            fh.write(_ADJ_MAGIC)
            fh.write(
                struct.pack(
                    "<QddBB",
                    self.table_size,
                    self.gamma,
                    self.delta0,
                    _MODE_CODES[self.mode],
                    _HASH_SCHEME_ID,
                )
            )
            fh.write(self.theta.tobytes())

    @classmethod
    def load(cls, path) -> "AdjustmentModel":
        with open(path, "rb") as fh:
            magic = fh.read(len(_ADJ_MAGIC))
            if magic != _ADJ_MAGIC:
                raise DataError(f"{path}: not an adjustment file (bad magic)")
            table_size, gamma, delta0, mode_code, scheme = struct.unpack(
                "<QddBB", fh.read(struct.calcsize("<QddBB"))
            )
            if scheme != _HASH_SCHEME_ID:
                raise DataError(f"{path}: unsupported hash scheme {scheme}")
            if mode_code not in _MODE_FROM_CODE:
                raise DataError(f"{path}: unknown meta-feature mode {mode_code}")
            data = fh.read()
        expected = table_size * 8
        if len(data) != expected:
            raise DataError(f"{path}: truncated weight vector")
        adj = cls(table_size, gamma=gamma, delta0=delta0, mode=_MODE_FROM_CODE[mode_code])
        adj.theta = np.frombuffer(data, dtype="<f8").astype(np.float64)
        return adj


def event_link_gradient(
    event: Event, f: Feature, w: int, model: SnmModel, y_t: float, y: float
) -> float:
    """d log P(e) / d A_fw for one event and one link of the matrix."""
    if f not in event.features:
        return 0.0
    m_fw = model.rows[f].get(w, 0.0)
    if m_fw == 0.0:
        return 0.0
    indicator = 1.0 if w == event.target else 0.0
    return m_fw * (indicator / y_t - 1.0 / y)


class BatchAccumulator:
    """The two per-batch gradient maps.

    `link_grads` holds the first, target-linked term keyed by (f, w) pairs
    that occurred in the batch; `alpha` holds the per-feature sums of
    1/y(e). Events whose target is unreachable (y_t = 0) are scored at the
    probability floor, a constant, so they contribute no gradient and are
    only counted.
    """

    __slots__ = ("link_grads", "alpha", "num_events", "floored_events")

    def __init__(self):
        self.link_grads: dict[tuple[Feature, int], float] = {}
        self.alpha: dict[Feature, float] = {}
        self.num_events = 0
        self.floored_events = 0

    def add_event(self, event: Event, model: SnmModel) -> None:
        rows = model.rows
        normalizers = model.normalizers
        feats = [f for f in event.features if f in rows]
        if not feats:
            raise DataError("event has no features known to the model")
        target = event.target
        y = 0.0
        y_t = 0.0
        for f in feats:
            y += normalizers[f]
            y_t += rows[f].get(target, 0.0)
        if y <= 0.0:
            raise DataError("zero normalizer for event")
        self.num_events += 1
        if y_t <= 0.0:
            self.floored_events += 1
            return
        inv_y = 1.0 / y
        inv_yt = 1.0 / y_t
        alpha = self.alpha
        link_grads = self.link_grads
        for f in feats:
            alpha[f] = alpha.get(f, 0.0) + inv_y
            m_ft = rows[f].get(target, 0.0)
            if m_ft:
                key = (f, target)
                link_grads[key] = link_grads.get(key, 0.0) + m_ft * inv_yt


def batch_theta_gradient(
    acc: BatchAccumulator,
    model: SnmModel,
    adj: AdjustmentModel,
    counts: CountStore,
    vocab: Vocabulary,
) -> dict[int, float]:
    """Ascent gradient of the batch log-likelihood w.r.t. the weight table.

    Iterates every stored link of every feature encountered in the batch:
    the alpha term applies to whole rows, not just links seen as targets.
    """
    grads: dict[int, float] = {}
    table_size = adj.table_size
    mode = adj.mode
    words = vocab.words
    target_fps: dict[int, int] = {}
    link_grads = acc.link_grads
    for f, alpha_f in acc.alpha.items():
        crow = counts.rows[f]
        c_f = counts.feature_counts[f]
        hasher = LinkHasher(render_feature(f, vocab), feature_type(f), c_f, mode)
        mrow = model.rows[f]
        for w, m_fw in mrow.items():
            g_link = link_grads.get((f, w), 0.0) - m_fw * alpha_f
            if g_link == 0.0:
                continue
            fp = target_fps.get(w)
            if fp is None:
                fp = target_fps[w] = fingerprint(words[w])
            for h, wt in hasher.link(fp, crow[w]):
                k = h % table_size
                grads[k] = grads.get(k, 0.0) + g_link * wt
    return grads


def apply_adagrad(adj: AdjustmentModel, grads: dict[int, float]) -> None:
    """One AdaGrad ascent step from an accumulated batch gradient."""
    if not grads:
        return
    ks = np.fromiter(grads.keys(), dtype=np.int64, count=len(grads))
    gs = np.fromiter(grads.values(), dtype=np.float64, count=len(grads))
    adj.grad_sq[ks] += gs * gs
    adj.theta[ks] += adj.gamma * gs / np.sqrt(adj.delta0 + adj.grad_sq[ks])


def process_batch(
    events: Sequence[Event],
    model: SnmModel,
    adj: AdjustmentModel,
    counts: CountStore,
    vocab: Vocabulary,
) -> BatchAccumulator:
    """Accumulate one mini-batch and apply its weight update."""
    if not events:
        raise DataError("empty batch")
    acc = BatchAccumulator()
    for e in events:
        acc.add_event(e, model)
    grads = batch_theta_gradient(acc, model, adj, counts, vocab)
    apply_adagrad(adj, grads)
    return acc


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    dev_log_likelihood: float
    dev_ppl: float
    nonzero_params: int

    def format(self) -> str:
        return (
            f"epoch {self.epoch} dev_ll={self.dev_log_likelihood:.4f} "
            f"ppl={self.dev_ppl:.4f} nonzero={self.nonzero_params}"
        )


def train(
    dev_events: Iterable[Event],
    counts: CountStore,
    adj: AdjustmentModel,
    epochs: int,
    vocab: Vocabulary,
    renorm_each_batch: bool = False,
    log: Callable[[str], None] | None = None,
) -> tuple[list[EpochStats], SnmModel]:
    """Fit the adjustment weights on held-out events.

    Batches follow corpus order with no shuffling; a short final batch is
    processed normally. Epoch 0 statistics describe the unadjusted model.
    Returns the per-epoch history and the final renormalized matrix.
    """
    if epochs < 1:
        raise ValueError(f"epochs must be >= 1, got {epochs}")
    dev_events = list(dev_events)
    model = materialize(counts, adj, vocab)
    if not dev_events:
        return [], model

    def stats(epoch: int) -> EpochStats:
        report = perplexity(model, dev_events)
        return EpochStats(epoch, report.log_prob_sum, report.ppl, adj.nonzero_params)

    history = [stats(0)]
    if log:
        log(history[0].format())
    batch_size = adj.batch_size
    for epoch in range(1, epochs + 1):
        for i in range(0, len(dev_events), batch_size):
            process_batch(dev_events[i : i + batch_size], model, adj, counts, vocab)
            if renorm_each_batch:
                renormalize(model, adj, counts, vocab)
        if not renorm_each_batch:
            renormalize(model, adj, counts, vocab)
        history.append(stats(epoch))
        if log:
            log(history[-1].format())
    return history, model
