"""The sparse adjusted matrix: materialization, scoring, perplexity.

A model row holds M_fw = c(w|f) * exp(A(f,w)) for every link counted in
training; the per-feature normalizer is the exact row sum. An event is
scored as the ratio of the summed target cells to the summed normalizers
over its features, which is a properly normalized distribution over the
vocabulary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable

from .corpus import UNK_ID, Vocabulary
from .errors import DataError
from .extraction import Event, Feature, parse_feature, render_feature
from .metafeatures import LinkHasher, feature_type, fingerprint

if TYPE_CHECKING:
    from .adjustment import AdjustmentModel
    from .counts import CountStore

MODEL_HEADER = "#snm-model v1"
_NORM_SECTION = "#normalizers"

# Events whose target is unreachable are floored at this probability.
PROB_FLOOR = 1e-10
_LOG_FLOOR = math.log(PROB_FLOOR)

# An adjustment beyond this indicates divergence rather than a usable model.
MAX_ABS_ADJUSTMENT = 50.0


class SnmModel:
    """Adjusted matrix rows plus per-feature normalizers."""

    __slots__ = ("rows", "normalizers", "vocab_size")

    def __init__(
        self,
        rows: dict[Feature, dict[int, float]],
        normalizers: dict[Feature, float],
        vocab_size: int,
    ):
        self.rows = rows
        self.normalizers = normalizers
        self.vocab_size = vocab_size


@dataclass(frozen=True)
class EventScore:
    y_t: float
    y: float
    log_prob: float

    @property
    def floored(self) -> bool:
        return self.y_t == 0.0


@dataclass(frozen=True)
class EvalReport:
    num_events: int
    log_prob_sum: float
    ppl: float
    oov_targets: int
    floored_events: int

    @property
    def oov_rate(self) -> float:
        return self.oov_targets / self.num_events


def _adjusted_row(
    crow: dict[int, int],
    c_f: int,
    hasher: LinkHasher,
    theta,
    table_size: int,
    target_fps: dict[int, int],
    words: list[str],
    identity: str,
) -> tuple[dict[int, float], float]:
    """One adjusted row and its normalizer; shared by materialize/renormalize."""
    row: dict[int, float] = {}
    total = 0.0
    inv_cf = 1.0 / c_f
    for w, c in crow.items():
        fp = target_fps.get(w)
        if fp is None:
            fp = target_fps[w] = fingerprint(words[w])
        a = 0.0
        for h, wt in hasher.link(fp, c):
            a += theta[h % table_size] * wt
        if a > MAX_ABS_ADJUSTMENT or a < -MAX_ABS_ADJUSTMENT:
            raise DataError(
                f"adjustment diverged: |A|={a:.2f} on link ({identity}, {words[w]})"
            )
        value = (c * inv_cf) * math.exp(a)
        row[w] = value
        total += value
    return row, total


def materialize(counts: "CountStore", adj: "AdjustmentModel", vocab: Vocabulary) -> SnmModel:
    """Build the adjusted matrix M_fw = c(w|f) * exp(A(f,w)) with normalizers."""
    theta = adj.theta
    table_size = adj.table_size
    mode = adj.mode
    target_fps: dict[int, int] = {}
    words = vocab.words
    rows: dict[Feature, dict[int, float]] = {}
    norms: dict[Feature, float] = {}
    for f, crow in counts.rows.items():
        identity = render_feature(f, vocab)
        hasher = LinkHasher(identity, feature_type(f), counts.feature_counts[f], mode)
        row, total = _adjusted_row(
            crow, counts.feature_counts[f], hasher, theta, table_size,
            target_fps, words, identity,
        )
        rows[f] = row
        norms[f] = total
    return SnmModel(rows, norms, len(vocab))


def renormalize(
    model: SnmModel,
    adj: "AdjustmentModel",
    counts: "CountStore",
    vocab: Vocabulary,
) -> SnmModel:
    """Recompute every stored M_fw from the current weights, then the row sums.

    Produces exactly what materialize(counts, adj) would; rows are updated
    in place so existing references observe the refreshed model.
    """
    theta = adj.theta
    table_size = adj.table_size
    mode = adj.mode
    target_fps: dict[int, int] = {}
    words = vocab.words
    for f in model.rows:
        identity = render_feature(f, vocab)
        hasher = LinkHasher(identity, feature_type(f), counts.feature_counts[f], mode)
        row, total = _adjusted_row(
            counts.rows[f], counts.feature_counts[f], hasher, theta, table_size,
            target_fps, words, identity,
        )
        model.rows[f] = row
        model.normalizers[f] = total
    return model


def score_event(model: SnmModel, event: Event) -> EventScore:
    """Probability of the event's target under the model.

    Features unknown to the model are dropped; with an empty-context row
    present there is always at least one known feature. A target that no
    known feature links to gets the floor probability.
    """
    normalizers = model.normalizers
    rows = model.rows
    target = event.target
    y = 0.0
    y_t = 0.0
    known = False
    for f in event.features:
        nf = normalizers.get(f)
        if nf is None:
            continue
        known = True
        y += nf
        y_t += rows[f].get(target, 0.0)
    if not known or y <= 0.0:
        raise DataError("event has no features known to the model")
    log_prob = math.log(y_t / y) if y_t > 0.0 else _LOG_FLOOR
    return EventScore(y_t=y_t, y=y, log_prob=log_prob)


def perplexity(model: SnmModel, events: Iterable[Event]) -> EvalReport:
    """exp of the average negative log-probability over the events."""
    n = 0
    oov = 0
    floored = 0
    log_probs = []
    for e in events:
        score = score_event(model, e)
        log_probs.append(score.log_prob)
        n += 1
        if e.target == UNK_ID:
            oov += 1
        if score.floored:
            floored += 1
    if n == 0:
        raise DataError("perplexity undefined on an empty event stream")
    total = math.fsum(log_probs)
    return EvalReport(
        num_events=n,
        log_prob_sum=total,
        ppl=math.exp(-total / n),
        oov_targets=oov,
        floored_events=floored,
    )


# ---------------------------------------------------------------------------
# Persistence

def save_model(model: SnmModel, path, vocab: Vocabulary) -> None:
    link_lines = []
    norm_lines = []
    for f, row in model.rows.items():
        fs = render_feature(f, vocab)
        norm_lines.append((fs, model.normalizers[f]))
        for w, value in row.items():
            link_lines.append((fs, vocab.words[w], value))
    link_lines.sort(key=lambda e: (e[0], e[1]))
    norm_lines.sort(key=lambda e: e[0])
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(MODEL_HEADER + "\n")
        fh.write(f"#vocab-size {model.vocab_size}\n")
        for fs, ws, value in link_lines:
            fh.write(f"{fs}\t{ws}\t{value!r}\n")
        fh.write(_NORM_SECTION + "\n")
        for fs, value in norm_lines:
            fh.write(f"{fs}\t{value!r}\n")


def load_model(path, vocab: Vocabulary) -> SnmModel:
    rows: dict[Feature, dict[int, float]] = {}
    norms: dict[Feature, float] = {}
    vocab_size = len(vocab)
    in_norms = False
    last_fs: str | None = None
    last_f: Feature | None = None

    def feature_of(fs: str) -> Feature:
        nonlocal last_fs, last_f
        if fs != last_fs:
            last_fs = fs
            last_f = parse_feature(fs, vocab)
        return last_f

    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if header != MODEL_HEADER:
            raise DataError(f"{path}: not a model file (bad header)")
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            if line == _NORM_SECTION:
                in_norms = True
                continue
            if line.startswith("#"):
                if line.startswith("#vocab-size "):
                    vocab_size = int(line[len("#vocab-size "):])
                continue
            parts = line.split("\t")
            if in_norms:
                if len(parts) != 2:
                    raise DataError(f"{path}:{lineno}: expected 2 fields")
                norms[feature_of(parts[0])] = float(parts[1])
            else:
                if len(parts) != 3:
                    raise DataError(f"{path}:{lineno}: expected 3 fields")
                fs, ws, vs = parts
                wid = vocab.index.get(ws)
                if wid is None:
                    raise DataError(f"{path}:{lineno}: unknown word {ws!r}")
                f = feature_of(fs)
                row = rows.get(f)
                if row is None:
                    row = rows[f] = {}
                row[wid] = float(vs)
    missing = set(rows) - set(norms)
    if missing:
        raise DataError(f"{path}: {len(missing)} rows lack a normalizer entry")
    return SnmModel(rows, norms, vocab_size)
