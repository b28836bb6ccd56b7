"""Feature extraction: extractor configs, events, and feature strings.

A feature is an equivalence class of left contexts: an n-gram prefix of
the target, a skip-gram pattern (remote words, a gap, adjacent words), or
the empty context. Each sentence position past ``<S>`` yields one event
carrying the target word and the set of features its context falls into.

Config files use a small block grammar::

    // line comment
    ngram_extractor {
      min_n: 0
      max_n: 4
    }
    skip_ngram_extractor {
      max_context_words: 4
      min_remote_words: 1
      max_remote_words: 1
      min_skip_length: 1
      max_skip_length: 10
      tie_skip_length: true
    }

Canonical feature strings look like ``[]``, ``[the quick brown]``,
``[brown skip-2 over the lazy]`` (or ``skip-*`` when the skip length is
tied), optionally prefixed with a corpus tag as in ``web:[the quick]``.
Tokens of the form ``skip-<n>``/``skip-*`` are reserved by this grammar
and must not occur as corpus words if feature files are to be re-parsed.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

from .corpus import E_ID, S_ID, Vocabulary
from .errors import ConfigError, DataError


@dataclass(frozen=True)
class NgramConfig:
    min_n: int
    max_n: int


@dataclass(frozen=True)
class SkipConfig:
    """One skip-gram extractor block.

    A pattern has r remote words, a gap of s skipped words, and a adjacent
    words ending right before the target. Blocks constrain r, s, and the
    total context size r + a; a >= 1 always. Omitted remote bounds default
    to min 1 and max ``max_context_words - 1``.
    """

    max_context_words: int
    min_remote_words: int
    max_remote_words: int
    min_skip_length: int
    max_skip_length: int
    tie_skip_length: bool


@dataclass(frozen=True)
class ExtractorConfig:
    ngram: NgramConfig | None
    skip: tuple[SkipConfig, ...]


class Feature(NamedTuple):
    """A context equivalence class; one row of the sparse matrix.

    `words` holds the context token ids, oldest first. For skip-gram
    features the gap sits before ``words[skip_pos]`` and `skip_len` is the
    gap length, or None when lengths are tied (rendered ``skip-*``).
    """

    words: tuple[int, ...]
    skip_pos: int | None = None
    skip_len: int | None = None
    tag: str | None = None

    @property
    def kind(self) -> str:
        if self.skip_pos is not None:
            return "skipgram"
        return "ngram" if self.words else "empty"


class Event(NamedTuple):
    """One prediction instance: the target word and its feature set."""

    features: tuple[Feature, ...]
    target: int


# ---------------------------------------------------------------------------
# Config parsing

_NGRAM_BLOCK = "ngram_extractor"
_SKIP_BLOCK = "skip_ngram_extractor"
_NGRAM_KEYS = {"min_n", "max_n"}
_SKIP_KEYS = {
    "max_context_words",
    "min_remote_words",
    "max_remote_words",
    "min_skip_length",
    "max_skip_length",
    "tie_skip_length",
}
_BOOL_KEYS = {"tie_skip_length"}


def _tokenize_config(text: str):
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("//", 1)[0]
        line = line.replace("{", " { ").replace("}", " } ").replace(":", " : ")
        for tok in line.split():
            yield tok, lineno


def parse_config(text: str) -> ExtractorConfig:
    """Parse extractor configuration text into a validated config."""
    tokens = list(_tokenize_config(text))
    pos = 0

    def peek():
        return tokens[pos] if pos < len(tokens) else (None, -1)

    def take():
        nonlocal pos
        tok, ln = peek()
        pos += 1
        return tok, ln

    ngram: NgramConfig | None = None
    skips: list[SkipConfig] = []

    while pos < len(tokens):
        name, ln = take()
        if name not in (_NGRAM_BLOCK, _SKIP_BLOCK):
            raise ConfigError(f"line {ln}: unknown block {name!r}")
        brace, bln = take()
        if brace != "{":
            raise ConfigError(f"line {bln}: expected '{{' after {name}")
        fields: dict[str, object] = {}
        allowed = _NGRAM_KEYS if name == _NGRAM_BLOCK else _SKIP_KEYS
        while True:
            key, kln = take()
            if key is None:
                raise ConfigError(f"line {ln}: unterminated block {name}")
            if key == "}":
                break
            if key not in allowed:
                raise ConfigError(f"line {kln}: unknown key {key!r} in {name}")
            if key in fields:
                raise ConfigError(f"line {kln}: duplicate key {key!r} in {name}")
            colon, _ = take()
            if colon != ":":
                raise ConfigError(f"line {kln}: expected ':' after {key}")
            value, vln = take()
            if value is None:
                raise ConfigError(f"line {kln}: missing value for {key}")
            if key in _BOOL_KEYS:
                if value not in ("true", "false"):
                    raise ConfigError(
                        f"line {vln}: {key} expects true or false, got {value!r}"
                    )
                fields[key] = value == "true"
            else:
                try:
                    fields[key] = int(value)
                except ValueError:
                    raise ConfigError(
                        f"line {vln}: {key} expects an integer, got {value!r}"
                    ) from None
        if name == _NGRAM_BLOCK:
            if ngram is not None:
                raise ConfigError(f"line {ln}: duplicate {_NGRAM_BLOCK} block")
            ngram = _finish_ngram(fields, ln)
        else:
            skips.append(_finish_skip(fields, ln))

    return ExtractorConfig(ngram=ngram, skip=tuple(skips))


def _finish_ngram(fields: dict, ln: int) -> NgramConfig:
    for req in ("min_n", "max_n"):
        if req not in fields:
            raise ConfigError(f"line {ln}: {_NGRAM_BLOCK} requires {req}")
    cfg = NgramConfig(min_n=fields["min_n"], max_n=fields["max_n"])
    if cfg.min_n < 0:
        raise ConfigError(f"line {ln}: min_n < 0")
    if cfg.min_n > cfg.max_n:
        raise ConfigError(f"line {ln}: min_n > max_n")
    return cfg


def _finish_skip(fields: dict, ln: int) -> SkipConfig:
    for req in ("max_context_words", "max_skip_length"):
        if req not in fields:
            raise ConfigError(f"line {ln}: {_SKIP_BLOCK} requires {req}")
    ctx = fields["max_context_words"]
    cfg = SkipConfig(
        max_context_words=ctx,
        min_remote_words=fields.get("min_remote_words", 1),
        max_remote_words=fields.get("max_remote_words", ctx - 1),
        min_skip_length=fields.get("min_skip_length", 1),
        max_skip_length=fields["max_skip_length"],
        tie_skip_length=fields.get("tie_skip_length", False),
    )
    if cfg.min_remote_words < 0:
        raise ConfigError(f"line {ln}: min_remote_words < 0")
    if cfg.min_remote_words > cfg.max_remote_words:
        raise ConfigError(f"line {ln}: min_remote_words > max_remote_words")
    if cfg.min_skip_length < 1:
        raise ConfigError(f"line {ln}: min_skip_length < 1")
    if cfg.min_skip_length > cfg.max_skip_length:
        raise ConfigError(f"line {ln}: min_skip_length > max_skip_length")
    if cfg.max_context_words < cfg.min_remote_words + 1:
        raise ConfigError(
            f"line {ln}: max_context_words must be at least min_remote_words + 1"
        )
    return cfg


def load_config(path) -> ExtractorConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


# ---------------------------------------------------------------------------
# Event extraction

def extract_events(
    sentence: Sequence[int],
    config: ExtractorConfig,
    tag: str | None = None,
) -> list[Event]:
    """One event per position past <S>; <S> itself is never a target.

    N-gram features of every order in [min_n, max_n] that fits in the left
    context are emitted (order 0 is the empty feature). Skip-gram features
    are emitted for every (r, s, a) tuple admitted by some block, with the
    whole pattern inside the framed sentence. Duplicate features within an
    event (e.g. tied skips coinciding) are kept once, in first-seen order.
    """
    if (
        len(sentence) < 2
        or sentence[0] != S_ID
        or sentence[-1] != E_ID
        or S_ID in sentence[1:]
    ):
        raise DataError("sentence must be framed by <S> ... </S>")

    ngram = config.ngram
    events = []
    for k in range(1, len(sentence)):
        feats: list[Feature] = []
        if ngram is not None:
            for n in range(ngram.min_n, min(ngram.max_n, k) + 1):
                feats.append(Feature(tuple(sentence[k - n : k]), tag=tag))
        for blk in config.skip:
            a_hi = blk.max_context_words - blk.min_remote_words
            for a in range(1, a_hi + 1):
                adjacent = tuple(sentence[k - a : k])
                for s in range(blk.min_skip_length, blk.max_skip_length + 1):
                    r_hi = min(
                        blk.max_remote_words,
                        blk.max_context_words - a,
                        k - a - s,
                    )
                    skip_len = None if blk.tie_skip_length else s
                    for r in range(blk.min_remote_words, r_hi + 1):
                        start = k - a - s - r
                        feats.append(
                            Feature(
                                tuple(sentence[start : start + r]) + adjacent,
                                skip_pos=r,
                                skip_len=skip_len,
                                tag=tag,
                            )
                        )
        feats = list(dict.fromkeys(feats))
        if not feats:
            raise DataError(
                f"no features for target at position {k}; "
                "configure an n-gram block with min_n: 0 for full coverage"
            )
        events.append(Event(features=tuple(feats), target=sentence[k]))
    return events


def expand_tags(event: Event, all_tags: Sequence[str]) -> Event:
    """Replace each untagged feature with one tagged copy per corpus tag.

    Used on development and test events when the count matrix was built
    from tagged sources.
    """
    if not all_tags:
        raise DataError("expand_tags requires at least one tag")
    for f in event.features:
        if f.tag is not None:
            raise DataError("expand_tags expects untagged features")
    expanded = tuple(
        f._replace(tag=tag) for f in event.features for tag in all_tags
    )
    return Event(features=tuple(dict.fromkeys(expanded)), target=event.target)


# ---------------------------------------------------------------------------
# Feature strings

_SKIP_MARKER = re.compile(r"^skip-([1-9][0-9]*|\*)$")


def render_feature(f: Feature, vocab: Vocabulary) -> str:
    """Canonical string form; inverse of parse_feature."""
    parts = [vocab.words[w] for w in f.words]
    if f.skip_pos is not None:
        marker = "skip-*" if f.skip_len is None else f"skip-{f.skip_len}"
        parts.insert(f.skip_pos, marker)
    body = "[" + " ".join(parts) + "]"
    if f.tag is not None:
        return f"{f.tag}:{body}"
    return body


def parse_feature(s: str, vocab: Vocabulary) -> Feature:
    tag: str | None = None
    body = s
    if not s.startswith("["):
        idx = s.find(":[")
        if idx <= 0:
            raise DataError(f"malformed feature string {s!r}")
        tag, body = s[:idx], s[idx + 1 :]
    if not (body.startswith("[") and body.endswith("]")):
        raise DataError(f"malformed feature string {s!r}")
    inner = body[1:-1]
    if not inner:
        return Feature((), tag=tag)

    parts = inner.split(" ")
    if any(not p for p in parts):
        raise DataError(f"malformed feature string {s!r}")
    skip_pos = None
    skip_len = None
    words: list[int] = []
    for i, part in enumerate(parts):
        m = _SKIP_MARKER.match(part)
        if m:
            if skip_pos is not None:
                raise DataError(f"multiple skip markers in {s!r}")
            if i == len(parts) - 1:
                raise DataError(f"skip marker without adjacent words in {s!r}")
            skip_pos = len(words)
            skip_len = None if m.group(1) == "*" else int(m.group(1))
        else:
            wid = vocab.index.get(part)
            if wid is None:
                raise DataError(f"unknown token {part!r} in feature {s!r}")
            words.append(wid)
    if skip_pos is None and not words:
        raise DataError(f"malformed feature string {s!r}")
    return Feature(tuple(words), skip_pos=skip_pos, skip_len=skip_len, tag=tag)
