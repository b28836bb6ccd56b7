"""Corpus ingestion: tokenized text, vocabulary construction, id mapping.

Input text is expected to be pre-tokenized: one sentence per line, tokens
separated by whitespace. No normalization is applied. Sentence frames
(``<S>`` ... ``</S>``) are added during id mapping when absent.
"""

from __future__ import annotations

import collections
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from .errors import DataError

S_TOKEN = "<S>"
E_TOKEN = "</S>"
UNK_TOKEN = "<UNK>"
SPECIAL_TOKENS = (S_TOKEN, E_TOKEN, UNK_TOKEN)

# Fixed ids of the special tokens; guaranteed by Vocabulary construction.
S_ID = 0
E_ID = 1
UNK_ID = 2


class Vocabulary:
    """Immutable token <-> dense-id map with reserved special tokens.

    Ids are assigned deterministically: ``<S>``, ``</S>``, ``<UNK>`` get
    ids 0..2 and every other word follows in lexicographic order, so two
    builds over the same data produce identical id assignments.
    """

    __slots__ = ("words", "index", "min_count")

    def __init__(self, words: Sequence[str], min_count: int | None = None):
        words = list(words)
        if tuple(words[:3]) != SPECIAL_TOKENS:
            raise DataError(
                "vocabulary must start with the special tokens "
                f"{' '.join(SPECIAL_TOKENS)}"
            )
        index: dict[str, int] = {}
        for i, w in enumerate(words):
            if w in index:
                raise DataError(f"duplicate vocabulary entry {w!r}")
            index[w] = i
        self.words = words
        self.index = index
        self.min_count = min_count

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def id(self, token: str) -> int:
        """Id of `token`, falling back to the <UNK> id."""
        return self.index.get(token, UNK_ID)

    def word(self, wid: int) -> str:
        return self.words[wid]

    def save(self, path) -> None:
        """One token per line; the line number is the id."""
        Path(path).write_text("\n".join(self.words) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        text = Path(path).read_text(encoding="utf-8")
        words = text.splitlines()
        if not words:
            raise DataError(f"{path}: empty vocabulary file")
        return cls(words)


def build_vocab(tokens: Iterable[str], min_count: int = 1) -> Vocabulary:
    """Count tokens and keep those occurring at least `min_count` times.

    The special tokens are always present and exempt from the threshold.
    An empty stream yields a vocabulary of just the specials.
    """
    if min_count < 1:
        raise ValueError(f"min_count must be >= 1, got {min_count}")
    counts = collections.Counter(tokens)
    for special in SPECIAL_TOKENS:
        counts.pop(special, None)
    kept = sorted(w for w, c in counts.items() if c >= min_count)
    return Vocabulary(list(SPECIAL_TOKENS) + kept, min_count=min_count)


def map_tokens(raw_sentence: Sequence[str], vocab: Vocabulary) -> list[int]:
    """Map tokens to ids, sending out-of-vocabulary tokens to <UNK>.

    The sentence frame is added only when absent, so mapping the token
    form of an already-framed sentence is stable.
    """
    index = vocab.index
    ids = [index.get(tok, UNK_ID) for tok in raw_sentence]
    if not ids or ids[0] != S_ID:
        ids.insert(0, S_ID)
    if len(ids) < 2 or ids[-1] != E_ID:
        ids.append(E_ID)
    return ids


@dataclass
class TaggedCorpus:
    """Framed token-id sentences from one source, with its corpus tag.

    An empty tag means untagged counting.
    """

    sentences: list[list[int]] = field(default_factory=list)
    tag: str = ""

    @classmethod
    def from_file(cls, path, vocab: Vocabulary, tag: str = "") -> "TaggedCorpus":
        sentences = [
            map_tokens(line.split(), vocab) for line in _iter_lines(path)
        ]
        return cls(sentences, tag)


def _iter_lines(path) -> Iterator[str]:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                yield line


def iter_file_tokens(paths: Iterable) -> Iterator[str]:
    """Stream whitespace tokens from text files, for vocabulary building."""
    for path in paths:
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                yield from line.split()


def oov_rate(sentences: Iterable[Sequence[int]]) -> float:
    """Fraction of predicted positions mapped to <UNK>.

    Predicted positions are everything after <S>, including the
    end-of-sentence marker, matching perplexity accounting.
    """
    unk = 0
    total = 0
    for sent in sentences:
        for wid in sent[1:]:
            total += 1
            if wid == UNK_ID:
                unk += 1
    return unk / total if total else 0.0
