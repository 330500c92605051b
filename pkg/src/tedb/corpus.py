"""Dataset loading, tokenization, vocabularies, and padded encoding.

An utterance is a UTF-8 string with exactly one ``<`` and one ``>`` marking
the target span. Everything here is a pure function over immutable inputs;
a Vocabulary never changes after construction.
"""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .errors import DataError

PAD_ID = 0
UNK_ID = 1
PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"

# Characters that always become standalone tokens. "<" and ">" are kept so
# the marked span survives tokenization.
_SPLIT_CHARS = set('<>.,!?;:"()')


@dataclass(frozen=True)
class Example:
    """One labeled utterance with a marked span."""

    id: int
    text: str
    label: int

    def __post_init__(self):
        if self.id < 0:
            raise DataError(f"example id must be non-negative, got {self.id}")
        if self.label not in (0, 1):
            raise DataError(f"label must be 0 or 1, got {self.label!r}")
        lt, gt = self.text.count("<"), self.text.count(">")
        if lt != 1 or gt != 1:
            raise DataError(
                f"text must contain exactly one '<' and one '>', got {lt} and {gt}"
            )
        if self.text.index("<") > self.text.index(">"):
            raise DataError("span marker '<' must precede '>'")


@dataclass
class TokenSequence:
    """A tokenized utterance padded to a fixed length."""

    tokens: list[str]
    ids: list[int]
    length: int
    max_len: int


class Vocabulary:
    """Immutable token-to-index map with reserved PAD=0 and UNK=1."""

    def __init__(self, tokens: list[str]):
        # `tokens` is the full index-ordered list including the reserved rows.
        if tokens[:2] != [PAD_TOKEN, UNK_TOKEN]:
            tokens = [PAD_TOKEN, UNK_TOKEN] + list(tokens)
        self.tokens = list(tokens)
        self.token_to_index = {t: i for i, t in enumerate(self.tokens)}

    @property
    def size(self) -> int:
        return len(self.tokens)

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_index

    def id(self, token: str) -> int:
        return self.token_to_index.get(token, UNK_ID)


def tokenize(text: str, lowercase: bool = True) -> list[str]:
    """Split on whitespace, breaking out each punctuation mark in
    ``< > . , ! ? ; : " ( )`` as its own token."""
    if lowercase:
        text = text.lower()
    tokens: list[str] = []
    for chunk in text.split():
        word = ""
        for ch in chunk:
            if ch in _SPLIT_CHARS:
                if word:
                    tokens.append(word)
                    word = ""
                tokens.append(ch)
            else:
                word += ch
        if word:
            tokens.append(word)
    return tokens


def load_dataset(path, format: str = "csv") -> tuple[list[Example], int]:
    """Read a labeled dataset.

    The file must be UTF-8 CSV with header ``id,text,label`` and RFC-4180
    quoting. Returns the examples in file order together with their count.
    """
    if format != "csv":
        raise DataError(f"unsupported dataset format {format!r}")
    examples: list[Example] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if header != ["id", "text", "label"]:
            raise DataError(f"{path}: expected header id,text,label, got {header}")
        for row in reader:
            rownum = reader.line_num
            if len(row) != 3:
                raise DataError(f"{path}: row {rownum}: expected 3 columns, got {len(row)}")
            try:
                ex_id = int(row[0])
                label = int(row[2])
            except ValueError:
                raise DataError(f"{path}: row {rownum}: id and label must be integers") from None
            try:
                examples.append(Example(id=ex_id, text=row[1], label=label))
            except DataError as e:
                raise DataError(f"{path}: row {rownum}: {e}") from None
    if not examples:
        raise DataError(f"{path}: no examples")
    return examples, len(examples)


def build_vocab(examples: list[Example], min_count: int = 1, lowercase: bool = True) -> Vocabulary:
    """Collect tokens with frequency >= min_count, ordered by descending
    frequency then lexicographically so indices are stable across runs."""
    counts: Counter[str] = Counter()
    for ex in examples:
        counts.update(tokenize(ex.text, lowercase=lowercase))
    kept = [t for t, c in counts.items() if c >= min_count]
    kept.sort(key=lambda t: (-counts[t], t))
    return Vocabulary([PAD_TOKEN, UNK_TOKEN] + kept)


def encode(tokens: list[str], vocab: Vocabulary, max_len: int = 150) -> TokenSequence:
    """Map tokens to ids, truncate to max_len, and pad the tail.

    Truncation keeps the prefix unless that would cut the ``<``...``>`` span;
    in that case a max_len window centered on the span midpoint is kept
    instead, clamped to the sequence bounds.
    """
    if max_len < 5:
        raise DataError(f"max_len must be >= 5, got {max_len}")
    kept = tokens
    if len(tokens) > max_len:
        lt = tokens.index("<") if "<" in tokens else -1
        gt = tokens.index(">") if ">" in tokens else -1
        if 0 <= lt < gt and gt >= max_len:
            mid = (lt + gt) // 2
            start = mid - max_len // 2
            start = max(0, min(start, len(tokens) - max_len))
            kept = tokens[start : start + max_len]
        else:
            kept = tokens[:max_len]
    ids = [vocab.id(t) for t in kept] + [PAD_ID] * (max_len - len(kept))
    return TokenSequence(tokens=list(kept), ids=ids, length=len(kept), max_len=max_len)


def batch_encode(
    examples: list[Example],
    vocab: Vocabulary,
    max_len: int = 150,
    lowercase: bool = True,
) -> tuple[np.ndarray, np.ndarray]:
    """Encode a batch into an int id grid [batch, max_len] plus real lengths."""
    ids = np.full((len(examples), max_len), PAD_ID, dtype=np.int64)
    lengths = np.zeros(len(examples), dtype=np.int64)
    for i, ex in enumerate(examples):
        seq = encode(tokenize(ex.text, lowercase=lowercase), vocab, max_len)
        ids[i] = seq.ids
        lengths[i] = seq.length
    return ids, lengths


def length_histogram(examples: list[Example], bin_width: int) -> list[tuple[tuple[int, int], int]]:
    """Histogram of tokenized lengths, as ((lo, hi), count) per bin.

    Bins are contiguous from zero through the longest example, so counts sum
    to the number of examples.
    """
    if bin_width < 1:
        raise DataError(f"bin_width must be >= 1, got {bin_width}")
    if not examples:
        return []
    lengths = [len(tokenize(ex.text)) for ex in examples]
    nbins = max(lengths) // bin_width + 1
    counts = [0] * nbins
    for n in lengths:
        counts[n // bin_width] += 1
    return [((i * bin_width, (i + 1) * bin_width - 1), c) for i, c in enumerate(counts)]


def split_examples(
    examples: list[Example], ratio: float, seed: int
) -> tuple[list[Example], list[Example]]:
    """Seeded train/validation split; `ratio` is the validation fraction.

    Both splits preserve the original dataset order.
    """
    if not 0.0 <= ratio <= 1.0:
        raise DataError(f"split ratio must be in [0, 1], got {ratio}")
    rng = np.random.Generator(np.random.Philox(seed))
    n_val = int(round(len(examples) * ratio))
    perm = rng.permutation(len(examples))
    val_idx = set(perm[:n_val].tolist())
    train = [ex for i, ex in enumerate(examples) if i not in val_idx]
    val = [ex for i, ex in enumerate(examples) if i in val_idx]
    return train, val


_POSITIVE_WORDS = ["gently", "softly", "kindly", "warmly", "calmly", "sweetly"]
_NEGATIVE_WORDS = ["harshly", "bluntly", "rudely", "loudly", "coldly", "sharply"]
_FILLERS = ["yesterday", "today", "apparently", "reportedly", "again", "somehow"]


def synthetic_examples(n: int, seed: int = 0) -> list[Example]:
    """Build a small separable labeled set for smoke tests and demos.

    Positive examples carry a marker word from one disjoint pool inside the
    span, negatives from another, so any adequate classifier can shatter it.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    out = []
    for i in range(n):
        label = i % 2
        pool = _POSITIVE_WORDS if label == 1 else _NEGATIVE_WORDS
        word = pool[int(rng.integers(len(pool)))]
        filler = _FILLERS[int(rng.integers(len(_FILLERS)))]
        text = f"they put it <rather {word}> during the meeting {filler} ."
        out.append(Example(id=i, text=text, label=label))
    return out
