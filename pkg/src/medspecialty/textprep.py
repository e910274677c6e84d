"""Text normalization, vocabulary construction, and fixed-length encoding.

The normalization rule is deliberately blunt: lowercase, replace every
character that is not a letter or digit with a space, split on whitespace,
drop stopwords. That single rule also splits the comma/slash-delimited
keyword lists into usable tokens. Numerals survive. No stemming, no
subwords, no n-grams.
"""

from __future__ import annotations

import re
from importlib import resources

from .errors import ConfigError, DataError

PAD = 0
UNK = 1

# \w covers unicode letters and digits; the underscore it also matches is
# stripped separately so "a_b" splits like "a-b" does.
_NON_ALNUM = re.compile(r"[^\w]|_", re.UNICODE)


def default_stopwords_path() -> str:
    """Path of the stopword list shipped inside the package."""
    return str(resources.files("medspecialty").joinpath("data/stopwords.txt"))


def load_stopwords(path) -> frozenset:
    """One lowercase token per line; blank lines and `#` comments ignored."""
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read stopword list {path}: {exc}") from None
    return frozenset(
        line.strip() for line in lines if line.strip() and not line.lstrip().startswith("#")
    )


def normalize(text: str, stopwords=frozenset()) -> list:
    """Lowercase, strip punctuation, split, remove stopwords. Order preserved."""
    tokens = _NON_ALNUM.sub(" ", text.lower()).split()
    return [t for t in tokens if t not in stopwords]


class Vocabulary:
    """token -> id mapping with PAD=0 and UNK=1 reserved.

    Content tokens get ids 2..V-1 in descending training-frequency order,
    ties broken lexicographically, so the mapping is a pure function of the
    training text and min_count.
    """

    def __init__(self, token_to_id: dict, min_count: int):
        self.token_to_id = token_to_id
        self.min_count = min_count
        self.size = 2 + len(token_to_id)

    @classmethod
    def build(cls, token_sequences, min_count: int = 1) -> "Vocabulary":
        if min_count < 1:
            raise ConfigError(f"min_count must be >= 1, got {min_count}")
        freq = {}
        for seq in token_sequences:
            for tok in seq:
                freq[tok] = freq.get(tok, 0) + 1
        kept = sorted(
            (tok for tok, n in freq.items() if n >= min_count),
            key=lambda tok: (-freq[tok], tok),
        )
        return cls({tok: i + 2 for i, tok in enumerate(kept)}, min_count)

    def id_of(self, token: str) -> int:
        return self.token_to_id.get(token, UNK)

    def __len__(self) -> int:
        return self.size

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Vocabulary)
            and self.token_to_id == other.token_to_id
            and self.min_count == other.min_count
        )


def encode(tokens, vocab: Vocabulary, length: int) -> list:
    """First min(len, length) tokens mapped via vocab (missing -> UNK), PAD-filled to length."""
    if length < 1:
        raise ConfigError(f"sequence length must be >= 1, got {length}")
    ids = [vocab.id_of(t) for t in tokens[:length]]
    ids.extend([PAD] * (length - len(ids)))
    return ids
