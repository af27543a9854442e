"""Model inputs: word vectors, sentiment triple, turn position, character vector.

All tables are read-only after loading; featurization is a pure function of
(sentence, dialogue, tables), so bundles can be built in parallel.
"""

from __future__ import annotations

import warnings
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Protocol, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .corpus import Dialogue, Role, Sentence, StrategyLabel, labeled_persuader_sentences
from .errors import FormatError

WORD_DIM = 300
CHAR_DIM = 4096
DEFAULT_T_MAX = 9  # 10 turn-position buckets
MAX_VALENCE = 4.0


@dataclass
class EmbeddingTable:
    """Token -> fixed-dimension word vectors with a designated OOV policy."""

    dim: int
    vectors: dict[str, np.ndarray]
    oov: str = "zero"  # "zero" | "mean"
    _mean: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def lookup(self, token: str) -> np.ndarray:
        hit = self.vectors.get(token)
        if hit is not None:
            return hit
        if self.oov == "mean":
            if self._mean is None:
                stack = np.stack(list(self.vectors.values())) if self.vectors else np.zeros((1, self.dim))
                self._mean = stack.mean(axis=0)
            return self._mean
        return np.zeros(self.dim)

    def __contains__(self, token: str) -> bool:
        return token in self.vectors

    def __len__(self) -> int:
        return len(self.vectors)


def load_embeddings(path: str | Path, oov: str = "zero") -> EmbeddingTable:
    """Read text-format word vectors: one line per word, token then the values.

    An optional leading header line of two integers (count, dim) is skipped.
    Duplicate tokens keep their first occurrence; any line whose value count
    disagrees with the first vector line raises FormatError with the line
    number.
    """
    vectors: dict[str, np.ndarray] = {}
    dim: Optional[int] = None
    with open(path, encoding="utf-8", errors="surrogateescape") as fh:
        for line_no, raw in enumerate(fh, start=1):
            parts = raw.rstrip("\n").split(" ")
            parts = [p for p in parts if p]
            if not parts:
                continue
            if line_no == 1 and len(parts) == 2:
                try:
                    int(parts[0]), int(parts[1])
                    continue  # header line
                except ValueError:
                    pass
            token, values = parts[0], parts[1:]
            if dim is None:
                if not values:
                    raise FormatError("no vector values on first data line", line=line_no)
                dim = len(values)
            if len(values) != dim:
                raise FormatError(
                    f"expected {dim} values for token {token!r}, found {len(values)}",
                    line=line_no,
                )
            if token in vectors:
                continue
            try:
                vectors[token] = np.asarray([float(v) for v in values])
            except ValueError:
                raise FormatError(f"non-numeric value for token {token!r}", line=line_no) from None
    return EmbeddingTable(dim=dim or WORD_DIM, vectors=vectors, oov=oov)


@dataclass
class SentimentLexicon:
    """Token -> valence in [-4, 4]; absent tokens are neutral (0)."""

    valences: dict[str, float] = field(default_factory=dict)

    def valence(self, token: str) -> float:
        return self.valences.get(token, 0.0)


def load_lexicon(path: str | Path) -> SentimentLexicon:
    """Read a TSV lexicon: token <TAB> valence per line."""
    valences: dict[str, float] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) < 2:
                raise FormatError("expected token<TAB>valence", line=line_no)
            token, value = parts[0], parts[1]
            try:
                valence = float(value)
            except ValueError:
                raise FormatError(f"non-numeric valence {value!r}", line=line_no) from None
            if not np.isfinite(valence) or abs(valence) > MAX_VALENCE:
                raise FormatError(f"valence {valence} outside [-4, 4]", line=line_no)
            valences.setdefault(token, valence)
    return SentimentLexicon(valences)


def sentiment_scores(tokens: Sequence[str], lexicon: SentimentLexicon) -> np.ndarray:
    """(negative, neutral, positive) proportions from token valences.

    Positive mass sums (v + 1) over positive valences, negative mass sums
    (|v| + 1) over negative ones, and each zero-valence token contributes 1
    to the neutral mass; the triple is the normalized masses.
    """
    if not tokens:
        return np.array([0.0, 1.0, 0.0])
    pos = neg = 0.0
    neutral = 0
    for token in tokens:
        v = lexicon.valence(token)
        if v > 0:
            pos += v + 1.0
        elif v < 0:
            neg += -v + 1.0
        else:
            neutral += 1
    total = pos + neg + neutral
    return np.array([neg, neutral, pos]) / total


def turn_index(turn: int, t_max: int = DEFAULT_T_MAX) -> int:
    """Clip a per-side turn position into [0, t_max]."""
    if turn < 0:
        raise ValueError(f"turn index must be >= 0, got {turn}")
    if t_max < 1:
        raise ValueError(f"t_max must be >= 1, got {t_max}")
    return min(turn, t_max)


class CharEncoder(Protocol):
    """Pluggable sentence-to-vector character encoder (4096-dim)."""

    dim: int

    def encode(self, sentence: str) -> np.ndarray: ...


class HashedTrigramEncoder:
    """Default character encoder: hashed trigram counts, L2-normalized.

    Character trigrams are taken over the raw sentence without padding, so
    strings shorter than 3 characters encode to the zero vector. The bucket
    hash is CRC32, stable across processes.
    """

    def __init__(self, dim: int = CHAR_DIM):
        self.dim = dim

    def encode(self, sentence: str) -> np.ndarray:
        vector = np.zeros(self.dim)
        if not sentence:
            warnings.warn("encoding an empty sentence to the zero character vector")
            return vector
        for i in range(len(sentence) - 2):
            bucket = zlib.crc32(sentence[i : i + 3].encode("utf-8")) % self.dim
            vector[bucket] += 1.0
        norm = np.linalg.norm(vector)
        if norm > 0:
            vector /= norm
        return vector


class PrecomputedCharEncoder:
    """Character vectors precomputed by an external network, keyed by text.

    The file holds one record per line: the sentence text (tab) then 4096
    space-separated values. Useful for plugging in vectors exported from a
    pretrained character-level model without depending on its weights here.
    """

    def __init__(self, path: str | Path, dim: int = CHAR_DIM):
        self.dim = dim
        self.table: dict[str, np.ndarray] = {}
        with open(path, encoding="utf-8") as fh:
            for line_no, raw in enumerate(fh, start=1):
                line = raw.rstrip("\n")
                if not line:
                    continue
                text, _, values = line.partition("\t")
                vector = np.asarray([float(v) for v in values.split()])
                if vector.size != dim:
                    raise FormatError(f"expected {dim} values, found {vector.size}", line=line_no)
                self.table.setdefault(text, vector)

    def encode(self, sentence: str) -> np.ndarray:
        if not sentence:
            warnings.warn("encoding an empty sentence to the zero character vector")
            return np.zeros(self.dim)
        hit = self.table.get(sentence)
        if hit is None:
            raise KeyError(f"no precomputed character vector for {sentence!r}")
        return hit


def char_vector(sentence: str, encoder: CharEncoder) -> np.ndarray:
    """Encode a sentence with the given character encoder."""
    return encoder.encode(sentence)


class Vocabulary:
    """Token-to-id mapping with reserved padding (0) and OOV (1) ids."""

    PAD = 0
    OOV = 1

    def __init__(self, tokens: Sequence[str]):
        self._ids: dict[str, int] = {}
        for token in tokens:
            if token not in self._ids:
                self._ids[token] = len(self._ids) + 2
        self.tokens = list(self._ids)

    def __len__(self) -> int:
        return len(self._ids) + 2

    def __contains__(self, token: str) -> bool:
        return token in self._ids

    def id(self, token: str) -> int:
        return self._ids.get(token, self.OOV)

    def ids(self, tokens: Sequence[str]) -> np.ndarray:
        return np.asarray([self.id(t) for t in tokens], dtype=np.int64)


def embedding_matrix(vocab: Vocabulary, table: EmbeddingTable) -> np.ndarray:
    """Id-aligned embedding matrix; PAD is zero, OOV follows the table policy."""
    matrix = np.zeros((len(vocab), table.dim))
    matrix[Vocabulary.OOV] = table.lookup("\x00<oov>")  # never a real token
    for token, row in zip(vocab.tokens, range(2, len(vocab))):
        matrix[row] = table.lookup(token)
    return matrix


@dataclass
class FeatureBundle:
    """All per-sentence model inputs."""

    token_ids: np.ndarray  # int64, nonempty
    turn_position_index: int
    sentiment: np.ndarray  # (neg, neu, pos), sums to 1
    char_vector: np.ndarray  # CHAR_DIM values
    context_ids: np.ndarray  # previous persuadee utterance token ids, may be empty

    def __post_init__(self):
        if len(self.token_ids) == 0:
            raise ValueError("token_ids must be nonempty")
        if abs(float(self.sentiment.sum()) - 1.0) > 1e-6:
            raise ValueError(f"sentiment triple sums to {self.sentiment.sum()}, not 1")


def _previous_persuadee_tokens(sentence: Sentence, dialogue: Dialogue) -> list[str]:
    for t in range(sentence.turn_index - 1, -1, -1):
        if dialogue.turn_role(t) is Role.PERSUADEE:
            return [token for s in dialogue.turns[t] for token in s.tokens]
    return []


def featurize(
    sentence: Sentence,
    dialogue: Dialogue,
    vocab: Vocabulary,
    lexicon: SentimentLexicon,
    char_encoder: CharEncoder,
    t_max: int = DEFAULT_T_MAX,
) -> FeatureBundle:
    """Bundle every model input for one persuader sentence."""
    if sentence.role is not Role.PERSUADER:
        raise ValueError("featurize expects persuader sentences")
    context = _previous_persuadee_tokens(sentence, dialogue)
    return FeatureBundle(
        token_ids=vocab.ids(sentence.tokens),
        turn_position_index=turn_index(dialogue.side_turn(sentence.turn_index), t_max),
        sentiment=sentiment_scores(sentence.tokens, lexicon),
        char_vector=char_encoder.encode(sentence.text),
        context_ids=vocab.ids(context),
    )


CLASS_ORDER = list(StrategyLabel)


def label_index(label: StrategyLabel) -> int:
    return CLASS_ORDER.index(label)


def strategy_targets(dialogues: list[Dialogue]) -> np.ndarray:
    """Class indices for every labeled persuader sentence, corpus order."""
    return np.asarray(
        [label_index(s.label) for s, _ in labeled_persuader_sentences(dialogues)],
        dtype=np.int64,
    )


class Featurizer(BaseEstimator, TransformerMixin):
    """Turns dialogues into per-sentence feature bundles.

    fit() builds the vocabulary and the id-aligned embedding matrix from the
    given dialogues; transform() featurizes every labeled persuader sentence.
    """

    def __init__(
        self,
        embeddings: Optional[EmbeddingTable] = None,
        lexicon: Optional[SentimentLexicon] = None,
        char_encoder: Optional[CharEncoder] = None,
        t_max: int = DEFAULT_T_MAX,
    ):
        self.embeddings = embeddings
        self.lexicon = lexicon
        self.char_encoder = char_encoder
        self.t_max = t_max

    def fit(self, dialogues: list[Dialogue], y=None) -> "Featurizer":
        if self.embeddings is None:
            raise ValueError("Featurizer needs an EmbeddingTable")
        tokens = [t for d in dialogues for s in d.sentences() for t in s.tokens]
        self.vocabulary_ = Vocabulary(tokens)
        self.embedding_matrix_ = embedding_matrix(self.vocabulary_, self.embeddings)
        return self

    def transform(self, dialogues: list[Dialogue]) -> list[FeatureBundle]:
        return self.bundles_for(dialogues, only_labeled=True)

    def bundles_for(self, dialogues: list[Dialogue], only_labeled: bool = True) -> list[FeatureBundle]:
        lexicon = self.lexicon or SentimentLexicon()
        encoder = self.char_encoder or HashedTrigramEncoder()
        bundles = []
        for d in dialogues:
            for s in d.sentences(Role.PERSUADER):
                if only_labeled and not isinstance(s.label, StrategyLabel):
                    continue
                bundles.append(
                    featurize(s, d, self.vocabulary_, lexicon, encoder, self.t_max)
                )
        return bundles
