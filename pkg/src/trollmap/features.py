"""Per-user behavioral and emotional features.

Each user gets a 12-slot row: message count, mean message length, and the
pooled relative frequency of ten tracked symbols (eight Russian vowels plus
``!`` and ``?``). Frequencies pool counts over all of a user's messages:

    f[x] = sum_i count(x, msg_i) / sum_i len(msg_i)

which is the length-weighted mean of the per-message ratios, not their plain
mean. Lengths count every Unicode scalar value of the case-folded NFC text,
whitespace and punctuation included.
"""

from __future__ import annotations

import csv
import io
import logging
import unicodedata
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import UserDocument
from .errors import ArtifactError, DuplicateUserError

logger = logging.getLogger(__name__)

DEFAULT_SYMBOLS = ("а", "е", "и", "о", "у", "э", "ю", "я", "!", "?")
# ASCII column names, positionally aligned with DEFAULT_SYMBOLS.
SYMBOL_COLUMNS = ("f_a", "f_e", "f_i", "f_o", "f_u", "f_e2", "f_yu", "f_ya", "f_excl", "f_quest")
FEATURE_NAMES = ("M", "L") + SYMBOL_COLUMNS
N_FEATURES = len(FEATURE_NAMES)
M_INDEX = 0
L_INDEX = 1

# Lowercase Latin letters that render identically to Cyrillic ones.
HOMOGLYPHS = str.maketrans({
    "a": "а", "e": "е", "o": "о", "p": "р", "c": "с", "y": "у", "x": "х",
})


@dataclass(frozen=True)
class SymbolSet:
    symbols: tuple[str, ...] = DEFAULT_SYMBOLS

    def __post_init__(self):
        for s in self.symbols:
            if len(s) != 1:
                raise ValueError(f"symbol {s!r} is not a single code point")
        if len(set(self.symbols)) != len(self.symbols):
            raise ValueError("symbols must be distinct")

    def __len__(self):
        return len(self.symbols)

    def __iter__(self):
        return iter(self.symbols)


@dataclass(frozen=True)
class UserFeatureVector:
    user_id: str
    m_count: int
    avg_len: float
    freqs: tuple[float, ...]

    def as_row(self) -> list[float]:
        return [float(self.m_count), self.avg_len, *self.freqs]


@dataclass(frozen=True)
class FeatureMatrix:
    user_ids: tuple[str, ...]
    values: np.ndarray
    feature_names: tuple[str, ...] = FEATURE_NAMES

    def __post_init__(self):
        v = self.values
        if v.ndim != 2 or v.shape != (len(self.user_ids), len(self.feature_names)):
            raise ValueError(
                f"values shape {v.shape} does not match {len(self.user_ids)} users x "
                f"{len(self.feature_names)} features"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("feature matrix contains NaN or infinite entries")

    def __len__(self):
        return len(self.user_ids)

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.feature_names.index(name)]

    def replace(self, values: np.ndarray) -> "FeatureMatrix":
        return FeatureMatrix(self.user_ids, values, self.feature_names)


@dataclass(frozen=True)
class NormalizationParams:
    mins: np.ndarray
    maxs: np.ndarray

    def __post_init__(self):
        if np.any(self.mins > self.maxs):
            raise ValueError("normalization min exceeds max")

    def to_dict(self) -> dict:
        return {"min": [float(x) for x in self.mins], "max": [float(x) for x in self.maxs]}

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizationParams":
        return cls(np.asarray(d["min"], dtype=float), np.asarray(d["max"], dtype=float))


def fold_text(text: str, homoglyphs: bool = False) -> str:
    """NFC-normalize and lowercase; optionally map Latin look-alikes to Cyrillic."""
    folded = unicodedata.normalize("NFC", unicodedata.normalize("NFC", text).lower())
    if homoglyphs:
        folded = folded.translate(HOMOGLYPHS)
    return folded


def count_in_message(text: str, symbol: str, homoglyphs: bool = False) -> tuple[int, int]:
    """Return ``(occurrences of symbol, total code points)`` for one message."""
    folded = fold_text(text, homoglyphs)
    return folded.count(symbol), len(folded)


def char_frequency(doc: UserDocument, symbol: str, homoglyphs: bool = False) -> float:
    hits = 0
    total = 0
    for msg in doc.messages:
        n_x, n = count_in_message(msg, symbol, homoglyphs)
        hits += n_x
        total += n
    return hits / total if total else 0.0


def avg_length(doc: UserDocument, homoglyphs: bool = False) -> float:
    total = sum(len(fold_text(m, homoglyphs)) for m in doc.messages)
    return total / len(doc.messages)


def extract_features(doc: UserDocument, symbols: SymbolSet = SymbolSet(), homoglyphs: bool = False) -> UserFeatureVector:
    """Build the feature vector of one user in a single pass over its text."""
    counts = dict.fromkeys(symbols.symbols, 0)
    total = 0
    for msg in doc.messages:
        folded = fold_text(msg, homoglyphs)
        total += len(folded)
        for s in symbols.symbols:
            counts[s] += folded.count(s)
    if total == 0:
        logger.warning("user %r has only empty messages; using the zero feature row", doc.user_id)
        freqs = tuple(0.0 for _ in symbols.symbols)
    else:
        freqs = tuple(counts[s] / total for s in symbols.symbols)
    return UserFeatureVector(doc.user_id, len(doc.messages), total / len(doc.messages), freqs)


def build_matrix(vectors: Sequence[UserFeatureVector], feature_names: Sequence[str] = FEATURE_NAMES) -> FeatureMatrix:
    if not vectors:
        raise ValueError("no feature vectors")
    seen = set()
    for v in vectors:
        if v.user_id in seen:
            raise DuplicateUserError(f"duplicate user_id {v.user_id!r}")
        seen.add(v.user_id)
    values = np.array([v.as_row() for v in vectors], dtype=float)
    return FeatureMatrix(tuple(v.user_id for v in vectors), values, tuple(feature_names))


def fit_normalization(matrix: FeatureMatrix) -> NormalizationParams:
    return NormalizationParams(matrix.values.min(axis=0), matrix.values.max(axis=0))


def apply_normalization(matrix: FeatureMatrix, params: NormalizationParams) -> FeatureMatrix:
    """Min-max scale each column into [0, 1].

    Columns that were constant at fit time map to 0.5; values outside the
    fitted range are clamped.
    """
    span = params.maxs - params.mins
    constant = span == 0
    safe = np.where(constant, 1.0, span)
    scaled = (matrix.values - params.mins) / safe
    scaled = np.clip(scaled, 0.0, 1.0)
    scaled[:, constant] = 0.5
    return matrix.replace(scaled)


def denormalize(values: np.ndarray, params: NormalizationParams) -> np.ndarray:
    """Map normalized values back to raw units (constant columns return their value)."""
    return params.mins + np.asarray(values, dtype=float) * (params.maxs - params.mins)


def write_matrix_csv(matrix: FeatureMatrix) -> str:
    buf = io.StringIO(newline="")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["user_id", *matrix.feature_names])
    for uid, row in zip(matrix.user_ids, matrix.values):
        writer.writerow([uid, *(repr(float(x)) for x in row)])
    return buf.getvalue()


def read_matrix_csv(text: str) -> FeatureMatrix:
    rows = list(csv.reader(io.StringIO(text, newline="")))
    if not rows or rows[0] != ["user_id", *FEATURE_NAMES]:
        raise ArtifactError("feature CSV header does not match the expected columns")
    ids = []
    values = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != N_FEATURES + 1:
            raise ArtifactError(f"feature CSV line {lineno}: expected {N_FEATURES + 1} fields")
        ids.append(row[0])
        try:
            values.append([float(x) for x in row[1:]])
        except ValueError as exc:
            raise ArtifactError(f"feature CSV line {lineno}: {exc}") from None
    if not ids:
        raise ArtifactError("feature CSV has no rows")
    if len(set(ids)) != len(ids):
        raise DuplicateUserError("feature CSV contains duplicate user ids")
    try:
        return FeatureMatrix(tuple(ids), np.array(values, dtype=float))
    except ValueError as exc:
        raise ArtifactError(str(exc)) from None
