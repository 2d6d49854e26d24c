"""Embedding data model, CSV ingestion and basic preprocessing.

An :class:`EmbeddingSet` holds N utterance embeddings of dimension d together
with their utterance ids, speaker labels and partition labels. Sets are
immutable; every operation returns a new set.
"""
from __future__ import annotations

import csv
import io
import os
import re
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError, EmbeddingFormatError, EmptySetError

ID_PATTERN = re.compile(r"[A-Za-z0-9_.-]+")
FLOAT_FMT = ".17g"

__all__ = [
    "UtteranceRecord",
    "EmbeddingSet",
    "SpeakerSummary",
    "load_embeddings",
    "save_embeddings",
    "dumps_embeddings",
    "speaker_summaries",
    "filter_partition",
    "length_normalize",
    "atomic_write_text",
]


@dataclass(frozen=True)
class UtteranceRecord:
    utt_id: str
    spk_id: str
    partition: str
    vector: tuple


def _check_id(value, what, row=None):
    if not isinstance(value, str) or ID_PATTERN.fullmatch(value) is None:
        raise EmbeddingFormatError(f"invalid {what} {value!r}", row)


class EmbeddingSet:
    """Labeled collection of utterance embeddings.

    Parameters
    ----------
    utt_ids, spk_ids, partitions : sequences of str, length N
    vectors : array_like, shape (N, d)
    dim : int, optional
        Required only when N == 0 (an empty set still has a dimensionality).
    """

    __slots__ = ("utt_ids", "spk_ids", "partitions", "vectors", "dim")

    def __init__(self, utt_ids, spk_ids, partitions, vectors, dim=None):
        utt_ids = tuple(utt_ids)
        spk_ids = tuple(spk_ids)
        partitions = tuple(partitions)
        n = len(utt_ids)
        if len(spk_ids) != n or len(partitions) != n:
            raise DataError("label sequences differ in length")
        vectors = np.array(vectors, dtype=np.float64)
        if n == 0:
            if dim is None:
                dim = vectors.shape[1] if vectors.ndim == 2 else None
            if dim is None or dim < 1:
                raise DataError("an empty set needs an explicit dim >= 1")
            vectors = vectors.reshape(0, dim)
        if vectors.ndim != 2 or vectors.shape[0] != n:
            raise DataError(f"vectors must have shape ({n}, d), got {vectors.shape}")
        if dim is not None and vectors.shape[1] != dim:
            raise DataError(f"vectors have dim {vectors.shape[1]}, expected {dim}")
        if vectors.shape[1] < 1:
            raise DataError("dimensionality must be >= 1")
        bad = ~np.isfinite(vectors).all(axis=1)
        if bad.any():
            i = int(np.argmax(bad))
            raise DataError(f"non-finite coordinate in utterance {utt_ids[i]!r}")
        if len(set(utt_ids)) != n:
            seen = set()
            for u in utt_ids:
                if u in seen:
                    raise DataError(f"duplicate utt_id {u!r}")
                seen.add(u)
        vectors.setflags(write=False)
        object.__setattr__(self, "utt_ids", utt_ids)
        object.__setattr__(self, "spk_ids", spk_ids)
        object.__setattr__(self, "partitions", partitions)
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "dim", int(vectors.shape[1]))

    def __setattr__(self, name, value):
        raise AttributeError("EmbeddingSet is immutable")

    def __len__(self):
        return len(self.utt_ids)

    def __repr__(self):
        return f"EmbeddingSet(N={len(self)}, S={self.n_speakers}, dim={self.dim})"

    def __eq__(self, other):
        if not isinstance(other, EmbeddingSet):
            return NotImplemented
        return (
            self.utt_ids == other.utt_ids
            and self.spk_ids == other.spk_ids
            and self.partitions == other.partitions
            and np.array_equal(self.vectors, other.vectors)
        )

    __hash__ = None

    @classmethod
    def from_records(cls, records: Iterable[UtteranceRecord], dim=None):
        records = list(records)
        return cls(
            [r.utt_id for r in records],
            [r.spk_id for r in records],
            [r.partition for r in records],
            [list(r.vector) for r in records] if records else np.empty((0, dim or 0)),
            dim=dim,
        )

    @property
    def records(self):
        return [
            UtteranceRecord(u, s, p, tuple(float(x) for x in v))
            for u, s, p, v in zip(self.utt_ids, self.spk_ids, self.partitions, self.vectors)
        ]

    @property
    def speakers(self):
        """Distinct speaker ids, sorted bytewise."""
        return sorted(set(self.spk_ids), key=_byte_key)

    @property
    def n_speakers(self):
        return len(set(self.spk_ids))

    @property
    def partition_labels(self):
        return sorted(set(self.partitions), key=_byte_key)

    def subset(self, indices):
        idx = np.asarray(indices, dtype=np.intp)
        return EmbeddingSet(
            [self.utt_ids[i] for i in idx],
            [self.spk_ids[i] for i in idx],
            [self.partitions[i] for i in idx],
            self.vectors[idx],
            dim=self.dim,
        )

    def with_vectors(self, vectors):
        return EmbeddingSet(self.utt_ids, self.spk_ids, self.partitions, vectors, dim=self.dim)

    def index(self):
        """Map utt_id -> row index."""
        return {u: i for i, u in enumerate(self.utt_ids)}


def _byte_key(s):
    return s.encode("utf-8")


@dataclass(frozen=True)
class SpeakerSummary:
    spk_id: str
    count: int
    mean: np.ndarray


def speaker_summaries(emb: EmbeddingSet):
    """Per-speaker utterance counts and mean vectors, sorted by spk_id."""
    if len(emb) == 0:
        raise EmptySetError("empty set")
    labels, inverse = _speaker_codes(emb)
    counts = np.bincount(inverse, minlength=len(labels))
    sums = np.zeros((len(labels), emb.dim))
    np.add.at(sums, inverse, emb.vectors)
    means = sums / counts[:, None]
    return [SpeakerSummary(s, int(c), m) for s, c, m in zip(labels, counts, means)]


def _speaker_codes(emb):
    labels = emb.speakers
    code = {s: i for i, s in enumerate(labels)}
    return labels, np.array([code[s] for s in emb.spk_ids], dtype=np.intp)


def filter_partition(emb: EmbeddingSet, partition: str) -> EmbeddingSet:
    keep = [i for i, p in enumerate(emb.partitions) if p == partition]
    return emb.subset(keep)


def length_normalize(emb: EmbeddingSet) -> EmbeddingSet:
    norms = np.linalg.norm(emb.vectors, axis=1)
    zero = norms == 0
    if zero.any():
        raise DataError(f"zero-norm vector for utterance {emb.utt_ids[int(np.argmax(zero))]!r}")
    out = emb.vectors / norms[:, None]
    # exact unit vectors pass through untouched so repeated calls are stable
    unit = np.abs(norms - 1.0) <= 2.0 * np.finfo(float).eps
    out[unit] = emb.vectors[unit]
    return emb.with_vectors(out)


# --------------------------------------------------------------------- CSV I/O

def _header(dim):
    return ["utt_id", "spk_id", "partition"] + [f"dim_{i}" for i in range(dim)]


def dumps_embeddings(emb: EmbeddingSet) -> str:
    if len(emb) == 0:
        raise EmptySetError("empty set")
    lines = [",".join(_header(emb.dim))]
    for u, s, p, v in zip(emb.utt_ids, emb.spk_ids, emb.partitions, emb.vectors):
        lines.append(",".join([u, s, p] + [format(float(x), FLOAT_FMT) for x in v]))
    return "\n".join(lines) + "\n"


def atomic_write_text(path, text):
    """Write ``text`` to ``path`` through a sibling temp file and a rename."""
    path = os.fspath(path)
    tmp = f"{path}.tmp{os.getpid()}"
    try:
        with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)


def save_embeddings(emb: EmbeddingSet, path) -> None:
    atomic_write_text(path, dumps_embeddings(emb))


def load_embeddings(path) -> EmbeddingSet:
    with open(path, encoding="utf-8", newline="") as fh:
        text = fh.read()
    return loads_embeddings(text)


def loads_embeddings(text: str) -> EmbeddingSet:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or (len(rows) == 1 and not rows[0]):
        raise EmbeddingFormatError("empty file")
    header = rows[0]
    if len(header) < 4 or header[:3] != ["utt_id", "spk_id", "partition"]:
        raise EmbeddingFormatError("malformed header", 0)
    dim = len(header) - 3
    if header[3:] != [f"dim_{i}" for i in range(dim)]:
        raise EmbeddingFormatError("malformed header", 0)
    body = rows[1:]
    if not body:
        raise EmbeddingFormatError("empty file")
    utts, spks, parts = [], [], []
    vectors = np.empty((len(body), dim))
    seen = set()
    for r, row in enumerate(body, start=1):
        if len(row) != dim + 3:
            raise EmbeddingFormatError("inconsistent row width", r)
        u, s, p = row[:3]
        _check_id(u, "utt_id", r)
        _check_id(s, "spk_id", r)
        _check_id(p, "partition", r)
        if u in seen:
            raise EmbeddingFormatError(f"duplicate utt_id {u!r}", r)
        seen.add(u)
        try:
            vals = [float(x) for x in row[3:]]
        except ValueError:
            raise EmbeddingFormatError("non-numeric coordinate", r) from None
        if not all(np.isfinite(vals)):
            raise EmbeddingFormatError("non-finite coordinate", r)
        vectors[r - 1] = vals
        utts.append(u)
        spks.append(s)
        parts.append(p)
    return EmbeddingSet(utts, spks, parts, vectors, dim=dim)


def concat(sets: Sequence[EmbeddingSet]) -> EmbeddingSet:
    sets = list(sets)
    if not sets:
        raise EmptySetError("nothing to concatenate")
    return EmbeddingSet(
        [u for s in sets for u in s.utt_ids],
        [u for s in sets for u in s.spk_ids],
        [u for s in sets for u in s.partitions],
        np.vstack([s.vectors for s in sets]),
        dim=sets[0].dim,
    )
