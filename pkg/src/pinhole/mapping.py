"""Pseudo-speaker selection and the any-to-one / any-to-any anonymizer.

Each anonymized embedding is

    y_i = normalize((1 - rho) * p_i + rho * R x_i + e_i),   e_i ~ N(0, sigma^2 I)

where ``x_i`` is the length-normalized source embedding, ``p_i`` the unit
pseudo-speaker vector and ``R`` a fixed orthogonal matrix. Under any-to-one
(``a2o``) every utterance shares one ``p``; under any-to-any (``a2a``) each
utterance draws its own.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .core import EmbeddingSet, speaker_summaries
from .errors import ConfigError, DataError

STRATEGY_KINDS = (
    "fixed-member",
    "random-member",
    "average-all",
    "random-k-average",
    "farthest-k-average",
)
# strategies whose output does not depend on a random draw
DETERMINISTIC_KINDS = ("fixed-member", "average-all")
MODES = ("a2o", "a2a")

# salts separating the per-utterance random streams
_PSEUDO_STREAM = 0
_NOISE_STREAM = 1


@dataclass(frozen=True)
class PseudoStrategy:
    kind: str
    k: int | None = None
    member_index: int | None = None

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise ConfigError(f"strategy.kind must be one of {STRATEGY_KINDS}, got {self.kind!r}")
        if self.kind in ("random-k-average", "farthest-k-average"):
            if not isinstance(self.k, int) or self.k < 1:
                raise ConfigError(f"strategy.k must be a positive integer for {self.kind}")
        if self.kind == "fixed-member":
            if not isinstance(self.member_index, int) or self.member_index < 0:
                raise ConfigError("strategy.member_index must be a nonnegative integer")

    def check_cohort(self, n_speakers):
        if self.k is not None and self.k > n_speakers:
            raise ConfigError(f"strategy.k={self.k} exceeds cohort speaker count {n_speakers}")
        if self.member_index is not None and self.member_index >= n_speakers:
            raise ConfigError(
                f"strategy.member_index={self.member_index} out of range for {n_speakers} speakers"
            )

    @property
    def name(self):
        if self.kind == "fixed-member":
            return f"fixed-member({self.member_index})"
        if self.k is not None:
            return f"{self.kind}({self.k})"
        return self.kind


@dataclass(frozen=True)
class MappingConfig:
    strategy: PseudoStrategy
    mode: str = "a2o"
    rho: float = 0.2
    noise_sigma: float = 0.1
    residual_seed: int = 0
    assignment_seed: int = 0
    identity_residual: bool = False
    system: str = ""

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be 'a2o' or 'a2a', got {self.mode!r}")
        if not (isinstance(self.rho, (int, float)) and 0.0 <= self.rho <= 1.0):
            raise ConfigError(f"rho must lie in [0, 1], got {self.rho!r}")
        if not (isinstance(self.noise_sigma, (int, float)) and self.noise_sigma >= 0):
            raise ConfigError(f"noise_sigma must be nonnegative, got {self.noise_sigma!r}")
        for name in ("residual_seed", "assignment_seed"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or not 0 <= v < 2**64:
                raise ConfigError(f"{name} must be an unsigned 64-bit integer, got {v!r}")
        if self.mode == "a2a" and self.strategy.kind in DETERMINISTIC_KINDS:
            raise ConfigError(
                f"strategy {self.strategy.kind!r} yields a single pseudo speaker; use mode 'a2o'"
            )

    @property
    def label(self):
        return f"{self.strategy.name}/{self.mode}"

    def to_dict(self):
        d = asdict(self)
        d["strategy"] = {k: v for k, v in asdict(self.strategy).items()}
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ConfigError("mapping config must be a JSON object")
        d = dict(d)
        strat = d.pop("strategy", None)
        if not isinstance(strat, dict):
            raise ConfigError("mapping config needs a 'strategy' object")
        unknown = set(d) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ConfigError(f"unknown mapping config field(s): {sorted(unknown)}")
        bad = set(strat) - {"kind", "k", "member_index"}
        if bad:
            raise ConfigError(f"unknown strategy field(s): {sorted(bad)}")
        return cls(strategy=PseudoStrategy(**strat), **d)

    def reseeded(self, offset):
        return replace(
            self,
            residual_seed=(self.residual_seed + offset) % 2**64,
            assignment_seed=(self.assignment_seed + offset) % 2**64,
        )


@dataclass(frozen=True)
class ResidualMap:
    matrix: np.ndarray = field(repr=False)

    def apply(self, vectors):
        return vectors @ self.matrix.T


def residual_map(dim: int, residual_seed: int) -> ResidualMap:
    """Seeded orthogonal matrix (QR of a Gaussian matrix).

    Columns are sign-flipped so that each column's first nonzero entry is
    nonnegative.
    """
    if dim < 1:
        raise ConfigError("dim must be >= 1")
    rng = np.random.default_rng(residual_seed)
    q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    for j in range(dim):
        nz = np.flatnonzero(q[:, j])
        if nz.size and q[nz[0], j] < 0:
            q[:, j] = -q[:, j]
    q.setflags(write=False)
    return ResidualMap(q)


def _unit(v):
    n = np.linalg.norm(v)
    if n <= 1e-12:
        raise DataError("pseudo-speaker vector has zero norm")
    return v / n


def cohort_means(cohort: EmbeddingSet):
    """Speaker means of the cohort, rows ordered by spk_id."""
    return np.array([s.mean for s in speaker_summaries(cohort)])


def select_pseudo(strategy: PseudoStrategy, cohort, source_mean=None, draw_seed=0):
    """Pseudo-speaker vector (unit length) for one draw.

    ``cohort`` is an EmbeddingSet or a precomputed (S, d) array of speaker
    means ordered by spk_id.
    """
    means = cohort_means(cohort) if isinstance(cohort, EmbeddingSet) else np.asarray(cohort)
    if means.shape[0] == 0:
        raise DataError("empty cohort")
    strategy.check_cohort(means.shape[0])
    kind = strategy.kind
    if kind == "fixed-member":
        return _unit(means[strategy.member_index])
    if kind == "average-all":
        return _unit(means.mean(axis=0))
    if kind == "farthest-k-average":
        if source_mean is None:
            raise DataError("farthest-k-average needs a source_mean")
        src = _unit(np.asarray(source_mean, dtype=float))
        cos = (means @ src) / np.linalg.norm(means, axis=1)
        # largest cosine distance first; stable sort keeps spk_id order on ties
        order = np.argsort(cos, kind="stable")
        return _unit(means[order[: strategy.k]].mean(axis=0))
    rng = np.random.default_rng(draw_seed)
    if kind == "random-member":
        return _unit(means[rng.integers(means.shape[0])])
    pick = rng.choice(means.shape[0], size=strategy.k, replace=False)
    return _unit(means[np.sort(pick)].mean(axis=0))


def _ordinals(emb):
    order = sorted(range(len(emb)), key=lambda i: emb.utt_ids[i].encode())
    ords = np.empty(len(emb), dtype=np.int64)
    ords[order] = np.arange(len(emb))
    return ords


def pseudo_vectors(emb: EmbeddingSet, cohort: EmbeddingSet, config: MappingConfig):
    """The (N, d) pseudo-speaker component assigned to each utterance.

    Under a2o the rows are bitwise identical. Under a2a utterance ``i`` draws
    from the stream ``(assignment_seed, ordinal_i)`` where ``ordinal_i`` is the
    utterance's rank in utt_id order.
    """
    if cohort.dim != emb.dim:
        raise DataError(f"dimension mismatch: set has d={emb.dim}, cohort has d={cohort.dim}")
    means = cohort_means(cohort)
    config.strategy.check_cohort(means.shape[0])
    n = len(emb)
    kind = config.strategy.kind
    if config.mode == "a2o":
        source = emb.vectors.mean(axis=0) if kind == "farthest-k-average" else None
        p = select_pseudo(config.strategy, means, source, draw_seed=[config.assignment_seed, _PSEUDO_STREAM])
        return np.tile(p, (n, 1))

    out = np.empty((n, emb.dim))
    spk_means = None
    if kind == "farthest-k-average":
        spk_means = {s.spk_id: s.mean for s in speaker_summaries(emb)}
    for i, o in enumerate(_ordinals(emb)):
        src = spk_means[emb.spk_ids[i]] if spk_means is not None else None
        out[i] = select_pseudo(
            config.strategy, means, src, draw_seed=[config.assignment_seed, _PSEUDO_STREAM, int(o)]
        )
    return out


def anonymize(emb: EmbeddingSet, cohort: EmbeddingSet, config: MappingConfig, return_pseudo=False):
    """Replace each utterance's voice with a pseudo speaker plus residual leakage."""
    pseudo = pseudo_vectors(emb, cohort, config)
    norms = np.linalg.norm(emb.vectors, axis=1)
    if (norms == 0).any():
        raise DataError(f"zero-norm vector for utterance {emb.utt_ids[int(np.argmax(norms == 0))]!r}")
    x = emb.vectors / norms[:, None]
    if config.identity_residual:
        residual = x
    else:
        residual = residual_map(emb.dim, config.residual_seed).apply(x)

    y = (1.0 - config.rho) * pseudo + config.rho * residual
    if config.noise_sigma > 0:
        noise = np.empty_like(y)
        for i, o in enumerate(_ordinals(emb)):
            rng = np.random.default_rng([config.assignment_seed, _NOISE_STREAM, int(o)])
            noise[i] = rng.standard_normal(emb.dim)
        y = y + config.noise_sigma * noise
    size = np.linalg.norm(y, axis=1)
    if (size <= 1e-12).any():
        raise DataError("anonymized vector has zero norm")
    y = y / size[:, None]
    out = emb.with_vectors(y)
    return (out, pseudo) if return_pseudo else out


def pseudo_hash(vector):
    """Short content hash of a pseudo vector's float64 bytes."""
    return hashlib.sha256(np.ascontiguousarray(vector, dtype="<f8").tobytes()).hexdigest()[:16]
