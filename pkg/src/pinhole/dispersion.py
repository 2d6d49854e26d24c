"""Within/between-class scatter and the scatter ratio J.

Scatter matrices are unnormalized sums::

    S_w = sum_s sum_{x in s} (x - mu_s)(x - mu_s)^T
    S_b = sum_s N_s (mu_s - mu)(mu_s - mu)^T

so that ``S_w + S_b`` is exactly the total scatter. The projection ``W``
collects the generalized eigenvectors of ``S_b w = lambda S_w w`` scaled to
``W^T S_w W = I``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .core import EmbeddingSet, _speaker_codes
from .errors import ConfigError, DegenerateScatterError, NumericalError

DEFAULT_RIDGE = 1e-8
EIG_CLAMP = 1e-12


@dataclass(frozen=True)
class ScatterPair:
    s_w: np.ndarray
    s_b: np.ndarray
    n: int
    s: int

    @property
    def dim(self):
        return self.s_w.shape[0]


@dataclass(frozen=True)
class ScatterReport:
    tr_w: float
    tr_b: float
    j_trace_ratio: float
    j_lda: float
    eigenvalues: tuple
    n: int = 0
    s: int = 0
    ridge: float = DEFAULT_RIDGE
    raw_tr_w: float = field(default=float("nan"), compare=False)
    raw_tr_b: float = field(default=float("nan"), compare=False)

    def to_dict(self):
        return {
            "tr_w": self.tr_w,
            "tr_b": self.tr_b,
            "j_trace_ratio": self.j_trace_ratio,
            "j_lda": self.j_lda,
            "eigenvalues": list(self.eigenvalues),
            "n": self.n,
            "s": self.s,
            "ridge": self.ridge,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)


def trace_ratio(tr_w, tr_b):
    """J as the ratio of projected between- to within-class traces."""
    return tr_b / tr_w


def scatter_matrices(emb: EmbeddingSet) -> ScatterPair:
    n = len(emb)
    if n < 2:
        raise DegenerateScatterError(f"need at least 2 utterances, got {n}")
    labels, inverse = _speaker_codes(emb)
    if len(labels) < 2:
        raise DegenerateScatterError("need at least 2 speakers (between-class scatter is zero)")
    x = emb.vectors
    counts = np.bincount(inverse)
    sums = np.zeros((len(labels), emb.dim))
    np.add.at(sums, inverse, x)
    means = sums / counts[:, None]
    mu = x.mean(axis=0)

    dev_w = x - means[inverse]
    s_w = dev_w.T @ dev_w
    dev_b = (means - mu) * np.sqrt(counts)[:, None]
    s_b = dev_b.T @ dev_b
    # symmetrize against rounding in the products
    s_w = 0.5 * (s_w + s_w.T)
    s_b = 0.5 * (s_b + s_b.T)
    return ScatterPair(s_w, s_b, n, len(labels))


def scatter_report(pair: ScatterPair, ridge: float = DEFAULT_RIDGE) -> ScatterReport:
    """Solve the generalized eigenproblem and report traces and both J variants.

    ``ridge`` adds ``ridge * trace(S_w) / d`` to the diagonal of S_w before
    solving. The reported traces use that regularized S_w.
    """
    if not ridge >= 0:
        raise ConfigError(f"ridge must be nonnegative, got {ridge}")
    d = pair.dim
    s_w, s_b = pair.s_w, pair.s_b
    scale = np.trace(s_w) / d
    if scale <= 0:
        raise NumericalError("within-class scatter is zero (every speaker collapsed to one point)")
    s_w_reg = s_w + ridge * scale * np.eye(d)
    try:
        evals, W = linalg.eigh(s_b, s_w_reg)
    except linalg.LinAlgError:
        hint = "; use a positive ridge" if ridge == 0 else ""
        raise NumericalError(f"within-class scatter is singular{hint}") from None
    if ridge == 0 and np.linalg.cond(s_w) > 1e12:
        raise NumericalError("within-class scatter is singular; use a positive ridge")

    order = np.argsort(evals)[::-1]
    evals, W = evals[order], W[:, order]
    tr_w = float(np.trace(W.T @ s_w_reg @ W))
    tr_b = float(np.trace(W.T @ s_b @ W))
    lam = evals.copy()
    top = lam[0] if lam.size else 0.0
    lam[lam < EIG_CLAMP * max(top, 0.0)] = 0.0
    return ScatterReport(
        tr_w=tr_w,
        tr_b=tr_b,
        j_trace_ratio=trace_ratio(tr_w, tr_b),
        j_lda=float(lam.sum()),
        eigenvalues=tuple(float(v) for v in lam),
        n=pair.n,
        s=pair.s,
        ridge=float(ridge),
        raw_tr_w=float(np.trace(s_w)),
        raw_tr_b=float(np.trace(s_b)),
    )


def dispersion_of(emb: EmbeddingSet, ridge: float = DEFAULT_RIDGE) -> ScatterReport:
    return scatter_report(scatter_matrices(emb), ridge)
