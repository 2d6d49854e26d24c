"""Speaker-verification attack: trials, cosine scoring and equal error rate.

EER rule
--------
Candidate thresholds are -inf, the midpoints between adjacent distinct
scores, and +inf. At threshold ``t``::

    FAR(t) = #{nontarget >= t} / n_nontarget
    FRR(t) = #{target < t} / n_target

FAR falls and FRR rises as ``t`` grows; the EER is read off the first
bracket where FAR - FRR changes sign, by linear interpolation.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .core import EmbeddingSet, FLOAT_FMT, atomic_write_text
from .errors import DataError

TARGET = "target"
NONTARGET = "nontarget"


class Trial(NamedTuple):
    enroll_spk: str
    test_utt: str
    label: str

    @property
    def is_target(self):
        return self.label == TARGET


class ScoreSet:
    """Scored trials. ``scores[i]`` belongs to ``trials[i]``."""

    def __init__(self, trials: Sequence[Trial], scores):
        trials = list(trials)
        scores = np.asarray(scores, dtype=np.float64).reshape(-1)
        if len(trials) != scores.size:
            raise DataError("trial and score counts differ")
        if not np.isfinite(scores).all():
            raise DataError("non-finite score")
        is_target = np.array([t.label == TARGET for t in trials], dtype=bool)
        self.trials = trials
        self.scores = scores
        self.is_target = is_target
        self.n_target = int(is_target.sum())
        self.n_nontarget = int(len(trials) - self.n_target)

    @classmethod
    def from_arrays(cls, target_scores, nontarget_scores):
        """Build a ScoreSet from bare score lists (synthetic trial ids)."""
        tar = np.asarray(target_scores, dtype=np.float64).reshape(-1)
        non = np.asarray(nontarget_scores, dtype=np.float64).reshape(-1)
        trials = [Trial("t", f"t{i}", TARGET) for i in range(tar.size)]
        trials += [Trial("n", f"n{i}", NONTARGET) for i in range(non.size)]
        return cls(trials, np.concatenate([tar, non]))

    def __len__(self):
        return len(self.trials)

    @property
    def target_scores(self):
        return self.scores[self.is_target]

    @property
    def nontarget_scores(self):
        return self.scores[~self.is_target]

    def as_dict(self):
        return {(t.enroll_spk, t.test_utt): float(s) for t, s in zip(self.trials, self.scores)}


@dataclass(frozen=True)
class EerResult:
    eer: float
    threshold: float
    det_points: tuple  # (threshold, far, frr) triples, thresholds ascending
    n_target: int
    n_nontarget: int

    def to_dict(self, det=True):
        out = {
            "eer": self.eer,
            "threshold": self.threshold,
            "n_target": self.n_target,
            "n_nontarget": self.n_nontarget,
        }
        if det:
            out["det_points"] = [list(p) for p in self.det_points]
        return out

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)


# ------------------------------------------------------------------------ EER

def _check_classes(tar, non):
    if tar.size < 1 or non.size < 1:
        raise DataError("EER needs at least one target and one nontarget score")


def _threshold_grid(tar, non):
    """Distinct scores, FAR and FRR at -inf, every midpoint, and +inf."""
    uniq = np.unique(np.concatenate([tar, non]))
    # counts of scores <= each distinct value, i.e. below the next midpoint
    tar_le = np.searchsorted(np.sort(tar), uniq, side="right")
    non_le = np.searchsorted(np.sort(non), uniq, side="right")
    far = np.concatenate([[non.size], non.size - non_le]) / non.size
    frr = np.concatenate([[0], tar_le]) / tar.size
    # the lowest score is an exact stand-in for -inf; +inf gets max + 1
    thr = np.concatenate([[uniq[0]], 0.5 * (uniq[:-1] + uniq[1:]), [uniq[-1] + 1.0]])
    return thr, far, frr


def _crossing(thr, far, frr):
    diff = far - frr
    i = int(np.argmax(diff <= 0))  # diff[-1] == -1, so a crossing always exists
    if diff[i] == 0 or i == 0:
        return float(far[i]), float(thr[i])
    d0, d1 = diff[i - 1], diff[i]
    t = d0 / (d0 - d1)
    eer = far[i - 1] + t * (far[i] - far[i - 1])
    threshold = thr[i - 1] + t * (thr[i] - thr[i - 1])
    return float(eer), float(threshold)


def eer(scores: ScoreSet) -> EerResult:
    tar, non = scores.target_scores, scores.nontarget_scores
    _check_classes(tar, non)
    thr, far, frr = _threshold_grid(tar, non)
    value, threshold = _crossing(thr, far, frr)
    det = tuple((float(a), float(b), float(c)) for a, b, c in zip(thr, far, frr))
    return EerResult(value, threshold, det, int(tar.size), int(non.size))


def oracle_eer(scores: ScoreSet) -> float:
    """Brute-force EER by direct counting at every candidate threshold.

    Independent of :func:`eer`: every FAR/FRR value is a fresh comparison
    count against the threshold itself. Quadratic; meant for tests.
    """
    tar = np.array(scores.target_scores)
    non = np.array(scores.nontarget_scores)
    _check_classes(tar, non)
    values = sorted(set(tar.tolist()) | set(non.tolist()))
    thresholds = [-math.inf] + [(a + b) / 2 for a, b in zip(values, values[1:])] + [math.inf]
    curve = []
    for t in thresholds:
        fa = np.count_nonzero(non >= t) / non.size
        fr = np.count_nonzero(tar < t) / tar.size
        curve.append((fa, fr))
    for (fa0, fr0), (fa1, fr1) in zip(curve, curve[1:]):
        if fa0 - fr0 <= 0:
            return fa0
        if fa1 - fr1 <= 0:
            if fa1 == fr1:
                return fa1
            w = (fa0 - fr0) / ((fa0 - fr0) - (fa1 - fr1))
            return fa0 + w * (fa1 - fa0)
    raise AssertionError("FAR and FRR never cross")


# --------------------------------------------------------------------- trials

def generate_trials(enroll: EmbeddingSet, test: EmbeddingSet, max_nontarget_per_test=None, seed=0):
    """Target and nontarget trials for every test utterance.

    Each test utterance gets one target trial when its speaker is enrolled,
    and nontarget trials against the other enrolled speakers: all of them
    when ``max_nontarget_per_test`` is None, otherwise a seeded sample of at
    most that many. A target trial is skipped when the speaker's only
    enrollment utterance is the test utterance itself.
    """
    if len(enroll) == 0 or len(test) == 0:
        raise DataError("enroll and test sets must be nonempty")
    if max_nontarget_per_test is not None and max_nontarget_per_test < 1:
        raise DataError("max_nontarget_per_test must be positive")
    speakers = enroll.speakers
    enrolled = {}
    for u, s in zip(enroll.utt_ids, enroll.spk_ids):
        enrolled.setdefault(s, set()).add(u)
    order = sorted(range(len(test)), key=lambda i: test.utt_ids[i].encode())
    ordinal = {i: k for k, i in enumerate(order)}

    trials = []
    n_target = 0
    for i, (utt, spk) in enumerate(zip(test.utt_ids, test.spk_ids)):
        if spk in enrolled and enrolled[spk] != {utt}:
            trials.append(Trial(spk, utt, TARGET))
            n_target += 1
        others = [s for s in speakers if s != spk]
        if max_nontarget_per_test is not None and len(others) > max_nontarget_per_test:
            rng = np.random.default_rng([seed, ordinal[i]])
            pick = np.sort(rng.choice(len(others), size=max_nontarget_per_test, replace=False))
            others = [others[k] for k in pick]
        trials.extend(Trial(s, utt, NONTARGET) for s in others)
    if n_target == 0:
        raise DataError("no target trials possible: enroll and test share no speakers")
    return trials


def enrollment_model(enroll: EmbeddingSet, spk_id: str, exclude_utt=None):
    rows = [
        i for i, (s, u) in enumerate(zip(enroll.spk_ids, enroll.utt_ids))
        if s == spk_id and u != exclude_utt
    ]
    if not rows:
        raise DataError(f"speaker {spk_id!r} has no enrollment utterances")
    vecs = enroll.vectors[rows]
    norms = np.linalg.norm(vecs, axis=1)
    if (norms == 0).any():
        raise DataError(f"zero-norm enrollment vector for speaker {spk_id!r}")
    mean = (vecs / norms[:, None]).mean(axis=0)
    size = np.linalg.norm(mean)
    if size <= 1e-12:
        raise DataError(f"enrollment model of speaker {spk_id!r} has zero norm")
    return mean / size


def score_trials(enroll: EmbeddingSet, test: EmbeddingSet, trials: Sequence[Trial]) -> ScoreSet:
    """Cosine similarity between enrollment models and test vectors.

    If a test utterance also sits in the enrolled speaker's enrollment data
    (same utt_id), it is left out of that speaker's model for this trial.
    """
    test_idx = test.index()
    enrolled_as = dict(zip(enroll.utt_ids, enroll.spk_ids))
    cache = {}
    models = []
    model_of = np.empty(len(trials), dtype=np.intp)
    test_of = np.empty(len(trials), dtype=np.intp)
    for k, t in enumerate(trials):
        if t.test_utt not in test_idx:
            raise DataError(f"trial {k} ({t.enroll_spk} {t.test_utt}): unknown test utterance")
        held_out = t.test_utt if enrolled_as.get(t.test_utt) == t.enroll_spk else None
        key = (t.enroll_spk, held_out)
        if key not in cache:
            try:
                models.append(enrollment_model(enroll, t.enroll_spk, exclude_utt=held_out))
            except DataError as err:
                raise DataError(f"trial {k} ({t.enroll_spk} {t.test_utt}): {err}") from None
            cache[key] = len(models) - 1
        model_of[k] = cache[key]
        test_of[k] = test_idx[t.test_utt]

    vecs = test.vectors
    norms = np.linalg.norm(vecs, axis=1)
    if (norms == 0).any():
        raise DataError("zero-norm test vector")
    vecs = vecs / norms[:, None]
    model_mat = np.array(models).reshape(-1, enroll.dim)
    scores = np.einsum("ij,ij->i", model_mat[model_of], vecs[test_of])
    return ScoreSet(trials, scores)


# -------------------------------------------------------------- split protocol

def parity_split(emb: EmbeddingSet):
    """Row indices of enrollment (even) and test (odd) halves per speaker.

    Within each speaker utterances are ordered by utt_id; positions 0, 2, 4,
    ... go to enrollment and 1, 3, 5, ... to test.
    """
    by_spk = {}
    for i, (u, s) in enumerate(zip(emb.utt_ids, emb.spk_ids)):
        by_spk.setdefault(s, []).append(i)
    enroll_rows, test_rows = [], []
    for s in sorted(by_spk, key=lambda x: x.encode()):
        rows = sorted(by_spk[s], key=lambda i: emb.utt_ids[i].encode())
        if len(rows) < 2:
            raise DataError(f"speaker {s!r} has fewer than 2 utterances")
        enroll_rows += rows[0::2]
        test_rows += rows[1::2]
    return sorted(enroll_rows), sorted(test_rows)


def split_scores(enroll_side: EmbeddingSet, test_side: EmbeddingSet, trials_seed=0,
                 max_nontarget_per_test=None) -> ScoreSet:
    """Scores with enrollment from ``enroll_side`` and tests from ``test_side``.

    Both sets must hold the same utterances; the split into enrollment and
    test halves comes from :func:`parity_split` on ``test_side``.
    """
    if set(enroll_side.utt_ids) != set(test_side.utt_ids):
        raise DataError("enroll and test sets hold different utterances")
    enroll_rows, test_rows = parity_split(test_side)
    idx = enroll_side.index()
    mapped = [idx[test_side.utt_ids[i]] for i in enroll_rows]
    for i, j in zip(enroll_rows, mapped):
        if test_side.spk_ids[i] != enroll_side.spk_ids[j]:
            raise DataError(f"speaker label mismatch for utterance {test_side.utt_ids[i]!r}")
    enroll = enroll_side.subset(mapped)
    test = test_side.subset(test_rows)
    trials = generate_trials(enroll, test, max_nontarget_per_test, trials_seed)
    return score_trials(enroll, test, trials)


def split_eer(enroll_side, test_side, trials_seed=0, max_nontarget_per_test=None) -> EerResult:
    return eer(split_scores(enroll_side, test_side, trials_seed, max_nontarget_per_test))


def linkability_eer(anon: EmbeddingSet, trials_seed=0, max_nontarget_per_test=None) -> EerResult:
    """Attacker verifies anonymized test utterances against anonymized enrollment."""
    if anon.n_speakers < 2:
        raise DataError("linkability needs at least 2 speakers")
    return split_eer(anon, anon, trials_seed, max_nontarget_per_test)


def deidentification_eer(original: EmbeddingSet, anon: EmbeddingSet, trials_seed=0,
                         max_nontarget_per_test=None) -> EerResult:
    """Attacker enrolls on original speech and tests anonymized utterances."""
    if set(original.utt_ids) != set(anon.utt_ids):
        raise DataError("original and anonymized sets hold different utterances")
    return split_eer(original, anon, trials_seed, max_nontarget_per_test)


def average_eers(results):
    """Unweighted and trial-count-weighted mean of several EERs."""
    results = list(results)
    if not results:
        raise DataError("nothing to average")
    vals = np.array([r.eer for r in results])
    w = np.array([r.n_target + r.n_nontarget for r in results], dtype=float)
    return float(vals.mean()), float((vals * w).sum() / w.sum())


def eer_by_partition(fn, *sets, partitions=None, **kw):
    """Apply an EER function per partition label; returns {label: EerResult}."""
    from .core import filter_partition

    labels = partitions or sets[-1].partition_labels
    return {p: fn(*(filter_partition(s, p) for s in sets), **kw) for p in labels}


# ----------------------------------------------------------------- file forms

def format_trials(trials):
    return "".join(f"{t.enroll_spk} {t.test_utt} {t.label}\n" for t in trials)


def parse_trials(text):
    trials = []
    for n, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 3 or parts[2] not in (TARGET, NONTARGET):
            raise DataError(f"malformed trial line {n}: {line!r}")
        trials.append(Trial(*parts))
    return trials


def format_scores(scores: ScoreSet):
    return "".join(
        f"{t.enroll_spk} {t.test_utt} {format(float(s), FLOAT_FMT)}\n"
        for t, s in zip(scores.trials, scores.scores)
    )


def parse_scores(text, trials):
    """Attach scores from a score file to ``trials`` by (enroll_spk, test_utt)."""
    table = {}
    for n, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 3:
            raise DataError(f"malformed score line {n}: {line!r}")
        try:
            table[(parts[0], parts[1])] = float(parts[2])
        except ValueError:
            raise DataError(f"non-numeric score on line {n}") from None
    try:
        values = [table[(t.enroll_spk, t.test_utt)] for t in trials]
    except KeyError as err:
        raise DataError(f"no score for trial {err.args[0]}") from None
    return ScoreSet(trials, values)


def save_trials(trials, path):
    atomic_write_text(path, format_trials(trials))


def save_scores(scores, path):
    atomic_write_text(path, format_scores(scores))
