import json

import numpy as np
import pytest

from pinhole.core import EmbeddingSet, dumps_embeddings, length_normalize
from pinhole.errors import ConfigError, DataError
from pinhole.mapping import (
    MappingConfig,
    PseudoStrategy,
    anonymize,
    pseudo_hash,
    pseudo_vectors,
    residual_map,
    select_pseudo,
)
from pinhole.sim import PopulationConfig, generate_population

from conftest import make_set

R2 = np.sqrt(2) / 2


def cohort_of(means):
    means = np.asarray(means, dtype=float)
    return make_set(means, [f"c{i}" for i in range(len(means))], prefix="c")


@pytest.fixture(scope="module")
def pop():
    return generate_population(PopulationConfig(n_speakers=20, utts_per_speaker=6, seed=4))


@pytest.fixture(scope="module")
def cohort():
    return generate_population(PopulationConfig(n_speakers=40, utts_per_speaker=5, seed=77), "coh")


def test_average_all_symmetric():
    p = select_pseudo(PseudoStrategy("average-all"), cohort_of([[1, 0], [0, 1]]))
    np.testing.assert_allclose(p, [R2, R2], atol=1e-15)


def test_random_k_full_cohort_equals_average_all(rng):
    coh = cohort_of(rng.normal(size=(7, 4)))
    full = select_pseudo(PseudoStrategy("random-k-average", k=7), coh, draw_seed=123)
    assert np.array_equal(full, select_pseudo(PseudoStrategy("average-all"), coh))


def test_farthest_one():
    coh = cohort_of([[1, 0], [-1, 0], [0, 1]])
    p = select_pseudo(PseudoStrategy("farthest-k-average", k=1), coh, source_mean=[1.0, 0.0])
    np.testing.assert_allclose(p, [-1.0, 0.0])


def test_farthest_ties_follow_speaker_order():
    coh = cohort_of([[1, 0], [0, 1], [0, -1]])
    p = select_pseudo(PseudoStrategy("farthest-k-average", k=1), coh, source_mean=[1.0, 0.0])
    np.testing.assert_allclose(p, [0.0, 1.0])


def test_fixed_member_uses_sorted_speaker_order():
    coh = EmbeddingSet(["x", "y"], ["zz", "aa"], ["F", "F"], [[0.0, 2.0], [3.0, 0.0]])
    p = select_pseudo(PseudoStrategy("fixed-member", member_index=0), coh)
    np.testing.assert_allclose(p, [1.0, 0.0])


def test_random_member_is_a_cohort_mean(rng):
    means = rng.normal(size=(5, 3))
    p = select_pseudo(PseudoStrategy("random-member"), cohort_of(means), draw_seed=9)
    unit = means / np.linalg.norm(means, axis=1, keepdims=True)
    assert np.min(np.linalg.norm(unit - p, axis=1)) < 1e-15


def test_select_pseudo_errors():
    coh = cohort_of([[1, 0], [0, 1]])
    with pytest.raises(ConfigError, match="exceeds"):
        select_pseudo(PseudoStrategy("random-k-average", k=3), coh)
    with pytest.raises(ConfigError, match="out of range"):
        select_pseudo(PseudoStrategy("fixed-member", member_index=2), coh)
    with pytest.raises(DataError, match="source_mean"):
        select_pseudo(PseudoStrategy("farthest-k-average", k=1), coh)


@pytest.mark.parametrize("kwargs", [
    {"kind": "nearest"},
    {"kind": "random-k-average"},
    {"kind": "random-k-average", "k": 0},
    {"kind": "fixed-member"},
    {"kind": "fixed-member", "member_index": -1},
])
def test_strategy_validation(kwargs):
    with pytest.raises(ConfigError):
        PseudoStrategy(**kwargs)


@pytest.mark.parametrize("kwargs, field", [
    ({"rho": -0.1}, "rho"),
    ({"rho": 1.5}, "rho"),
    ({"noise_sigma": -1.0}, "noise_sigma"),
    ({"mode": "a2b"}, "mode"),
    ({"residual_seed": -1}, "residual_seed"),
    ({"assignment_seed": 2**64}, "assignment_seed"),
])
def test_mapping_config_validation(kwargs, field):
    with pytest.raises(ConfigError, match=field):
        MappingConfig(PseudoStrategy("average-all"), **kwargs)


def test_a2a_rejects_single_voice_strategies():
    with pytest.raises(ConfigError, match="a2o"):
        MappingConfig(PseudoStrategy("average-all"), "a2a")


def test_config_json_round_trip():
    cfg = MappingConfig(PseudoStrategy("random-k-average", k=10), "a2a", rho=0.3,
                        residual_seed=5, assignment_seed=6)
    d = json.loads(cfg.to_json())
    assert set(d["strategy"]) == {"kind", "k", "member_index"}
    assert {"mode", "rho", "noise_sigma", "residual_seed", "assignment_seed"} <= set(d)
    assert MappingConfig.from_dict(d) == cfg


def test_config_unknown_fields():
    with pytest.raises(ConfigError, match="unknown"):
        MappingConfig.from_dict({"strategy": {"kind": "average-all"}, "rh0": 0.1})


# --------------------------------------------------------------- residual map

def test_residual_map_orthogonal():
    for d in (1, 2, 7, 16):
        r = residual_map(d, 3).matrix
        np.testing.assert_allclose(r.T @ r, np.eye(d), atol=1e-10)


def test_residual_map_deterministic_and_signed():
    a, b = residual_map(16, 42).matrix, residual_map(16, 42).matrix
    assert a.tobytes() == b.tobytes()
    assert a.tobytes() != residual_map(16, 43).matrix.tobytes()
    for col in a.T:
        assert col[np.flatnonzero(col)[0]] >= 0


def test_residual_map_scrambles_directions():
    r = residual_map(64, 11).matrix
    v = np.random.default_rng(0).normal(size=(100, 64))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    cos = np.abs(np.einsum("ij,ij->i", v, v @ r.T))
    assert np.sum(cos < 0.5) >= 99


# ---------------------------------------------------------------- anonymize

def test_identity_case(pop, cohort):
    cfg = MappingConfig(PseudoStrategy("average-all"), rho=1.0, noise_sigma=0.0, identity_residual=True)
    out = anonymize(pop, cohort, cfg)
    np.testing.assert_allclose(out.vectors, length_normalize(pop).vectors, atol=1e-12)


def test_total_replacement(pop, cohort):
    cfg = MappingConfig(PseudoStrategy("average-all"), rho=0.0, noise_sigma=0.0)
    out, pseudo = anonymize(pop, cohort, cfg, return_pseudo=True)
    np.testing.assert_allclose(out.vectors, np.tile(pseudo[0], (len(pop), 1)), atol=1e-15)
    assert len({v.tobytes() for v in out.vectors}) == 1


def test_a2o_pseudo_bitwise_shared(pop, cohort):
    for strat in (PseudoStrategy("average-all"), PseudoStrategy("random-k-average", k=5),
                  PseudoStrategy("farthest-k-average", k=5), PseudoStrategy("random-member")):
        pseudo = pseudo_vectors(pop, cohort, MappingConfig(strat, "a2o", assignment_seed=3))
        assert len({p.tobytes() for p in pseudo}) == 1


def test_a2a_pseudo_pairwise_distinct(pop, cohort):
    pseudo = pseudo_vectors(pop, cohort, MappingConfig(PseudoStrategy("random-k-average", k=10), "a2a"))
    assert len({p.tobytes() for p in pseudo}) == len(pop)
    assert len({pseudo_hash(p) for p in pseudo}) == len(pop)


def test_a2a_farthest_is_per_source_speaker(pop, cohort):
    cfg = MappingConfig(PseudoStrategy("farthest-k-average", k=5), "a2a")
    pseudo = pseudo_vectors(pop, cohort, cfg)
    by_spk = {}
    for s, p in zip(pop.spk_ids, pseudo):
        by_spk.setdefault(s, set()).add(p.tobytes())
    assert all(len(v) == 1 for v in by_spk.values())
    assert len(set.union(*by_spk.values())) > 1


def test_a2a_draws_independent_of_row_order(pop, cohort):
    cfg = MappingConfig(PseudoStrategy("random-k-average", k=10), "a2a", assignment_seed=8)
    out = anonymize(pop, cohort, cfg)
    rev = pop.subset(np.arange(len(pop))[::-1])
    out_rev = anonymize(rev, cohort, cfg)
    np.testing.assert_array_equal(out_rev.vectors[::-1], out.vectors)


def test_anonymize_deterministic(pop, cohort):
    cfg = MappingConfig(PseudoStrategy("random-k-average", k=10), "a2a", residual_seed=1, assignment_seed=2)
    a = dumps_embeddings(anonymize(pop, cohort, cfg))
    assert a == dumps_embeddings(anonymize(pop, cohort, cfg))
    other = MappingConfig(PseudoStrategy("random-k-average", k=10), "a2a", residual_seed=1, assignment_seed=3)
    assert a != dumps_embeddings(anonymize(pop, cohort, other))


def test_anonymize_contract(pop, cohort):
    out = anonymize(pop, cohort, MappingConfig(PseudoStrategy("random-member"), "a2a"))
    assert (out.utt_ids, out.spk_ids, out.partitions) == (pop.utt_ids, pop.spk_ids, pop.partitions)
    np.testing.assert_allclose(np.linalg.norm(out.vectors, axis=1), 1.0, atol=1e-12)


def test_anonymize_dim_mismatch(pop):
    small = make_set(np.eye(3), ["a", "b", "c"], prefix="c")
    with pytest.raises(DataError, match="dimension mismatch"):
        anonymize(pop, small, MappingConfig(PseudoStrategy("average-all")))


def test_anonymize_k_too_large(pop, cohort):
    with pytest.raises(ConfigError, match="exceeds"):
        anonymize(pop, cohort, MappingConfig(PseudoStrategy("random-k-average", k=41), "a2a"))
