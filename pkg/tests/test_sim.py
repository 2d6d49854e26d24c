import json
from dataclasses import replace

import numpy as np
import pytest

from pinhole.core import dumps_embeddings
from pinhole.dispersion import dispersion_of
from pinhole.errors import ConfigError, DataError
from pinhole.mapping import MappingConfig, PseudoStrategy
from pinhole.sim import (
    ExperimentReport,
    PopulationConfig,
    SimulationConfig,
    generate_population,
    render_markdown,
    run_experiment,
    run_simulation,
    trend_check,
)


def small_config(**kw):
    return SimulationConfig(
        population=PopulationConfig(n_speakers=20, utts_per_speaker=10),
        cohort=PopulationConfig(n_speakers=40, utts_per_speaker=5),
        seeds=(1, 2, 3),
        **kw,
    )


def test_population_counts():
    emb = generate_population(PopulationConfig(dim=2, n_speakers=2, utts_per_speaker=2))
    assert len(emb) == 4 and emb.n_speakers == 2
    assert emb.partitions == ("F", "F", "M", "M")
    np.testing.assert_allclose(np.linalg.norm(emb.vectors, axis=1), 1.0, atol=1e-12)


def test_population_tight_clusters():
    emb = generate_population(PopulationConfig(sigma_within=1e-9, seed=2))
    assert dispersion_of(emb).j_trace_ratio > 1e3


def test_population_deterministic():
    cfg = PopulationConfig(seed=9)
    assert dumps_embeddings(generate_population(cfg)) == dumps_embeddings(generate_population(cfg))
    assert dumps_embeddings(generate_population(cfg)) != dumps_embeddings(
        generate_population(replace(cfg, seed=10)))


@pytest.mark.parametrize("kwargs, field", [
    ({"dim": 1}, "dim"),
    ({"n_speakers": 1}, "n_speakers"),
    ({"utts_per_speaker": 1}, "utts_per_speaker"),
    ({"sigma_between": 0.0}, "sigma_between"),
    ({"sigma_within": -1.0}, "sigma_within"),
    ({"seed": -3}, "seed"),
])
def test_population_validation(kwargs, field):
    with pytest.raises(ConfigError, match=field):
        PopulationConfig(**kwargs)


def test_simulation_config_from_dict():
    cfg = SimulationConfig.from_dict({
        "population": {"n_speakers": 10},
        "mappings": [{"strategy": {"kind": "average-all"}, "mode": "a2o", "system": "X"}],
        "seeds": [4, 5],
    })
    assert cfg.population.n_speakers == 10 and cfg.seeds == (4, 5)
    assert cfg.mappings[0].system == "X"
    assert SimulationConfig.from_dict(SimulationConfig().to_dict()) == SimulationConfig()


@pytest.mark.parametrize("raw, field", [
    ({"mappings": [{"strategy": {"kind": "average-all"}, "rho": -0.1}]}, "rho"),
    ({"population": {"sigma_within": 0}}, "population.sigma_within"),
    ({"seeds": []}, "seeds"),
    ({"seeds": [1, 1]}, "seeds"),
    ({"bogus": 1}, "bogus"),
    ({"mappings": [{"strategy": {"kind": "average-all"}, "colour": 1}]}, "colour"),
])
def test_simulation_config_errors(raw, field):
    with pytest.raises(ConfigError, match=field):
        SimulationConfig.from_dict(raw)


def test_run_experiment_rows():
    cfg = small_config()
    pop, coh, maps = cfg.per_seed(1)
    rep = run_experiment(pop, coh, maps, trials_seed=1)
    org = [r for r in rep.rows if r.condition == "org"]
    anon = [r for r in rep.rows if r.condition != "org"]
    assert len(org) == 1 and org[0].deidentification is None
    assert len(anon) == 4
    assert all(r.deidentification is not None and r.linkability is not None for r in anon)
    assert all(0 <= r.linkability.eer <= 1 and 0 <= r.deidentification.eer <= 1 for r in anon)


def test_run_experiment_needs_distinct_seeds():
    with pytest.raises(ConfigError, match="different seeds"):
        run_experiment(PopulationConfig(seed=1), PopulationConfig(seed=1), [])


def test_report_json_deterministic():
    cfg = small_config()
    a = run_simulation(cfg).to_json()
    b = run_simulation(cfg).to_json()
    assert a == b
    d = json.loads(a)
    assert d["seeds"] == [1, 2, 3] and len(d["rows"]) == 15


def test_trend_check_default_run_passes(default_run):
    report, _ = default_run
    verdicts = trend_check(report)
    assert {(v.name, v.system) for v in verdicts} == {
        (n, s) for n in ("dispersion", "linkability", "deidentification") for s in ("SYS1", "SYS2")}
    assert all(v.status == "pass" for v in verdicts), [v.to_dict() for v in verdicts]


def test_within_scatter_grows_after_anonymization(default_run):
    report, _ = default_run
    org = {r.seed: r.scatter.raw_tr_w for r in report.rows if r.condition == "org"}
    anon = [r for r in report.rows if r.condition != "org"]
    assert anon
    for r in anon:
        assert r.scatter.raw_tr_w > org[r.seed], (r.condition, r.seed)


def test_deid_chance_bounded(default_run):
    report, _ = default_run
    for r in report.rows:
        if r.deidentification is not None:
            assert 0.40 <= r.deidentification.eer <= 0.60


def test_duplicated_a2a_row_fails_dispersion(default_run):
    report, _ = default_run
    rows = [r for r in report.rows if r.system in ("-", "SYS2") and r.mode != "a2o"]
    rows += [replace(r, mode="a2o", condition="dup/a2o") for r in rows if r.mode == "a2a"]
    verdict = next(v for v in trend_check(replace(report, rows=tuple(rows))) if v.name == "dispersion")
    assert verdict.status == "fail" and verdict.margin == 0.0


def test_rho_zero_linkability_inconclusive():
    maps = (
        MappingConfig(PseudoStrategy("average-all"), "a2o", rho=0.0, system="Z"),
        MappingConfig(PseudoStrategy("random-k-average", k=10), "a2a", rho=0.0, system="Z"),
    )
    rep = run_simulation(SimulationConfig(mappings=maps))
    verdict = next(v for v in trend_check(rep) if v.name == "linkability")
    assert abs(verdict.margin) < 0.5
    assert verdict.status == "inconclusive"


def test_trend_check_needs_pairs():
    cfg = small_config(mappings=(MappingConfig(PseudoStrategy("average-all"), system="A"),))
    with pytest.raises(DataError, match="a2o and a2a"):
        trend_check(run_simulation(cfg))


def test_markdown_tables(default_run):
    report, _ = default_run
    md = render_markdown(report, trend_check(report))
    for title in ("### Dispersion", "### Linkability EER (%)", "### De-identification EER (%)",
                  "### Trend checks"):
        assert title in md
    assert "| SYS2 | random-k-average(10)/a2a |" in md
