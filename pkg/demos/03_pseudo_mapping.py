"""
Any-to-one versus any-to-any
============================

Under a2o every utterance is pushed towards one pseudo speaker, so
anonymized speakers collapse together. Under a2a each utterance gets its own
pseudo speaker, which scatters even the same speaker's utterances.
"""
from pinhole import (MappingConfig, PopulationConfig, PseudoStrategy, anonymize,
                     dispersion_of, generate_population, linkability_eer, pseudo_vectors)

org = generate_population(PopulationConfig(seed=7))
cohort = generate_population(PopulationConfig(n_speakers=100, utts_per_speaker=10, seed=11), "coh")
print(f"original   J={dispersion_of(org).j_lda:8.3f}")

for config in (MappingConfig(PseudoStrategy("average-all"), "a2o"),
               MappingConfig(PseudoStrategy("random-k-average", k=10), "a2a")):
    anon = anonymize(org, cohort, config)
    n_pseudo = len({row.tobytes() for row in pseudo_vectors(org, cohort, config)})
    print(f"{config.label:24s} J={dispersion_of(anon).j_lda:8.3f}  "
          f"linkability EER={100 * linkability_eer(anon, 0).eer:5.2f}%  "
          f"distinct pseudo vectors={n_pseudo}")

# more residual leakage (rho) makes the anonymized voices easier to link
for rho in (0.0, 0.2, 0.5, 1.0):
    config = MappingConfig(PseudoStrategy("random-k-average", k=10), "a2a", rho=rho)
    print(f"a2a rho={rho:.1f}: linkability EER {100 * linkability_eer(anonymize(org, cohort, config), 0).eer:5.2f}%")
