"""Embedding-space evaluation of speaker anonymization.

Dispersion (scatter ratio J), linkability and de-identification EERs,
pseudo-speaker mapping strategies, and a seeded synthetic population for
studying any-to-one versus any-to-any anonymization.
"""
from .asv import (
    EerResult,
    ScoreSet,
    Trial,
    deidentification_eer,
    eer,
    enrollment_model,
    generate_trials,
    linkability_eer,
    oracle_eer,
    score_trials,
)
from .core import (
    EmbeddingSet,
    SpeakerSummary,
    UtteranceRecord,
    filter_partition,
    length_normalize,
    load_embeddings,
    save_embeddings,
    speaker_summaries,
)
from .dispersion import ScatterPair, ScatterReport, dispersion_of, scatter_matrices, scatter_report
from .errors import ConfigError, DataError, NumericalError, PinholeError
from .mapping import (
    MappingConfig,
    PseudoStrategy,
    ResidualMap,
    anonymize,
    pseudo_vectors,
    residual_map,
    select_pseudo,
)
from .sim import (
    ExperimentReport,
    PopulationConfig,
    SimulationConfig,
    generate_population,
    run_experiment,
    render_markdown,
    run_simulation,
    trend_check,
)

__version__ = "0.1.0"
