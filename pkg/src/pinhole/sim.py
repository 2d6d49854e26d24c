"""Synthetic speaker populations and the three-experiment pipeline.

For each seed the pipeline builds an evaluation population and an independent
cohort, anonymizes the population under every mapping configuration, and
measures dispersion (scatter ratio J), linkability EER and de-identification
EER. :func:`trend_check` then tests the three pinhole assertions: any-to-any
disperses more than any-to-one, links less, and de-identifies equally well.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import asv
from .asv import EerResult
from .core import EmbeddingSet
from .dispersion import DEFAULT_RIDGE, ScatterReport, dispersion_of
from .errors import ConfigError, DataError
from .mapping import MappingConfig, PseudoStrategy, anonymize

COHORT_SEED_OFFSET = 1_000_003


@dataclass(frozen=True)
class PopulationConfig:
    dim: int = 16
    n_speakers: int = 50
    utts_per_speaker: int = 20
    sigma_between: float = 1.0
    sigma_within: float = 0.3
    seed: int = 1

    def __post_init__(self):
        checks = [
            ("dim", self.dim, 2),
            ("n_speakers", self.n_speakers, 2),
            ("utts_per_speaker", self.utts_per_speaker, 2),
        ]
        for name, value, low in checks:
            if not isinstance(value, int) or isinstance(value, bool) or value < low:
                raise ConfigError(f"{name} must be an integer >= {low}, got {value!r}")
        for name in ("sigma_between", "sigma_within"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or not v > 0:
                raise ConfigError(f"{name} must be positive, got {v!r}")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")

    @classmethod
    def from_dict(cls, d, where="population"):
        if not isinstance(d, dict):
            raise ConfigError(f"{where} must be a JSON object")
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown {where} field(s): {sorted(unknown)}")
        try:
            return cls(**d)
        except ConfigError as err:
            raise ConfigError(f"{where}.{err}") from None


def generate_population(config: PopulationConfig, prefix="spk") -> EmbeddingSet:
    """Gaussian speaker means plus Gaussian utterance noise, length-normalized.

    Speaker ``s`` gets id ``{prefix}{s:04d}`` and partition "F" for even ``s``,
    "M" for odd ``s``.
    """
    rng = np.random.default_rng(config.seed)
    S, U, d = config.n_speakers, config.utts_per_speaker, config.dim
    means = rng.normal(0.0, config.sigma_between, size=(S, d))
    x = np.repeat(means, U, axis=0) + rng.normal(0.0, config.sigma_within, size=(S * U, d))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    spk = [f"{prefix}{s:04d}" for s in range(S) for _ in range(U)]
    utt = [f"{prefix}{s:04d}-{u:03d}" for s in range(S) for u in range(U)]
    part = ["F" if s % 2 == 0 else "M" for s in range(S) for _ in range(U)]
    return EmbeddingSet(utt, spk, part, x, dim=d)


# ------------------------------------------------------------------- reports

@dataclass(frozen=True)
class ConditionRow:
    condition: str  # "org" or "<strategy>/<mode>"
    system: str
    mode: str  # "-" for org
    seed: int
    scatter: ScatterReport
    linkability: EerResult
    deidentification: EerResult | None = None
    linkability_by_partition: dict = field(default_factory=dict)
    deidentification_by_partition: dict = field(default_factory=dict)

    def to_dict(self):
        out = {
            "condition": self.condition,
            "system": self.system,
            "mode": self.mode,
            "seed": self.seed,
            "scatter": self.scatter.to_dict(),
            "raw_trace_within": self.scatter.raw_tr_w,
            "raw_trace_between": self.scatter.raw_tr_b,
            "linkability": self.linkability.to_dict(det=False),
            "linkability_by_partition": {
                k: v.to_dict(det=False) for k, v in self.linkability_by_partition.items()
            },
        }
        if self.deidentification is not None:
            out["deidentification"] = self.deidentification.to_dict(det=False)
            out["deidentification_by_partition"] = {
                k: v.to_dict(det=False) for k, v in self.deidentification_by_partition.items()
            }
        return out


@dataclass(frozen=True)
class ExperimentReport:
    rows: tuple
    seeds: tuple
    config: dict

    def by_seed(self, seed):
        return [r for r in self.rows if r.seed == seed]

    def to_dict(self, trends=None):
        out = {
            "config": self.config,
            "seeds": list(self.seeds),
            "rows": [r.to_dict() for r in self.rows],
        }
        if trends is not None:
            out["trend_check"] = [t.to_dict() for t in trends]
        return out

    def to_json(self, trends=None):
        return json.dumps(self.to_dict(trends), indent=2, sort_keys=False) + "\n"


def _row(condition, system, mode, seed, emb, original, trials_seed, ridge, cap):
    scatter = dispersion_of(emb, ridge)
    link = asv.linkability_eer(emb, trials_seed, cap)
    link_parts = asv.eer_by_partition(asv.linkability_eer, emb, trials_seed=trials_seed,
                                      max_nontarget_per_test=cap)
    deid = deid_parts = None
    if original is not None:
        deid = asv.deidentification_eer(original, emb, trials_seed, cap)
        deid_parts = asv.eer_by_partition(asv.deidentification_eer, original, emb,
                                          trials_seed=trials_seed, max_nontarget_per_test=cap)
    return ConditionRow(condition, system, mode, seed, scatter, link, deid,
                        link_parts, deid_parts or {})


def _row_order(row):
    return (row.condition != "org", row.system, row.condition, row.mode, row.seed)


def run_experiment(pop: PopulationConfig, cohort: PopulationConfig, mappings, trials_seed=0,
                   ridge=DEFAULT_RIDGE, max_nontarget_per_test=None, keep_sets=False):
    """One seed of the pipeline: the original condition plus every mapping.

    Returns the report, and with ``keep_sets`` also a dict of the embedding
    sets by condition key (``"org"``, ``"cohort"``, or ``"<system>_<mode>"``).
    """
    if pop.seed == cohort.seed:
        raise ConfigError("cohort and population must use different seeds")
    if pop.dim != cohort.dim:
        raise ConfigError("cohort and population dims differ")
    original = generate_population(pop, "spk")
    cohort_set = generate_population(cohort, "coh")
    rows = [_row("org", "-", "-", pop.seed, original, None, trials_seed, ridge,
                 max_nontarget_per_test)]
    sets = {"org": original, "cohort": cohort_set}
    for m in mappings:
        anon = anonymize(original, cohort_set, m)
        rows.append(_row(m.label, m.system or m.strategy.name, m.mode, pop.seed, anon, original,
                         trials_seed, ridge, max_nontarget_per_test))
        sets[f"{m.system or m.strategy.kind}_{m.mode}"] = anon
    report = ExperimentReport(
        rows=tuple(sorted(rows, key=_row_order)),
        seeds=(pop.seed,),
        config={
            "population": asdict(pop),
            "cohort": asdict(cohort),
            "mappings": [m.to_dict() for m in mappings],
            "trials_seed": trials_seed,
            "ridge": ridge,
        },
    )
    return (report, sets) if keep_sets else report


# --------------------------------------------------------- multi-seed driver

def default_mappings():
    """SYS1 and SYS2 analogs: fixed member vs random member, center vs random-10 average."""
    return [
        MappingConfig(PseudoStrategy("fixed-member", member_index=0), "a2o", system="SYS1"),
        MappingConfig(PseudoStrategy("random-member"), "a2a", system="SYS1"),
        MappingConfig(PseudoStrategy("average-all"), "a2o", system="SYS2"),
        MappingConfig(PseudoStrategy("random-k-average", k=10), "a2a", system="SYS2"),
    ]


@dataclass(frozen=True)
class SimulationConfig:
    population: PopulationConfig = PopulationConfig()
    cohort: PopulationConfig = PopulationConfig(n_speakers=100, utts_per_speaker=10)
    mappings: tuple = tuple(default_mappings())
    seeds: tuple = (1, 2, 3, 4, 5)
    ridge: float = DEFAULT_RIDGE
    max_nontarget_per_test: int | None = None

    def __post_init__(self):
        if not self.seeds:
            raise ConfigError("seeds must be a nonempty list")
        for s in self.seeds:
            if not isinstance(s, int) or isinstance(s, bool) or not 0 <= s < 2**64:
                raise ConfigError(f"seeds must be unsigned 64-bit integers, got {s!r}")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct")
        if not isinstance(self.ridge, (int, float)) or not self.ridge >= 0:
            raise ConfigError(f"ridge must be nonnegative, got {self.ridge!r}")
        cap = self.max_nontarget_per_test
        if cap is not None and (not isinstance(cap, int) or cap < 1):
            raise ConfigError("max_nontarget_per_test must be a positive integer or null")

    def per_seed(self, seed):
        """Population, cohort and mappings for one seed of the run."""
        pop = replace(self.population, seed=seed)
        coh = replace(self.cohort, seed=(seed + COHORT_SEED_OFFSET) % 2**64)
        return pop, coh, [m.reseeded(seed) for m in self.mappings]

    def to_dict(self):
        return {
            "population": {k: v for k, v in asdict(self.population).items() if k != "seed"},
            "cohort": {k: v for k, v in asdict(self.cohort).items() if k != "seed"},
            "mappings": [m.to_dict() for m in self.mappings],
            "seeds": list(self.seeds),
            "ridge": self.ridge,
            "max_nontarget_per_test": self.max_nontarget_per_test,
        }

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ConfigError("simulation config must be a JSON object")
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config field(s): {sorted(unknown)}")
        kw = {}
        if "population" in d:
            kw["population"] = PopulationConfig.from_dict(d["population"], "population")
        if "cohort" in d:
            kw["cohort"] = PopulationConfig.from_dict(d["cohort"], "cohort")
        if "mappings" in d:
            if not isinstance(d["mappings"], list) or not d["mappings"]:
                raise ConfigError("mappings must be a nonempty list")
            maps = []
            for i, m in enumerate(d["mappings"]):
                try:
                    maps.append(MappingConfig.from_dict(m))
                except (ConfigError, TypeError) as err:
                    raise ConfigError(f"mappings[{i}].{err}") from None
            kw["mappings"] = tuple(maps)
        if "seeds" in d:
            if not isinstance(d["seeds"], list):
                raise ConfigError("seeds must be a list of integers")
            kw["seeds"] = tuple(d["seeds"])
        for key in ("ridge", "max_nontarget_per_test"):
            if key in d:
                kw[key] = d[key]
        return cls(**kw)


def run_simulation(config: SimulationConfig = SimulationConfig(), keep_sets=False):
    """Run every seed and merge the rows into one report."""
    rows, sets = [], {}
    for seed in config.seeds:
        pop, coh, maps = config.per_seed(seed)
        rep, s = run_experiment(pop, coh, maps, trials_seed=seed, ridge=config.ridge,
                                max_nontarget_per_test=config.max_nontarget_per_test,
                                keep_sets=True)
        rows.extend(rep.rows)
        if keep_sets:
            sets[seed] = s
    report = ExperimentReport(
        rows=tuple(sorted(rows, key=_row_order)),
        seeds=tuple(config.seeds),
        config=config.to_dict(),
    )
    return (report, sets) if keep_sets else report


# ---------------------------------------------------------------- assertions

DISPERSION_GAP = 0.05  # minimum relative J gap per seed
DISPERSION_QUORUM = 0.8  # fraction of seeds that must show the ordering
LINK_GAP_POINTS = 1.0
INCONCLUSIVE_POINTS = 0.5
DEID_BAND = (45.0, 55.0)
DEID_MAX_DIFF_POINTS = 2.0


@dataclass(frozen=True)
class TrendVerdict:
    name: str
    system: str
    status: str  # pass | fail | inconclusive
    margin: float
    per_seed: tuple = ()
    detail: str = ""

    @property
    def passed(self):
        return self.status == "pass"

    def to_dict(self):
        return {
            "name": self.name,
            "system": self.system,
            "status": self.status,
            "margin": self.margin,
            "per_seed": list(self.per_seed),
            "detail": self.detail,
        }


def _pairs(report):
    """{system: (a2o rows by seed, a2a rows by seed)} for systems with both modes."""
    out = {}
    systems = sorted({r.system for r in report.rows if r.mode in ("a2o", "a2a")})
    for system in systems:
        a2o = {r.seed: r for r in report.rows if r.system == system and r.mode == "a2o"}
        a2a = {r.seed: r for r in report.rows if r.system == system and r.mode == "a2a"}
        if a2o and a2a:
            out[system] = (a2o, a2a)
    return out


def trend_check(report: ExperimentReport):
    """Evaluate the dispersion, linkability and de-identification assertions.

    Margins: dispersion is the mean over seeds of the smaller relative J gap
    (org vs a2o, a2o vs a2a); linkability is the mean EER gain of a2a over a2o
    in percentage points; de-identification is the slack left under the
    2-point difference bound (negative when either EER leaves the 45-55% band).
    """
    pairs = _pairs(report)
    if not pairs:
        raise DataError("report needs a2o and a2a rows of the same system")
    org = {r.seed: r for r in report.rows if r.condition == "org"}
    verdicts = []
    for system, (a2o, a2a) in pairs.items():
        seeds = sorted(set(a2o) & set(a2a))
        if not seeds:
            raise DataError(f"system {system!r}: a2o and a2a rows share no seed")

        gaps = []
        for s in seeds:
            j_o = a2o[s].scatter.j_trace_ratio
            j_a = a2a[s].scatter.j_trace_ratio
            gap = (j_o - j_a) / j_o
            if s in org:
                j_org = org[s].scatter.j_trace_ratio
                gap = min(gap, (j_org - j_o) / j_org)
            gaps.append(gap)
        n_ok = sum(g >= DISPERSION_GAP for g in gaps)
        ok = n_ok >= math.ceil(DISPERSION_QUORUM * len(seeds) - 1e-9)
        verdicts.append(TrendVerdict(
            "dispersion", system, "pass" if ok else "fail", float(np.mean(gaps)),
            tuple(float(g) for g in gaps),
            f"J(org) > J(a2o) > J(a2a) by >= {DISPERSION_GAP:.0%} in {n_ok}/{len(seeds)} seeds",
        ))

        link = [100 * (a2a[s].linkability.eer - a2o[s].linkability.eer) for s in seeds]
        m = float(np.mean(link))
        if abs(m) < INCONCLUSIVE_POINTS:
            status = "inconclusive"
        else:
            status = "pass" if m >= LINK_GAP_POINTS else "fail"
        verdicts.append(TrendVerdict(
            "linkability", system, status, m, tuple(float(v) for v in link),
            f"mean EER(a2a) - EER(a2o) = {m:.2f} points (need >= {LINK_GAP_POINTS})",
        ))

        if all(a2o[s].deidentification is not None and a2a[s].deidentification is not None
               for s in seeds):
            e_o = float(np.mean([100 * a2o[s].deidentification.eer for s in seeds]))
            e_a = float(np.mean([100 * a2a[s].deidentification.eer for s in seeds]))
            diff = abs(e_a - e_o)
            lo, hi = DEID_BAND
            band_slack = min(e_o - lo, hi - e_o, e_a - lo, hi - e_a)
            margin = min(DEID_MAX_DIFF_POINTS - diff, band_slack)
            verdicts.append(TrendVerdict(
                "deidentification", system, "pass" if margin >= 0 else "fail", float(margin),
                tuple(float(100 * (a2a[s].deidentification.eer - a2o[s].deidentification.eer))
                      for s in seeds),
                f"EER a2o {e_o:.2f}%, a2a {e_a:.2f}%, |diff| {diff:.2f} points",
            ))
        else:
            verdicts.append(TrendVerdict("deidentification", system, "fail", float("nan"),
                                         detail="missing de-identification results"))
    return verdicts


# ------------------------------------------------------------------ markdown

def _mean(values):
    values = list(values)
    return float(np.mean(values)) if values else float("nan")


def _conditions(report):
    seen = []
    for r in report.rows:
        key = (r.system, r.condition, r.mode)
        if key not in seen:
            seen.append(key)
    return seen


def render_markdown(report: ExperimentReport, trends=None):
    """Three tables (dispersion, linkability, de-identification), means over seeds."""
    lines = [f"Seeds: {', '.join(str(s) for s in report.seeds)}", ""]
    conds = _conditions(report)

    def rows_for(system, condition):
        return [r for r in report.rows if r.system == system and r.condition == condition]

    lines += ["### Dispersion", "",
              "| System | Condition | Tr(W'SwW) | Tr(W'SbW) | J (trace ratio) | J (LDA) | Tr(Sw) raw |",
              "|---|---|---|---|---|---|---|"]
    for system, condition, mode in conds:
        rs = rows_for(system, condition)
        lines.append(
            f"| {system} | {condition} | {_mean(r.scatter.tr_w for r in rs):.2f} "
            f"| {_mean(r.scatter.tr_b for r in rs):.2f} "
            f"| {_mean(r.scatter.j_trace_ratio for r in rs):.4f} "
            f"| {_mean(r.scatter.j_lda for r in rs):.4f} "
            f"| {_mean(r.scatter.raw_tr_w for r in rs):.2f} |"
        )

    def eer_table(title, attr, parts_attr, include_org):
        parts = sorted({p for r in report.rows for p in getattr(r, parts_attr)})
        head = "| System | Condition | " + " | ".join(parts) + " | Avg | Weighted avg | Pooled |"
        out = ["", f"### {title}", "", head, "|" + "---|" * (len(parts) + 5)]
        for system, condition, mode in conds:
            if condition == "org" and not include_org:
                continue
            rs = rows_for(system, condition)
            cells = [f"{100 * _mean(getattr(r, parts_attr)[p].eer for r in rs):.2f}" for p in parts]
            avgs = [asv.average_eers(getattr(r, parts_attr).values()) for r in rs]
            out.append(
                f"| {system} | {condition} | " + " | ".join(cells)
                + f" | {100 * _mean(a for a, _ in avgs):.2f} | {100 * _mean(w for _, w in avgs):.2f}"
                + f" | {100 * _mean(getattr(r, attr).eer for r in rs):.2f} |"
            )
        return out

    lines += eer_table("Linkability EER (%)", "linkability", "linkability_by_partition", True)
    lines += eer_table("De-identification EER (%)", "deidentification",
                       "deidentification_by_partition", False)
    if trends:
        lines += ["", "### Trend checks", "", "| Assertion | System | Status | Margin | Detail |",
                  "|---|---|---|---|---|"]
        for t in trends:
            lines.append(f"| {t.name} | {t.system} | {t.status} | {t.margin:.4f} | {t.detail} |")
    return "\n".join(lines) + "\n"
