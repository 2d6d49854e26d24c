"""Command-line interface.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical error. Output files are written through temp files and renamed
only once the whole command has succeeded.
"""
from __future__ import annotations

import argparse
import json
import os
import shutil
import sys
import tempfile
from importlib import resources

import numpy as np

from . import asv, sim
from .core import atomic_write_text, dumps_embeddings, load_embeddings
from .dispersion import DEFAULT_RIDGE, dispersion_of
from .errors import ConfigError, DataError, NumericalError
from .mapping import MappingConfig, anonymize, pseudo_hash

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _u64(text):
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _ridge(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not v >= 0:
        raise argparse.ArgumentTypeError("ridge must be nonnegative")
    return v


def _positive(text):
    v = _u64(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _read_json(path, what):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"{what} not found: {path}") from None
    except json.JSONDecodeError as err:
        raise ConfigError(f"{what} is not valid JSON: {err}") from None


def _load(path):
    try:
        return load_embeddings(path)
    except FileNotFoundError:
        raise DataError(f"no such file: {path}") from None
    except UnicodeDecodeError:
        raise DataError(f"{path} is not UTF-8 text") from None


def default_config_text():
    return resources.files("pinhole").joinpath("default_config.json").read_text(encoding="utf-8")


def _dump(obj):
    return json.dumps(obj, indent=2) + "\n"


# ---------------------------------------------------------------- commands

def cmd_simulate(args):
    if args.config is None:
        raw = json.loads(default_config_text())
    else:
        raw = _read_json(args.config, "config")
    config = sim.SimulationConfig.from_dict(raw)
    report, sets = sim.run_simulation(config, keep_sets=True)
    trends = sim.trend_check(report)

    files = {"report.json": report.to_json(trends),
             "report.md": sim.render_markdown(report, trends)}
    for seed, by_cond in sets.items():
        for key, emb in by_cond.items():
            if key == "cohort":
                continue
            name = f"org_seed{seed}.csv" if key == "org" else f"anon_{key}_seed{seed}.csv"
            files[name] = dumps_embeddings(emb)

    out_dir = os.path.abspath(args.out)
    parent = os.path.dirname(out_dir)
    os.makedirs(parent, exist_ok=True)
    staging = tempfile.mkdtemp(prefix=".simulate-", dir=parent)
    try:
        for name, text in files.items():
            with open(os.path.join(staging, name), "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
        os.makedirs(out_dir, exist_ok=True)
        for name in sorted(files):
            os.replace(os.path.join(staging, name), os.path.join(out_dir, name))
    finally:
        shutil.rmtree(staging, ignore_errors=True)

    if args.format == "markdown":
        sys.stdout.write(files["report.md"])
    else:
        sys.stdout.write(_dump([t.to_dict() for t in trends]))
    return EXIT_OK


def cmd_anonymize(args):
    raw = _read_json(args.mapping, "mapping config")
    try:
        config = MappingConfig.from_dict(raw)
    except TypeError as err:
        raise ConfigError(str(err)) from None
    emb = _load(args.embeddings)
    cohort = _load(args.cohort)
    anon, pseudo = anonymize(emb, cohort, config, return_pseudo=True)
    hashes = [pseudo_hash(p) for p in pseudo]
    sidecar = {
        "config": config.to_dict(),
        "residual_seed": config.residual_seed,
        "assignment_seed": config.assignment_seed,
        "n_distinct_pseudo": len(set(hashes)),
        "pseudo_hashes": [{"utt_id": u, "pseudo": h} for u, h in zip(anon.utt_ids, hashes)],
    }
    text = dumps_embeddings(anon)
    atomic_write_text(args.out + ".json", _dump(sidecar))
    atomic_write_text(args.out, text)
    return EXIT_OK


def cmd_dispersion(args):
    report = dispersion_of(_load(args.embeddings), args.ridge)
    if args.format == "markdown":
        sys.stdout.write(
            "| Tr(W'SwW) | Tr(W'SbW) | J (trace ratio) | J (LDA) |\n|---|---|---|---|\n"
            f"| {report.tr_w:.4f} | {report.tr_b:.4f} | {report.j_trace_ratio:.6f} "
            f"| {report.j_lda:.6f} |\n"
        )
    else:
        sys.stdout.write(report.to_json() + "\n")
    return EXIT_OK


def _eval_scores(enroll, test, mode, seed, cap):
    if mode == "deid":
        if set(enroll.utt_ids) != set(test.utt_ids):
            raise DataError("deid mode needs the same utterances in both files")
        return asv.split_scores(enroll, test, seed, cap)
    if set(enroll.utt_ids) == set(test.utt_ids):
        if test.n_speakers < 2:
            raise DataError("linkability needs at least 2 speakers")
        return asv.split_scores(enroll, test, seed, cap)
    trials = asv.generate_trials(enroll, test, cap, seed)
    return asv.score_trials(enroll, test, trials)


def _emit_eer(result, fmt):
    if fmt == "markdown":
        sys.stdout.write(
            "| EER (%) | threshold | targets | nontargets |\n|---|---|---|---|\n"
            f"| {100 * result.eer:.2f} | {result.threshold:.6f} | {result.n_target} "
            f"| {result.n_nontarget} |\n"
        )
    else:
        sys.stdout.write(result.to_json() + "\n")


def cmd_eval(args):
    enroll = _load(args.enroll)
    test = _load(args.test)
    scores = _eval_scores(enroll, test, args.mode, args.seed, args.max_nontarget)
    result = asv.eer(scores)
    if args.trials_out:
        asv.save_trials(scores.trials, args.trials_out)
    if args.scores_out:
        asv.save_scores(scores, args.scores_out)
    _emit_eer(result, args.format)
    return EXIT_OK


def cmd_trials(args):
    trials = asv.generate_trials(_load(args.enroll), _load(args.test), args.max_nontarget, args.seed)
    text = asv.format_trials(trials)
    if args.out:
        atomic_write_text(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _read_text(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except FileNotFoundError:
        raise DataError(f"no such file: {path}") from None


def cmd_score(args):
    trials = asv.parse_trials(_read_text(args.trials))
    scores = asv.score_trials(_load(args.enroll), _load(args.test), trials)
    text = asv.format_scores(scores)
    if args.out:
        atomic_write_text(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_eer(args):
    trials = asv.parse_trials(_read_text(args.trials))
    scores = asv.parse_scores(_read_text(args.scores), trials)
    _emit_eer(asv.eer(scores), args.format)
    return EXIT_OK


# ------------------------------------------------------------------ parser

def build_parser():
    parser = _Parser(prog="pinhole", description="Speaker-anonymization evaluation in embedding space.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def fmt(p):
        p.add_argument("--format", choices=["json", "markdown"], default="json",
                       help="stdout format (default: json)")

    p = sub.add_parser("simulate", help="run the seeded pinhole simulation")
    p.add_argument("config", nargs="?", help="simulation config JSON (default: shipped config)")
    p.add_argument("--out", required=True, help="output directory")
    fmt(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("anonymize", help="anonymize an embedding CSV")
    p.add_argument("embeddings", help="input embedding CSV")
    p.add_argument("cohort", help="cohort embedding CSV for pseudo-speaker selection")
    p.add_argument("mapping", help="mapping config JSON")
    p.add_argument("--out", required=True, help="output CSV; a <out>.json sidecar is written next to it")
    p.set_defaults(func=cmd_anonymize)

    p = sub.add_parser("dispersion", help="scatter traces and ratio J of an embedding CSV")
    p.add_argument("embeddings")
    p.add_argument("--ridge", type=_ridge, default=DEFAULT_RIDGE,
                   help=f"relative ridge added to S_w (default: {DEFAULT_RIDGE})")
    fmt(p)
    p.set_defaults(func=cmd_dispersion)

    p = sub.add_parser("eval", help="linkability or de-identification EER")
    p.add_argument("enroll", help="enrollment-side embedding CSV")
    p.add_argument("test", help="test-side embedding CSV")
    p.add_argument("--mode", choices=["link", "deid"], required=True,
                   help="link: anonymized both sides; deid: original enroll, anonymized test")
    p.add_argument("--seed", type=_u64, default=0, help="trial sampling seed (default: 0)")
    p.add_argument("--max-nontarget", type=_positive, default=None,
                   help="cap on nontarget trials per test utterance (default: all)")
    p.add_argument("--trials-out", help="write the trial list here")
    p.add_argument("--scores-out", help="write the scores here")
    fmt(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("trials", help="generate a trial list")
    p.add_argument("enroll")
    p.add_argument("test")
    p.add_argument("--seed", type=_u64, default=0, help="trial sampling seed (default: 0)")
    p.add_argument("--max-nontarget", type=_positive, default=None,
                   help="cap on nontarget trials per test utterance (default: all)")
    p.add_argument("--out", help="output file (default: stdout)")
    p.set_defaults(func=cmd_trials)

    p = sub.add_parser("score", help="cosine-score a trial list")
    p.add_argument("enroll")
    p.add_argument("test")
    p.add_argument("trials")
    p.add_argument("--out", help="output file (default: stdout)")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("eer", help="EER of a score file")
    p.add_argument("trials", help="trial file carrying the target/nontarget labels")
    p.add_argument("scores", help="score file")
    fmt(p)
    p.set_defaults(func=cmd_eer)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"pinhole {args.command}: configuration error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as err:
        print(f"pinhole {args.command}: numerical error: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, OSError) as err:
        print(f"pinhole {args.command}: data error: {err}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
