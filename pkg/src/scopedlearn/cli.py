"""Command-line entry point for reproducible runs.

Five subcommands cover the pipeline: ``synth`` writes a sampled corpus
plus its generating truth, ``train`` fits the global models, ``infer``
runs a per-locale algorithm over a test corpus, ``oracle`` writes exact
posteriors for small locales, and ``eval`` scores predictions against
gold labels, emitting a curve CSV, a summary, and a rendered figure.

Every run writes a ``<out>.manifest.json`` echoing the configuration and
the SHA-256 of each input file. Manifests carry basenames only, so a
pipeline rerun with the same seed is byte-identical wherever it lands.

Exit codes: 0 success, 1 runtime error, 2 usage, 3 malformed input file,
4 dimension mismatch, 5 oracle cap exceeded.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .corpus import Corpus, CorpusError, DimensionMismatch, load_corpus, save_corpus
from .evaluation import (
    ScoredPrediction,
    average_precision,
    curve_csv_rows,
    error_reduction_at_recall,
    pr_curve,
    token_accuracy,
)
from .exact_oracle import OracleCapExceeded, exact_label_posterior
from .global_model import (
    ModelBundle,
    class_prior,
    load_model,
    log_joint_matrix,
    save_model,
    train_maxent,
    train_naive_bayes,
)
from .numerics import normalize_log
from .scoped_discriminative import cond_em_infer
from .scoped_generative import (
    InferenceConfig,
    ScopedResult,
    map_em_infer,
    variational_infer,
)
from .synth import SynthSpec, sample_corpus

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_FORMAT = 3
EXIT_DIMENSION = 4
EXIT_ORACLE_CAP = 5

ALGORITHMS = ("global", "map_em", "variational", "cond_em")


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(out_path, command: str, params: dict, inputs: list) -> None:
    doc = {
        "command": command,
        "version": __version__,
        "params": params,
        "inputs": {os.path.basename(str(p)): _sha256(p) for p in inputs},
    }
    with open(f"{out_path}.manifest.json", "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_jsonl(path, rows: list) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")


def _load_model_checked(path) -> ModelBundle:
    try:
        return load_model(path)
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise CorpusError(f"{path}: malformed model file: {exc}") from exc


def _parse_instances(text: str):
    if ":" in text:
        lo, hi = text.split(":", 1)
        return (int(lo), int(hi))
    return int(text)


def _parse_eta(text: str):
    if text == "sample":
        return "sample"
    return tuple(float(p) for p in text.split(","))


def _cmd_synth(args) -> int:
    spec = SynthSpec(
        num_classes=args.classes,
        global_vocab=args.global_vocab,
        local_vocab=args.local_vocab,
        num_locales=args.locales,
        instances_per_locale=_parse_instances(args.instances),
        eta_truth=_parse_eta(args.eta),
        beta_concentration=args.beta_concentration,
        phi_concentration=args.phi_concentration,
        global_bag_size=args.global_bag,
        local_bag_size=args.local_bag,
        seed=args.seed,
    )
    corpus, truth = sample_corpus(spec)
    save_corpus(corpus, args.out)
    truth_path = args.truth_out or f"{args.out}.truth.json"
    # The truth file uses the model serialization format (plus the per-locale
    # phi rows), so it loads anywhere a trained model file does.
    truth_doc = {
        "K": spec.num_classes,
        "V": spec.global_vocab,
        "generative": {
            "eta": truth.eta.tolist(),
            "beta": truth.beta.tolist(),
            "smoothing": 0.0,
        },
        "discriminative": None,
        "class_prior": truth.eta.tolist(),
        "phi": {loc.id: phi.tolist() for loc, phi in zip(corpus.locales, truth.phi)},
    }
    with open(truth_path, "w", encoding="utf-8") as fh:
        json.dump(truth_doc, fh)
        fh.write("\n")
    _write_manifest(
        args.out,
        "synth",
        {
            "classes": spec.num_classes,
            "global_vocab": spec.global_vocab,
            "local_vocab": spec.local_vocab,
            "locales": spec.num_locales,
            "instances": args.instances,
            "eta": args.eta,
            "beta_concentration": spec.beta_concentration,
            "phi_concentration": spec.phi_concentration,
            "global_bag": spec.global_bag_size,
            "local_bag": spec.local_bag_size,
            "seed": spec.seed,
            "out": os.path.basename(str(args.out)),
            "truth_out": os.path.basename(str(truth_path)),
        },
        inputs=[],
    )
    return EXIT_OK


def _cmd_train(args) -> int:
    corpus = load_corpus(args.corpus)
    bundle = ModelBundle(
        generative=train_naive_bayes(corpus, smoothing=args.smoothing),
        discriminative=train_maxent(corpus, prior_variance=args.prior_variance),
        prior=class_prior(corpus, smoothing=args.smoothing),
    )
    save_model(bundle, args.model)
    _write_manifest(
        args.model,
        "train",
        {
            "corpus": os.path.basename(str(args.corpus)),
            "model": os.path.basename(str(args.model)),
            "smoothing": args.smoothing,
            "prior_variance": args.prior_variance,
        },
        inputs=[args.corpus],
    )
    return EXIT_OK


def _global_result(bundle: ModelBundle, locale) -> ScopedResult:
    posteriors = normalize_log(log_joint_matrix(bundle.generative, locale), axis=1)
    return ScopedResult(
        posteriors=posteriors,
        labels=np.argmax(posteriors, axis=1),
        objective_trace=(),
        iterations=0,
        converged=True,
    )


def _cmd_infer(args) -> int:
    corpus = load_corpus(args.corpus)
    bundle = _load_model_checked(args.model)
    bundle.check_dims(corpus.dims)
    config = InferenceConfig(
        max_iters=args.max_iters,
        rel_tolerance=args.tol,
        m_step_smoothing=args.m_step_smoothing,
        alpha=args.alpha,
    )
    F = corpus.dims.F
    algo = args.algo
    if algo in ("global", "map_em", "variational") and bundle.generative is None:
        raise CorpusError(f"{args.model}: no generative model in bundle, required by {algo}")
    if algo == "cond_em" and (bundle.discriminative is None or bundle.prior is None):
        raise CorpusError(f"{args.model}: cond_em needs a discriminative model and a class prior")

    def run_one(locale) -> ScopedResult:
        if algo == "global":
            return _global_result(bundle, locale)
        if algo == "map_em":
            return map_em_infer(bundle.generative, locale, F, config)[1]
        if algo == "variational":
            return variational_infer(bundle.generative, locale, F, config)[1]
        return cond_em_infer(bundle.discriminative, bundle.prior, locale, F, config)[1]

    if args.threads > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            results = list(pool.map(run_one, corpus.locales))
    else:
        results = [run_one(loc) for loc in corpus.locales]
    paired = sorted(zip(corpus.locales, results), key=lambda lr: lr[0].id)
    _write_jsonl(
        args.out,
        [{"id": loc.id, "algo": algo} | res.to_dict() for loc, res in paired],
    )
    _write_manifest(
        args.out,
        "infer",
        {
            "corpus": os.path.basename(str(args.corpus)),
            "model": os.path.basename(str(args.model)),
            "out": os.path.basename(str(args.out)),
            "algo": algo,
            "alpha": args.alpha,
            "max_iters": args.max_iters,
            "tol": args.tol,
            "m_step_smoothing": args.m_step_smoothing,
            "threads": args.threads,
        },
        inputs=[args.corpus, args.model],
    )
    return EXIT_OK


def _cmd_oracle(args) -> int:
    corpus = load_corpus(args.corpus)
    bundle = _load_model_checked(args.model)
    bundle.check_dims(corpus.dims)
    if bundle.generative is None:
        raise CorpusError(f"{args.model}: oracle requires a generative model")
    rows = []
    for locale in sorted(corpus.locales, key=lambda loc: loc.id):
        result = exact_label_posterior(
            bundle.generative, locale, corpus.dims.F, alpha=args.alpha, cap=args.oracle_cap
        )
        rows.append({"id": locale.id} | result.to_dict())
    _write_jsonl(args.out, rows)
    _write_manifest(
        args.out,
        "oracle",
        {
            "corpus": os.path.basename(str(args.corpus)),
            "model": os.path.basename(str(args.model)),
            "out": os.path.basename(str(args.out)),
            "alpha": args.alpha,
            "oracle_cap": args.oracle_cap,
        },
        inputs=[args.corpus, args.model],
    )
    return EXIT_OK


def _gold_and_scores(corpus: Corpus, report_path, positive: int):
    with open(report_path, "r", encoding="utf-8") as fh:
        rows = [json.loads(line) for line in fh if line.strip()]
    by_id = {}
    for row in rows:
        by_id[row["id"]] = row
    predictions = []
    labels = []
    gold_labels = []
    for locale in corpus.locales:
        if locale.id not in by_id:
            raise CorpusError(f"{report_path}: no predictions for locale {locale.id!r}")
        row = by_id[locale.id]
        posteriors = row["posteriors"]
        if len(posteriors) != len(locale.instances):
            raise CorpusError(
                f"{report_path}: locale {locale.id!r} has {len(posteriors)} rows, "
                f"corpus has {len(locale.instances)} instances"
            )
        for inst, post, label in zip(locale.instances, posteriors, row["labels"]):
            if inst.label is None:
                raise CorpusError(f"eval requires gold labels: locale {locale.id!r}")
            predictions.append(ScoredPrediction(score=post[positive], gold=inst.label == positive))
            labels.append(int(label))
            gold_labels.append(inst.label)
    return predictions, labels, gold_labels


def _cmd_eval(args) -> int:
    corpus = load_corpus(args.corpus)
    positive = args.positive_class
    if not 0 <= positive < corpus.dims.K:
        raise DimensionMismatch(f"positive class {positive} outside [0, {corpus.dims.K})")
    predictions, labels, gold = _gold_and_scores(corpus, args.predictions, positive)
    curve = pr_curve(predictions)
    summary = {
        "positive_class": positive,
        "num_instances": len(predictions),
        "average_precision": average_precision(predictions),
        "token_accuracy": token_accuracy(labels, gold),
    }
    curves = {"predictions": curve}
    inputs = [args.corpus, args.predictions]
    if args.baseline:
        base_pred, _, _ = _gold_and_scores(corpus, args.baseline, positive)
        base_curve = pr_curve(base_pred)
        curves["baseline"] = base_curve
        summary["baseline_average_precision"] = average_precision(base_pred)
        levels = [float(x) for x in args.recall_levels.split(",") if x]
        summary["error_reduction_at_recall"] = {
            repr(level): error_reduction_at_recall(base_curve, curve, level)
            for level in levels
        }
        with open(f"{args.out}.baseline.curve.csv", "w", encoding="utf-8") as fh:
            fh.write("\n".join(curve_csv_rows(base_curve)) + "\n")
        inputs.append(args.baseline)
    with open(f"{args.out}.curve.csv", "w", encoding="utf-8") as fh:
        fh.write("\n".join(curve_csv_rows(curve)) + "\n")
    with open(f"{args.out}.summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    from .plots import render_pr_curves

    render_pr_curves(curves, f"{args.out}.pr.png")
    _write_manifest(
        args.out,
        "eval",
        {
            "corpus": os.path.basename(str(args.corpus)),
            "predictions": os.path.basename(str(args.predictions)),
            "baseline": os.path.basename(str(args.baseline)) if args.baseline else None,
            "out": os.path.basename(str(args.out)),
            "positive_class": positive,
            "recall_levels": args.recall_levels,
        },
        inputs=inputs,
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scopedlearn",
        description="Scoped learning: global classifiers with per-locale adaptation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="sample a corpus with known ground truth")
    p.add_argument("--out", required=True, help="corpus output path (JSONL)")
    p.add_argument("--truth-out", default=None, help="truth output path (default <out>.truth.json)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--classes", type=int, default=2)
    p.add_argument("--global-vocab", type=int, default=20)
    p.add_argument("--local-vocab", type=int, default=5)
    p.add_argument("--locales", type=int, default=10)
    p.add_argument("--instances", default="10", help="count N or inclusive range LO:HI")
    p.add_argument("--eta", default="sample", help='"sample" or comma-separated probabilities')
    p.add_argument("--beta-concentration", type=float, default=1.0)
    p.add_argument("--phi-concentration", type=float, default=1.0)
    p.add_argument("--global-bag", type=int, default=1)
    p.add_argument("--local-bag", type=int, default=1)
    p.set_defaults(handler=_cmd_synth)

    p = sub.add_parser("train", help="fit the global models on a labeled corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--model", required=True, help="model output path (JSON)")
    p.add_argument("--smoothing", type=float, default=1.0)
    p.add_argument("--prior-variance", type=float, default=1.0)
    p.set_defaults(handler=_cmd_train)

    p = sub.add_parser("infer", help="run a per-locale algorithm over a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True, help="report output path (JSONL)")
    p.add_argument("--algo", choices=ALGORITHMS, default="variational")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--max-iters", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--m-step-smoothing", type=float, default=1e-6)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(handler=_cmd_infer)

    p = sub.add_parser("oracle", help="exact posteriors by assignment enumeration")
    p.add_argument("--corpus", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True, help="report output path (JSONL)")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--oracle-cap", type=int, default=2**20)
    p.set_defaults(handler=_cmd_oracle)

    p = sub.add_parser("eval", help="score predictions against gold labels")
    p.add_argument("--predictions", required=True, help="report JSONL from infer/oracle")
    p.add_argument("--corpus", required=True, help="labeled corpus with gold labels")
    p.add_argument("--out", required=True, help="output prefix for curve/summary/figure")
    p.add_argument("--positive-class", type=int, default=0)
    p.add_argument("--baseline", default=None, help="baseline report JSONL to compare against")
    p.add_argument("--recall-levels", default="0.8,0.9")
    p.set_defaults(handler=_cmd_eval)
    return parser


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.handler(args)
    except CorpusError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except DimensionMismatch as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIMENSION
    except OracleCapExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ORACLE_CAP
    except Exception as exc:  # runtime errors get a diagnostic, not a traceback
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
