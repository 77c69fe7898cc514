"""Command-line surface: embed, detect, attack, metrics, tokenize, experiment,
sweep, report.

Exit codes: 0 success, 1 usage error, 2 data/validation error, 3 internal
numeric failure. Diagnostics go to stderr; machine-readable output goes to
files or, with --json, to stdout.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import harness
from .audio import AttackSpec, apply_attack, load_wav, store_wav
from .corpus import make_corpus, write_corpus
from .detect import DEFAULT_PARAMS, matched_score
from .errors import InvalidAttackParams, InvalidSpec, NumericalFailure, TonetraceError
from .metrics import LabelDistribution, default_extractor, fad, kld_min, metric_report, si_snr
from .toygen import encode, fit_codebook, load_codebook, save_codebook
from .watermark import ToneEmbedder, multi_apply, parse_spec

log = logging.getLogger(__name__)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); we map usage errors to 1
        raise UsageError(message)


def _parse_wm(text: str, strength: float):
    try:
        return parse_spec(text, strength=strength)
    except InvalidSpec as exc:
        raise UsageError(str(exc)) from exc


def _parse_attack(text: str) -> AttackSpec:
    try:
        return AttackSpec.parse(text)
    except InvalidAttackParams as exc:
        raise UsageError(str(exc)) from exc


def _emit(obj, as_json: bool) -> None:
    if as_json:
        print(json.dumps(obj, sort_keys=True))
    else:
        for key, value in obj.items():
            print(f"{key}: {value}")


def _cmd_embed(args) -> int:
    spec = _parse_wm(args.wm, args.strength)
    audio = load_wav(getattr(args, "in"))
    out = multi_apply(ToneEmbedder(spec), audio, args.times)
    store_wav(out, args.out, encoding=args.encoding)
    print(f"wrote {args.out}", file=sys.stderr)
    return 0


def _cmd_detect(args) -> int:
    spec = _parse_wm(args.wm, 1.0)
    audio = load_wav(getattr(args, "in"))
    score = matched_score(audio, spec, DEFAULT_PARAMS, onset=args.onset)
    _emit({"score": score}, args.json)
    return 0


def _cmd_attack(args) -> int:
    attack = _parse_attack(args.attack)
    audio = load_wav(getattr(args, "in"))
    store_wav(apply_attack(audio, attack), args.out, encoding=args.encoding)
    print(f"wrote {args.out}", file=sys.stderr)
    return 0


def _load_dir_or_file(path: Path):
    if path.is_dir():
        return [item.audio for item in harness.load_dataset(path)]
    return [load_wav(path)]


def _cmd_metrics(args) -> int:
    if args.metric == "sisnr":
        ref = load_wav(args.ref)
        deg = load_wav(args.deg)
        report = metric_report("si_snr", si_snr(ref, deg), 1, 1)
    elif args.metric == "fad":
        ref = _load_dir_or_file(Path(args.ref))
        deg = _load_dir_or_file(Path(args.deg))
        extractor = default_extractor()
        report = metric_report("fad", fad(ref, deg, extractor), len(ref), len(deg),
                               extractor.name)
    elif args.metric == "kld":
        p = _load_distribution(args.ref)
        q = _load_distribution(args.deg)
        report = metric_report("kld_min", kld_min(p, q), 1, 1)
    else:
        raise UsageError(f"unknown metric {args.metric!r}")
    value = report["value"]
    if not args.json and not np.isfinite(value):
        report["value"] = "inf" if value > 0 else "-inf"
    _emit(report, args.json)
    return 0


def _load_distribution(path) -> LabelDistribution:
    obj = json.loads(Path(path).read_text())
    return LabelDistribution(probs=np.asarray(obj["probs"], dtype=float),
                             labels=tuple(obj["labels"]))


def _cmd_tokenize(args) -> int:
    cb_path = Path(args.codebook)
    if args.fit is not None:
        items = harness.load_dataset(args.fit)
        cb = fit_codebook([it.audio for it in items], args.k, seed=args.seed)
        save_codebook(cb, cb_path)
        print(f"fit codebook ({cb.size} tokens) -> {cb_path}", file=sys.stderr)
        if getattr(args, "in") is None:
            return 0
    cb = load_codebook(cb_path)
    tokens = encode(load_wav(getattr(args, "in")), cb)
    Path(args.out).write_text(json.dumps([int(t) for t in tokens]))
    print(f"wrote {args.out} ({tokens.size} tokens)", file=sys.stderr)
    return 0


def _cmd_synth(args) -> int:
    items = make_corpus(n_clips=args.clips, duration=args.duration,
                        sample_rate=args.rate, seed=args.seed)
    manifest = write_corpus(items, args.out_dir)
    print(f"wrote {len(items)} clips, manifest {manifest}", file=sys.stderr)
    return 0


def _cmd_experiment(args) -> int:
    manifest = harness.ExperimentManifest.load(args.manifest)
    result, scored = harness.run_attribution(manifest, jobs=args.jobs)
    harness.write_run_outputs(args.out_dir, manifest, result, scored)
    print(f"auc={result.auc:.4f} -> {args.out_dir}", file=sys.stderr)
    return 0


def _cmd_sweep(args) -> int:
    manifest = harness.ExperimentManifest.load(args.manifest)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    values = args.values
    if args.param == "p":
        rows = []
        for p in values:
            m = dataclasses.replace(manifest, proportion_p=float(p))
            result, _ = harness.run_attribution(m, compute_fad=False)
            rows.append({"p": float(p), "auc": result.auc,
                         "auc_per_seed": result.auc_per_seed})
    elif args.param == "n":
        n_values = [int(v) for v in values]
        m = dataclasses.replace(manifest, continuations_per_prompt=max(n_values))
        rows = [row for row in harness.run_best_of_n(m) if row["n_used"] in n_values]
    elif args.param == "k":
        if manifest.watermark is None:
            raise UsageError("k sweep needs a watermark in the manifest")
        items = harness.load_dataset(manifest.dataset_dir) if manifest.dataset_dir \
            else make_corpus()
        sweep = harness.run_robustness_sweep(
            items, ToneEmbedder(manifest.watermark), [int(v) for v in values],
            model=manifest.model,
        )
        rows = [dataclasses.asdict(r) for r in sweep]
    else:
        raise UsageError(f"unknown sweep parameter {args.param!r}")
    harness.report(rows, "json", out_dir / "sweep.json")
    harness.report(rows, "csv", out_dir / "sweep.csv")
    print(f"wrote {out_dir}/sweep.json", file=sys.stderr)
    return 0


def _cmd_report(args) -> int:
    run_dir = Path(args.run_dir)
    source = run_dir / "results.json"
    sweep = run_dir / "sweep.json"
    if source.exists():
        rows = [json.loads(source.read_text())]
    elif sweep.exists():
        rows = json.loads(sweep.read_text())
    else:
        raise UsageError(f"no results.json or sweep.json under {run_dir}")
    ext = {"csv": "csv", "json": "json", "markdown": "md"}[args.format]
    out = run_dir / f"report.{ext}"
    harness.report(rows, args.format, out)
    print(f"wrote {out}", file=sys.stderr)
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="tonetrace", description=__doc__)
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("embed", help="embed a watermark into a WAV file")
    p.add_argument("--in", required=True, help="input WAV")
    p.add_argument("--out", required=True, help="output WAV")
    p.add_argument("--wm", required=True,
                   help="watermark shorthand, e.g. tone:440 or switch:440:880:5")
    p.add_argument("--strength", type=float, default=1.0, help="RMS multiplier (default 1.0)")
    p.add_argument("--times", type=int, default=1, help="apply the embedder k times")
    p.add_argument("--encoding", choices=["pcm16", "float32"], default="float32")
    p.set_defaults(func=_cmd_embed)

    p = sub.add_parser("detect", help="score a WAV with the matching rule detector")
    p.add_argument("--in", required=True)
    p.add_argument("--wm", required=True)
    p.add_argument("--onset", type=float, default=None,
                   help="score the secret band from this time (default: the spec's d)")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_detect)

    p = sub.add_parser("attack", help="apply a removal attack")
    p.add_argument("--in", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--attack", required=True,
                   help="highpass:HZ | lowpass:HZ | quantize:BITS | noise:SNRDB[:SEED]")
    p.add_argument("--encoding", choices=["pcm16", "float32"], default="float32")
    p.set_defaults(func=_cmd_attack)

    p = sub.add_parser("metrics", help="compute si-snr, fad, or kld")
    p.add_argument("--metric", required=True, choices=["sisnr", "fad", "kld"])
    p.add_argument("--ref", required=True, help="reference file/dir (kld: distribution JSON)")
    p.add_argument("--deg", required=True, help="degraded/generated file/dir")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_metrics)

    p = sub.add_parser("tokenize", help="encode a WAV into codec tokens")
    p.add_argument("--codebook", required=True, help="codebook file (see --fit)")
    p.add_argument("--in", default=None, help="input WAV")
    p.add_argument("--out", default=None, help="output token JSON")
    p.add_argument("--fit", default=None, metavar="DIR",
                   help="fit the codebook on a dataset directory first")
    p.add_argument("--k", type=int, default=256, help="codebook size when fitting")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_tokenize)

    p = sub.add_parser("synth", help="generate the bundled synthetic corpus")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--clips", type=int, default=200)
    p.add_argument("--duration", type=float, default=10.0)
    p.add_argument("--rate", type=int, default=32000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("experiment", help="run an attribution experiment manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                   help="parallel seed workers (default: available cores)")
    p.set_defaults(func=_cmd_experiment)

    p = sub.add_parser("sweep", help="sweep proportion p, multi-apply k, or best-of n")
    p.add_argument("--manifest", required=True)
    p.add_argument("--param", required=True, choices=["p", "k", "n"])
    p.add_argument("--values", required=True, nargs="+", type=float)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("report", help="render a run directory as csv/json/markdown")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--format", required=True, choices=["csv", "json", "markdown"])
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "in", None) is None and args.verb == "tokenize" and args.fit is None:
            raise UsageError("tokenize needs --in (or --fit to build a codebook)")
        if args.verb == "tokenize" and getattr(args, "in", None) is not None and args.out is None:
            raise UsageError("tokenize --in needs --out")
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalFailure as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except TonetraceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
