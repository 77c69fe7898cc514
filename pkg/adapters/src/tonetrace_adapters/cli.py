"""CLI: run adapter jobs or probe which model stacks are installed."""

from __future__ import annotations

import argparse
import json
import sys

from .engines import resolve_engine
from .jobs import KINDS, AdapterJob, InferenceError, ModelUnavailable
from .runner import run_adapter


def _cmd_run(args) -> int:
    job = AdapterJob.load(args.job)
    written = run_adapter(job)
    for path in written:
        print(path)
    return 0


def _cmd_probe(args) -> int:
    status = {}
    for kind in KINDS:
        params = {"model": "vggish"} if kind == "embed_extract" else {}
        try:
            engine = resolve_engine(kind, params)
            status[kind] = {"available": True, "model": engine.name,
                            "version": engine.version}
        except ModelUnavailable as exc:
            status[kind] = {"available": False, "reason": str(exc)}
    print(json.dumps(status, indent=2, sort_keys=True))
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="tonetrace-adapters", description=__doc__)
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("run", help="run a job described by a JSON file")
    p.add_argument("--job", required=True, help="job JSON: kind, in_dir, out_dir, ...")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("probe", help="report which model stacks are installed")
    p.set_defaults(func=_cmd_probe)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ModelUnavailable as exc:
        print(f"model unavailable: {exc}", file=sys.stderr)
        return 3
    except (ValueError, FileNotFoundError, InferenceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
