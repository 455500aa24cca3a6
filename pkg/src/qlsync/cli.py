"""Command-line entry point ``qlsync``.

Subcommands::

    qlsync run CONFIG.json [--resource.n-g 12 ...]
    qlsync validate CONFIG.json
    qlsync oracle-check CONFIG.json [--run.dt 0.1]
    qlsync partial-eigs-check CONFIG.json

Any ``--a.b-c VALUE`` flag overrides the config field ``a.b_c``; VALUE is
parsed as JSON when possible and kept as a string otherwise.  Set
``QLSYNC_THREADS`` to cap BLAS threads and sweep workers.
"""
import os
import sys

_THREADS = os.environ.get("QLSYNC_THREADS")
if _THREADS:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _THREADS)

import argparse  # noqa: E402
import dataclasses  # noqa: E402
import json  # noqa: E402
import logging  # noqa: E402
from pathlib import Path  # noqa: E402

from .errors import QLError  # noqa: E402

EXIT_OK, EXIT_FAILED, EXIT_ERROR = 0, 1, 2
_CHECKS = {"oracle-check": "oracle_check", "partial-eigs-check": "partial_eigs_check"}


def _parse_overrides(extra):
    out = {}
    i = 0
    while i < len(extra):
        flag = extra[i]
        if not flag.startswith("--") or "." not in flag:
            raise SystemExit(f"unrecognized argument {flag!r} (overrides look like --section.field VALUE)")
        if "=" in flag:
            key, raw = flag[2:].split("=", 1)
            i += 1
        else:
            if i + 1 >= len(extra):
                raise SystemExit(f"missing value for {flag}")
            key, raw = flag[2:], extra[i + 1]
            i += 2
        try:
            out[key] = json.loads(raw)
        except json.JSONDecodeError:
            out[key] = raw
    return out


def _write_error(out_dir, exc):
    record = {"error": getattr(exc, "code", type(exc).__name__), "type": type(exc).__name__,
              "message": str(exc)}
    for attr in ("required_bytes", "cap_bytes", "residuals", "weight", "time", "index"):
        if hasattr(exc, attr):
            record[attr] = getattr(exc, attr)
    try:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        with open(Path(out_dir) / "error.json", "w", encoding="utf-8") as fh:
            json.dump(record, fh, indent=2)
    except OSError:
        pass
    return record


def _raw_output_dir(path):
    """Best-effort output_dir for error records when the config fails validation."""
    try:
        with open(path, encoding="utf-8") as fh:
            return str(json.load(fh).get("output_dir", "out"))
    except (OSError, ValueError, AttributeError):
        return "out"


def build_parser():
    p = argparse.ArgumentParser(prog="qlsync", description=__doc__.split("\n")[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name, helptext in (("run", "run the configured experiment"),
                           ("validate", "report the spectral gap of one sampled resource"),
                           ("oracle-check", "spectral vs RK4 propagation"),
                           ("partial-eigs-check", "Lanczos top-k vs full diagonalization")):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("config", help="JSON experiment config")
        sp.add_argument("-o", "--output-dir", help="override output_dir")
    return p


def main(argv=None):
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = _parse_overrides(extra)
    if args.output_dir:
        overrides["output_dir"] = args.output_dir
    if _THREADS:
        overrides.setdefault("run.n_jobs", int(_THREADS))

    from . import experiments as ex

    out_dir = overrides.get("output_dir") or _raw_output_dir(args.config)
    try:
        cfg = ex.ExperimentConfig.load(args.config, overrides)
        out_dir = cfg.output_dir
        if args.command == "validate":
            summary = ex.validate_spec(cfg)
            Path(out_dir).mkdir(parents=True, exist_ok=True)
            with open(Path(out_dir) / "validation.json", "w", encoding="utf-8") as fh:
                json.dump(ex._jsonable(summary), fh, indent=2)
            manifest = {"experiment": "validate", "summary": summary, "passed": summary["passed"]}
        else:
            if args.command in _CHECKS:
                cfg = dataclasses.replace(cfg, experiment=_CHECKS[args.command])
            manifest = ex.run_experiment(cfg)
    except (QLError, OSError, json.JSONDecodeError) as exc:
        record = _write_error(out_dir, exc)
        print(json.dumps(record), file=sys.stderr)
        return EXIT_ERROR

    print(json.dumps(ex._jsonable({"experiment": manifest["experiment"], "passed": manifest["passed"],
                                   "summary": _brief(manifest["summary"])}), indent=2))
    return EXIT_OK if manifest["passed"] else EXIT_FAILED


def _brief(summary):
    return {k: v for k, v in summary.items() if not isinstance(v, list) or len(v) <= 8}


if __name__ == "__main__":
    sys.exit(main())
