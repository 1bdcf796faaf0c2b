"""Command-line entry point: ``enfloc {synth,train,classify,evaluate,plot}``.

Exit codes: 0 success, 1 some inputs failed, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import cascade
from .errors import ConfigError, EnflocError
from .synth import SynthCorpusSpec, generate_corpus, read_manifest

CONFIG_ENV = "ENFLOC_CONFIG"
PLOT_KINDS = ("spectrogram", "enf", "poles")
EXIT_OK, EXIT_PARTIAL, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("enfloc")


class UsageError(Exception):
    pass


def _config_epilog() -> str:
    lines = ["pipeline config keys (defaults; set with --config FILE or --set KEY=VALUE):"]
    for k, v in cascade.PipelineConfig().to_dict().items():
        lines.append(f"  {k} = {json.dumps(v)}")
    lines.append(f"a default config file may be named by ${CONFIG_ENV}")
    return "\n".join(lines)


def resolve_config(args) -> cascade.PipelineConfig:
    """Defaults <- config file (``--config`` or $ENFLOC_CONFIG) <- ``--set`` <- dedicated flags."""
    values = {}
    path = getattr(args, "config", None) or os.environ.get(CONFIG_ENV)
    if path:
        if not Path(path).exists():
            raise UsageError(f"config file not found: {path}")
        values.update(cascade.load_config(path).to_dict())
    for item in getattr(args, "set", None) or []:
        key, sep, raw = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        try:
            values[key.strip()] = json.loads(raw)
        except json.JSONDecodeError:
            values[key.strip()] = raw
    if getattr(args, "features", None):
        values["features"] = args.features
    if getattr(args, "seed", None) is not None:
        values["seed"] = args.seed
    return cascade.PipelineConfig.from_mapping(values)


def cmd_synth(args) -> int:
    if args.spec:
        if not Path(args.spec).exists():
            raise UsageError(f"corpus spec not found: {args.spec}")
        with open(args.spec, "r", encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise UsageError(f"{args.spec}: invalid JSON ({exc})") from exc
        if isinstance(data.get("profiles"), str) and data["profiles"] != "default":
            data["profiles"] = str((Path(args.spec).parent / data["profiles"]).resolve())
        elif data.get("profiles") == "default":
            data.pop("profiles")
    else:
        data = {}
    if args.seed is not None:
        data["master_seed"] = args.seed
    try:
        spec = SynthCorpusSpec.from_dict(data)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad corpus spec: {exc}") from exc
    rows = generate_corpus(spec, args.out_dir)
    print(f"wrote {len(rows)} recordings and manifest.csv to {args.out_dir}")
    return EXIT_OK


def _manifest(path) -> list:
    if not Path(path).exists():
        raise UsageError(f"manifest not found: {path}")
    rows = read_manifest(path)
    for r in rows:
        if not Path(r["path"]).exists():
            raise UsageError(f"manifest entry not found: {r['path']}")
    return rows


def cmd_train(args) -> int:
    config = resolve_config(args)
    _manifest(args.manifest)
    items = cascade.training_items_from_manifest(args.manifest)
    model = cascade.train(items, config, jobs=args.jobs)
    cascade.save_model(model, args.out_model)
    for kind, m in sorted(model.svms.items()):
        print(f"{kind:8s} grids={len(m.classes):2d} features={len(m.mask):2d} "
              f"C={m.C:g} gamma={m.gamma:.4g} cv_accuracy={m.cv_accuracy:.4f}")
    print(f"model written to {args.out_model} (features={config.features})")
    return EXIT_OK


def cmd_classify(args) -> int:
    model = cascade.load_model(args.model)
    entries = cascade.classify_batch(model, args.inputs, jobs=args.jobs,
                                     declared_types=[args.declared_type] * len(args.inputs),
                                     skip_pole_match=args.baseline_only)
    out = open(args.output, "w", encoding="utf-8") if args.output else sys.stdout
    try:
        for e in entries:
            out.write(e.to_json(args.timing) + "\n")
    finally:
        if args.output:
            out.close()
    if not args.quiet:
        for e in entries:
            text = e.report.summary() if e.report else f"{e.source}\n  error     : {e.error}"
            print(text, file=sys.stderr)
    return EXIT_PARTIAL if any(e.report is None for e in entries) else EXIT_OK


def cmd_evaluate(args) -> int:
    model = cascade.load_model(args.model)
    rows = _manifest(args.manifest)
    if not rows:
        raise UsageError(f"manifest {args.manifest} lists no recordings")
    corpus = [(r["path"], r["grid"], r["type"]) for r in rows]
    table, entries = cascade.evaluate(model, corpus, jobs=args.jobs,
                                      baseline_only=args.baseline_only)
    print(table.format())
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(table.to_dict(), fh, indent=1, sort_keys=True)
    if args.reports:
        with open(args.reports, "w", encoding="utf-8") as fh:
            for e in entries:
                fh.write(e.to_json() + "\n")
    return EXIT_PARTIAL if table.failures else EXIT_OK


def cmd_plot(args) -> int:
    from . import plots
    if args.kind not in PLOT_KINDS:
        raise UsageError(f"invalid plot kind {args.kind!r}; choose from {', '.join(PLOT_KINDS)}")
    if not Path(args.input).exists():
        raise UsageError(f"input not found: {args.input}")
    config = resolve_config(args)
    if args.kind == "spectrogram":
        written = plots.plot_spectrogram(args.input, args.out)
    elif args.kind == "enf":
        written = plots.plot_enf(args.input, args.out, config)
    else:
        if not args.model:
            raise UsageError("plot poles needs --model")
        written = plots.plot_poles(cascade.load_model(args.model), args.input, args.out)
    for p in written:
        print(p)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="enfloc", description="Grid-of-origin identification from ENF and AR poles.",
        epilog=_config_epilog(), formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (-vv debug)")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, jobs=True):
        sp.add_argument("--config", help=f"flat JSON config file (default: ${CONFIG_ENV})")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override one config key (JSON-typed value)")
        sp.add_argument("--seed", type=int, default=None, help="random seed (default: 0)")
        if jobs:
            sp.add_argument("--jobs", type=int, default=1, help="worker processes (default: 1)")

    sp = sub.add_parser("synth", help="generate a labelled synthetic corpus")
    sp.add_argument("spec", nargs="?", help="corpus spec JSON (default: 12-grid panel, "
                    "2 files per grid and type, 600 s, 1000 Hz)")
    sp.add_argument("out_dir")
    sp.add_argument("--seed", type=int, default=None, help="master seed (overrides the spec)")
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("train", help="train a cascade model from a corpus manifest",
                        epilog=_config_epilog(),
                        formatter_class=argparse.RawDescriptionHelpFormatter)
    sp.add_argument("manifest")
    sp.add_argument("out_model")
    sp.add_argument("--features", choices=("table3", "all"), default=None,
                    help="feature selection (default: table3)")
    common(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("classify", help="classify one or more recordings")
    sp.add_argument("model")
    sp.add_argument("inputs", nargs="+")
    sp.add_argument("--declared-type", choices=("audio", "power"), default=None,
                    help="override the detected data type")
    sp.add_argument("--baseline-only", action="store_true", help="skip pole matching")
    sp.add_argument("--timing", action="store_true", help="include per-stage timing in reports")
    sp.add_argument("-o", "--output", help="write JSON-lines reports here instead of stdout")
    sp.add_argument("-q", "--quiet", action="store_true", help="no human summary on stderr")
    sp.add_argument("--jobs", type=int, default=1, help="worker processes (default: 1)")
    sp.set_defaults(func=cmd_classify)

    sp = sub.add_parser("evaluate", help="accuracy table on a labelled corpus")
    sp.add_argument("model")
    sp.add_argument("manifest")
    sp.add_argument("--baseline-only", action="store_true", help="skip pole matching")
    sp.add_argument("--json", help="also write the table as JSON")
    sp.add_argument("--reports", help="write per-file JSON-lines reports")
    sp.add_argument("--jobs", type=int, default=1, help="worker processes (default: 1)")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("plot", help="diagnostic plots with numeric-text dumps",
                        epilog=_config_epilog(),
                        formatter_class=argparse.RawDescriptionHelpFormatter)
    sp.add_argument("kind", help=f"one of: {', '.join(PLOT_KINDS)}")
    sp.add_argument("input", help="recording to analyse")
    sp.add_argument("out", help="output image path (.png)")
    sp.add_argument("--model", help="model archive (required for poles)")
    common(sp, jobs=False)
    sp.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=(logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 2)],
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError, FileNotFoundError) as exc:
        print(f"enfloc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except EnflocError as exc:
        print(f"enfloc: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
