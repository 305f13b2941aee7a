"""Command-line entry point: simulate, validate, stats, fit, eval, config.

Exit codes: 0 ok, 1 validation findings, 2 configuration error, 3 I/O or
unreadable input.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from . import __version__
from . import config as cfgmod
from . import corpus as corpusmod
from . import recognize
from .anatomy import AnatomySpec
from .records import RecordFormatError

EXIT_OK, EXIT_FINDINGS, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3

log = logging.getLogger("fluorosim")


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _seed(text: str) -> int:
    value = int(text, 0)
    if value < 0:
        raise argparse.ArgumentTypeError("seed must be non-negative")
    return value


def _emit(args, payload: dict, text: str) -> None:
    print(json.dumps(payload, sort_keys=True, indent=2) if args.json else text)


def cmd_simulate(args) -> int:
    config = cfgmod.load(args.config) if args.config else cfgmod.SimConfig()
    seed = args.seed
    if seed is None:
        seed = int(np.random.SeedSequence().entropy % (1 << 63))
        print(f"seed: {seed}", file=sys.stderr)
    anatomy = AnatomySpec.load(args.anatomy) if args.anatomy else None
    manifest = corpusmod.generate_corpus(config, seed, args.out, args.sequences, args.workers, anatomy)
    counts = manifest.frame_counts
    payload = {
        "out": str(args.out),
        "seed": seed,
        "sequences": len(counts),
        "frames": sum(counts),
        "config_hash": manifest.config_hash,
    }
    _emit(args, payload, f"wrote {len(counts)} sequences ({sum(counts)} frames) to {args.out} [seed {seed}]")
    return EXIT_OK


def cmd_validate(args) -> int:
    manifest, _ = corpusmod.read_manifest(args.corpus)
    seq_cfg = manifest.config.get("sequence", {}) if manifest.config else {}
    max_frames = seq_cfg.get("max_frames", 1000)
    max_tools = seq_cfg.get("max_tools_per_kind", 8)
    results, n_frames, n_bad = [], 0, 0
    for entry, records in corpusmod.iter_corpus(args.corpus):
        report = corpusmod.validate_sequence(records, max_frames, max_tools)
        n_frames += report.n_frames
        n_bad += len(report.violations)
        results.append((entry["file"], report))
    payload = {
        "sequences": len(results),
        "frames": n_frames,
        "violations": n_bad,
        "findings": [
            {"file": name, "frame_index": v.frame_index, "rule": v.rule, "message": v.message}
            for name, report in results
            for v in report.violations
        ],
    }
    lines = [f"{name}:{v}" for name, report in results for v in report.violations]
    lines.append(f"{len(results)} sequences, {n_frames} frames, {n_bad} violations")
    _emit(args, payload, "\n".join(lines))
    return EXIT_FINDINGS if n_bad else EXIT_OK


def cmd_stats(args) -> int:
    stats = corpusmod.corpus_stats(args.corpus, bin_width=args.bin_width)
    _emit(args, stats, corpusmod.format_stats(stats))
    return EXIT_OK


def cmd_fit(args) -> int:
    sequences = corpusmod.load_corpus(args.corpus)
    decoder = recognize.fit(sequences, sigma_deg=args.noise, seed=args.seed)
    decoder.save(args.out)
    payload = {"out": str(args.out), **decoder.meta, "noise_deg": args.noise}
    _emit(args, payload, f"fitted decoder on {decoder.meta['sequences']} sequences -> {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    decoder = recognize.PhaseDecoder.load(args.decoder)
    sequences = corpusmod.load_corpus(args.corpus)
    metrics = recognize.evaluate_corpus(decoder, sequences, sigma_deg=args.noise, seed=args.seed)
    _emit(args, metrics.to_dict(), metrics.to_text())
    return EXIT_OK


def cmd_config(args) -> int:
    print(cfgmod.dump_default_toml(), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fluorosim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="machine-readable report on stdout")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="generate a corpus")
    p.add_argument("--config", help="TOML config (defaults if omitted)")
    p.add_argument("--seed", type=_seed, help="master seed (drawn from entropy and printed if omitted)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--sequences", type=_positive_int, default=100)
    p.add_argument("--workers", type=_positive_int, default=1)
    p.add_argument("--anatomy", help="fixed anatomy JSON instead of a synthetic pelvis per sequence")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("validate", parents=[common], help="check sequence grammar")
    p.add_argument("--corpus", required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("stats", parents=[common], help="label frequencies and lengths")
    p.add_argument("--corpus", required=True)
    p.add_argument("--bin-width", type=_positive_int, default=50)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("fit", parents=[common], help="fit the phase decoder")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True, help="decoder JSON path")
    p.add_argument("--noise", type=float, default=0.0, help="feature noise in degrees")
    p.add_argument("--seed", type=_seed, default=0, help="feature-noise seed")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("eval", parents=[common], help="evaluate a fitted decoder")
    p.add_argument("--decoder", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--noise", type=float, default=0.0, help="feature noise in degrees")
    p.add_argument("--seed", type=_seed, default=1, help="feature-noise seed")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("config", help="print the default TOML config")
    p.set_defaults(func=cmd_config)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except cfgmod.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, RecordFormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
