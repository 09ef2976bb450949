"""``kbresize`` command-line interface.

Exit codes: 0 success, 1 usage error, 2 data/format or I/O error, 3 internal error.
Every failure prints exactly one ``kbresize: error: ...`` line to stderr.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from . import __version__, codec, harness, tree
from ._backend import BACKEND
from .codebook import atomic_write, read_codebook, write_codebook
from .errors import DecodeError, InvalidInputError, KBResizeError, StaleRankingError
from .geometry import exp_map
from .ranking import compute_ranking, read_ranking, resize, write_ranking

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _read_bytes(path):
    try:
        with open(path, "rb") as fh:
            return fh.read()
    except OSError as exc:
        raise DecodeError(f"cannot read {path}: {exc.strerror}") from None


def _load_codebook(path):
    try:
        return read_codebook(path)
    except OSError as exc:
        raise DecodeError(f"cannot read {path}: {exc.strerror}") from None


def _load_ranking(path):
    try:
        return read_ranking(path)
    except OSError as exc:
        raise DecodeError(f"cannot read {path}: {exc.strerror}") from None


def cmd_rank(args):
    kb = _load_codebook(args.input)
    t0 = time.perf_counter()
    ranking = compute_ranking(kb)
    elapsed = time.perf_counter() - t0
    write_ranking(args.output, ranking)
    print(f"K={kb.size} dim={kb.dim} root={ranking.root} time={elapsed:.3f}s backend={BACKEND}")


def cmd_resize(args):
    kb = _load_codebook(args.input)
    ranking = _load_ranking(args.ranking)
    if not 1 <= args.size <= kb.size:
        raise UsageError(f"--size must lie in [1, {kb.size}], got {args.size}")
    child = resize(kb, ranking, args.size)
    write_codebook(args.output, child)
    print(f"K={child.size} dim={child.dim} bits_per_index={codec.bits_per_index(child.size)}")


def cmd_quantize(args):
    kb = _load_codebook(args.kb)
    features = codec.FeatureGrid.from_bytes(_read_bytes(args.input))
    grid = codec.quantize(features, kb)
    atomic_write(args.output, grid.to_bytes())
    print(f"H={grid.height} W={grid.width} K={grid.kb_size}")


def cmd_dequantize(args):
    kb = _load_codebook(args.kb)
    grid = codec.IndexGrid.from_bytes(_read_bytes(args.input))
    atomic_write(args.output, codec.dequantize(grid, kb).to_bytes())
    print(f"H={grid.height} W={grid.width} dim={kb.dim}")


def cmd_pack(args):
    grid = codec.IndexGrid.from_bytes(_read_bytes(args.input))
    payload = codec.pack(grid)
    atomic_write(args.output, payload.to_bytes())
    print(f"bits_per_index={payload.bits_per_index} payload_bits={payload.bit_count} "
          f"bytes={len(payload.to_bytes())}")


def cmd_unpack(args):
    grid = codec.unpack(_read_bytes(args.input))
    atomic_write(args.output, grid.to_bytes())
    print(f"H={grid.height} W={grid.width} K={grid.kb_size}")


def cmd_tree_export(args):
    kb = _load_codebook(args.input)
    t = tree.build_mst(exp_map(kb.canonical_vectors))
    text = tree.to_dot(t) if args.format == "dot" else tree.to_edge_list(t)
    atomic_write(args.output, text)
    print(f"nodes={t.node_count} root={t.root} total_weight={t.total_weight:.17g}")


def cmd_kb_info(args):
    kb = _load_codebook(args.input)
    norms = np.linalg.norm(kb.vectors, axis=1)
    print(f"K={kb.size}")
    print(f"dim={kb.dim}")
    print(f"bits_per_index={codec.bits_per_index(kb.size)}")
    print(f"fingerprint={kb.fingerprint}")
    print(f"norm_min={norms.min():.17g}")
    print(f"norm_max={norms.max():.17g}")


def cmd_eval(args):
    if args.config is None:
        text = ""
    else:
        try:
            with open(args.config, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise UsageError(f"cannot read config {args.config}: {exc.strerror}") from None
    try:
        cfg = harness.parse_config(text)
    except harness.ConfigError as exc:
        raise UsageError(str(exc)) from None
    if args.threads is not None:
        if args.threads < 1:
            raise UsageError("--threads must be >= 1")
        cfg = harness.SweepConfig(**{**cfg.__dict__, "threads": args.threads})
    os.makedirs(args.out_dir, exist_ok=True)
    t0 = time.perf_counter()
    records = cfg.run()
    rows = harness.summarize(records)
    atomic_write(os.path.join(args.out_dir, cfg.records_file), harness.records_csv(records))
    atomic_write(os.path.join(args.out_dir, cfg.summary_file), harness.summary_csv(rows))
    for row in rows:
        if row.method == "zero-shot":
            print(f"K={row.kb_size} zero-shot/dedicated mean MSE ratio={row.ratio_to_dedicated:.6g}")
    for issue in harness.sanity_issues(records):
        print(f"kbresize: warning: {issue}", file=sys.stderr)
    print(f"records={len(records)} time={time.perf_counter() - t0:.1f}s")


def build_parser():
    p = _Parser(prog="kbresize", description="Zero-shot codebook resizing and VQ index transport.")
    p.add_argument("--version", action="version", version=f"kbresize {__version__} ({BACKEND} kernels)")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    s = sub.add_parser("rank", help="compute the importance ranking of a KBF codebook")
    s.add_argument("--input", required=True, help="parent codebook (KBF or .csv)")
    s.add_argument("--output", required=True, help="ranking file to write (KBR)")
    s.set_defaults(func=cmd_rank)

    s = sub.add_parser("resize", help="materialize a child codebook from a ranking")
    s.add_argument("--input", required=True, help="parent codebook (KBF or .csv)")
    s.add_argument("--ranking", required=True, help="KBR ranking of the parent")
    s.add_argument("--size", required=True, type=int, help="child size K, 1 <= K <= parent size")
    s.add_argument("--output", required=True, help="child codebook to write (KBF, or CSV by extension)")
    s.set_defaults(func=cmd_resize)

    s = sub.add_parser("quantize", help="map a KBX feature grid to a KBI index grid")
    s.add_argument("--input", required=True, help="feature grid (KBX)")
    s.add_argument("--kb", required=True, help="codebook (KBF or .csv)")
    s.add_argument("--output", required=True, help="index grid to write (KBI)")
    s.set_defaults(func=cmd_quantize)

    s = sub.add_parser("dequantize", help="look up a KBI index grid in a codebook")
    s.add_argument("--input", required=True, help="index grid (KBI)")
    s.add_argument("--kb", required=True, help="codebook (KBF or .csv)")
    s.add_argument("--output", required=True, help="feature grid to write (KBX)")
    s.set_defaults(func=cmd_dequantize)

    s = sub.add_parser("pack", help="bit-pack a KBI index grid into a KBP payload")
    s.add_argument("--input", required=True, help="index grid (KBI)")
    s.add_argument("--output", required=True, help="payload to write (KBP)")
    s.set_defaults(func=cmd_pack)

    s = sub.add_parser("unpack", help="decode a KBP payload into a KBI index grid")
    s.add_argument("--input", required=True, help="payload (KBP)")
    s.add_argument("--output", required=True, help="index grid to write (KBI)")
    s.set_defaults(func=cmd_unpack)

    s = sub.add_parser("tree-export", help="export the semantic tree of a codebook")
    s.add_argument("--input", required=True, help="codebook (KBF or .csv)")
    s.add_argument("--output", required=True, help="file to write")
    s.add_argument("--format", choices=("edges", "dot"), default="edges",
                   help="'edges': 'child parent weight' lines; 'dot': Graphviz (default: edges)")
    s.set_defaults(func=cmd_tree_export)

    s = sub.add_parser("kb-info", help="print size, dim, rate and fingerprint of a codebook")
    s.add_argument("--input", required=True, help="codebook (KBF or .csv)")
    s.set_defaults(func=cmd_kb_info)

    s = sub.add_parser("eval", help="run the rate-distortion sweep")
    s.add_argument("--config", help="INI config; omitted keys take their defaults")
    s.add_argument("--out-dir", required=True, help="directory for the records and summary CSVs")
    s.add_argument("--threads", type=int, help="run seeds on N worker threads (default: config value)")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("default-config", help="print the default eval config")
    s.set_defaults(func=lambda args: print(harness.default_config_text(), end=""))
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("kbresize: a command is required (see --help)")
        args.func(args)
    except UsageError as exc:
        print(f"kbresize: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DecodeError, StaleRankingError, InvalidInputError) as exc:
        print(f"kbresize: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except KBResizeError as exc:
        print(f"kbresize: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"kbresize: error: {exc.strerror or exc}: {exc.filename}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        print(f"kbresize: error: internal: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
