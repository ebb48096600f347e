"""Command line front end: ``table1``, ``rd-sweep``, ``encode``, ``decode``, ``si-only``.

Settings are resolved as defaults, then flags, then ``--config FILE`` (a JSON
object with :class:`PipelineConfig` keys), later sources winning.

Exit codes: 0 success, 2 configuration error, 3 I/O or format error,
4 decode finished with unverified planes.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import bitstream, metrics, motion, pipeline
from .pipeline import ConfigError, PipelineConfig
from .video_io import VideoSequence, split_gop, write_raw_sequence

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_UNVERIFIED = 0, 2, 3, 4

log = logging.getLogger("wzdvc")


def _csv_list(s):
    return [x.strip() for x in s.split(",") if x.strip()]


def _int_list(s):
    return [int(x) for x in _csv_list(s)]


def build_parser():
    ap = argparse.ArgumentParser(prog="wzdvc", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("pipeline")
    g.add_argument("--config", help="JSON file overriding these flags")
    g.add_argument("--input", help="raw video file (default: synthetic corpus)")
    g.add_argument("--width", type=int)
    g.add_argument("--height", type=int)
    g.add_argument("--layout", choices=["420", "luma"])
    g.add_argument("--corpus-seed", type=int)
    g.add_argument("--frames", type=int, help="WZ frames to process")
    g.add_argument("--block-size", type=int)
    g.add_argument("--metric")
    g.add_argument("--metric-params", type=json.loads, help="JSON object, e.g. '{\"vif\": {\"sigma_n2\": 0.1}}'")
    g.add_argument("--search-range", type=int)
    g.add_argument("--vif-search-range", type=int, help="opt-in narrower search for VIF")
    g.add_argument("--knob", type=int, help="band-plan quality knob")
    g.add_argument("--knobs", type=_int_list, help="comma list for rd-sweep")
    g.add_argument("--metrics", type=_csv_list, help="comma list for table1 / rd-sweep")
    g.add_argument("--mode", choices=pipeline.MODES)
    g.add_argument("--key-mode", choices=pipeline.KEY_MODES)
    g.add_argument("--turbo-seed", type=lambda s: int(s, 0))
    g.add_argument("--max-iter", type=int)
    g.add_argument("--use-context", action="store_const", const=True)
    g.add_argument("--entropy-model", choices=["bsc", "context"])
    g.add_argument("--workers", type=int)
    g.add_argument("--no-timing", dest="timing", action="store_const", const=False,
                   help="write NA instead of wall times (byte-stable CSV)")
    g.add_argument("--si-cache", help="directory caching SI frames")
    g.add_argument("--output-dir", "-o")

    sub.add_parser("table1", parents=[common], help="SI comparison table")
    sub.add_parser("rd-sweep", parents=[common], help="rate-distortion sweep")
    p = sub.add_parser("encode", parents=[common], help="write key frames and all parity")
    p.add_argument("--bitstream", help="output file (default OUTPUT_DIR/encoded.wzb)")
    p = sub.add_parser("decode", parents=[common], help="decode a parity store with feedback")
    p.add_argument("--bitstream", required=True, help="file written by encode")
    sub.add_parser("si-only", parents=[common], help="side information frames and their quality")
    return ap


_NOT_CONFIG = {"command", "verbose", "config", "bitstream"}


def resolve_config(args) -> PipelineConfig:
    d = {k: v for k, v in vars(args).items() if v is not None and k not in _NOT_CONFIG}
    if args.config:
        try:
            with open(args.config) as fh:
                from_file = json.load(fh)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{args.config}: {e}") from e
        if not isinstance(from_file, dict):
            raise ConfigError(f"{args.config}: expected a JSON object")
        d.update(from_file)
    return PipelineConfig.from_dict(d)


def cmd_table1(cfg, args):
    _, text = pipeline.run_table1(cfg)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_rd_sweep(cfg, args):
    cfg.write()
    points = pipeline.rd_sweep(cfg)
    flagged = any(p.flagged for pts in points.values() for p in pts)
    print(Path(cfg.output_dir) / "rd_sweep.csv")
    return EXIT_UNVERIFIED if flagged else EXIT_OK


def cmd_encode(cfg, args):
    out = cfg.write()
    seq = pipeline.load_sequence(cfg)
    bs = pipeline.encode_sequence(seq, cfg)
    path = Path(args.bitstream or out / "encoded.wzb")
    bitstream.write(path, bs)
    print(f"{path}: {len(bs.keys)} key frames, {len(bs.blocks)} parity blocks")
    return EXIT_OK


def cmd_decode(cfg, args):
    out = cfg.write()
    bs = bitstream.read(args.bitstream)
    meta = bs.meta
    # geometry and coding parameters are fixed by the encoder; SI settings are the decoder's
    enc_keys = ("width", "height", "frames", "knob", "mode", "key_mode", "turbo_seed", "block_size")
    cfg = dataclasses.replace(cfg, **{k: meta[k] for k in enc_keys if k in meta}).validate()
    res = pipeline.decode_bitstream(bs, cfg)
    write_raw_sequence(out / "decoded.yuv", res.decoded, cfg.layout)
    bitstream.write(out / "consumed.wzb", res.consumed)
    with open(out / "decode_report.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["frame", "rate_bits", "requests", "verified"])
        for f in res.frames:
            w.writerow([f.index, f.rate_bits, f.requests, int(f.verified)])
    print(f"decoded {len(res.frames)} WZ frames, {res.point.rate:.1f} bits/frame, "
          f"{'all verified' if res.all_verified else 'UNVERIFIED planes present'}")
    return EXIT_OK if res.all_verified else EXIT_UNVERIFIED


def cmd_si_only(cfg, args):
    out = cfg.write()
    seq = pipeline.load_sequence(cfg)
    si = pipeline.compute_si(seq, cfg)
    split = split_gop(seq)
    with open(out / "si_report.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["frame", "mse", "ssim", "vif", "psnr"])
        for k in sorted(si):
            r = motion.si_quality_report(si[k], seq.frames[k], cfg.params, k)
            p = metrics.psnr(r.mse)
            w.writerow([k, f"{r.mse:.6f}", f"{r.ssim:.6f}", f"{r.vif:.6f}", pipeline._fmt(p)])
    frames = [si[f.index] for f in split.wz_frames if f.index in si]
    write_raw_sequence(out / "si.yuv", VideoSequence.from_array(frames), cfg.layout)
    print(out / "si_report.csv")
    return EXIT_OK


COMMANDS = {"table1": cmd_table1, "rd-sweep": cmd_rd_sweep, "encode": cmd_encode,
            "decode": cmd_decode, "si-only": cmd_si_only}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
    except (ConfigError, TypeError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    try:
        return COMMANDS[args.command](cfg, args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, bitstream.FormatError) as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    except ValueError as e:
        # bad input files (wrong size, too few frames) surface as ValueError
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
