"""Command line: ``dccrnplus {enhance,train-toy,bench,verify}``.

Exit codes: 0 success, 1 usage error, 2 data error (missing/invalid audio,
manifest or checkpoint), 3 numerical failure.  Log verbosity comes from the
``DCCRNPLUS_LOG`` environment variable (``DEBUG``, ``INFO``, ``WARNING``...).
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import dsp
from .checkpoint import CheckpointError, load_checkpoint
from .model import PRESETS, DCCRNPlus
from .trainer import DataError, NumericalError

log = logging.getLogger("dccrnplus")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _model(args) -> DCCRNPlus:
    if args.checkpoint:
        model, _, _ = load_checkpoint(args.checkpoint)
        return model.eval()
    log.warning("no checkpoint given; using an untrained %s model (seed %d)", args.preset, args.seed)
    return DCCRNPlus(PRESETS[args.preset](), seed=args.seed).eval()


def _emit(lines, stream=None) -> None:
    out = stream or sys.stdout
    for line in lines:
        print(line, file=out)


# ------------------------------------------------------------------ enhance
def cmd_enhance(args) -> int:
    from .streaming import StreamingEnhancer, enhance_offline, latency_report
    from .wavio import wav_read, wav_write

    if not Path(args.input).is_file():
        raise DataError(f"input file not found: {args.input}")
    wave = wav_read(args.input)
    if wave.sample_rate != dsp.SAMPLE_RATE:
        raise DataError(f"{args.input}: sample rate {wave.sample_rate} Hz, expected {dsp.SAMPLE_RATE}")
    if len(wave.samples) < dsp.FRAME_LEN:
        raise DataError(f"{args.input}: shorter than one {dsp.FRAME_LEN}-sample frame")
    model = _model(args)
    x = wave.samples.astype(np.float64)
    postproc = not args.no_postproc
    if args.stream:
        eng = StreamingEnhancer(model, postproc=postproc)
        parts = [eng.push(x[i:i + args.chunk]) for i in range(0, len(x), args.chunk)]
        parts.append(eng.finish())
        y = np.concatenate(parts)
        lat = latency_report(model)
        _emit([f"mode=stream frames={eng.n_frames} latency_ms={lat['algorithmic_latency_ms']:.1f} "
               f"buffering_ms={lat['buffering_ms']:.1f} processing_budget_ms={lat['processing_budget_ms']:.1f}"])
    else:
        y = enhance_offline(model, x, postproc)
        _emit([f"mode=offline frames={dsp.Framing().n_frames(len(x))}"])
    if not np.all(np.isfinite(y)):
        raise NumericalError("enhanced signal contains non-finite samples")
    # the tail that does not fill a whole frame is passed through as silence
    out = np.zeros(len(x))
    out[:len(y)] = y
    wav_write(args.output, out.astype(np.float32), dsp.SAMPLE_RATE)
    return EXIT_OK


# ---------------------------------------------------------------- train-toy
def cmd_train_toy(args) -> int:
    from .experiments import synthetic_pools
    from .trainer import TrainConfig, Trainer, dynamic_mix, load_manifest, make_batch

    if args.manifest:
        pools = load_manifest(args.manifest)
        speech, noise, rirs = pools["speech"], pools["noise"], pools["rir"]
        if not speech or not noise:
            raise DataError(f"{args.manifest}: needs at least one speech and one noise file")
    else:
        speech, noise, rirs = synthetic_pools(args.seed, n_speech=12, n_noise=6, n_rir=4,
                                              seconds=max(args.crop_seconds, 1.0))
    cfg = TrainConfig(steps=args.steps, batch_size=args.batch_size, crop_seconds=args.crop_seconds,
                      seed=args.seed, val_every=args.val_every, lr=args.lr)
    n = int(cfg.crop_seconds * dsp.SAMPLE_RATE)
    short = min(len(s) for s in speech)
    if short < n:
        log.info("cropping to %d samples (shortest speech file)", short)
        n = short
    if n < dsp.FRAME_LEN:
        raise DataError("speech files are shorter than one frame")

    def batch_fn(step):
        return make_batch([dynamic_mix(speech, noise, rirs, cfg, (cfg.seed, step, i), n) for i in range(cfg.batch_size)])

    val = [batch_fn(10**6 + i) for i in range(args.val_batches)]
    model = DCCRNPlus(PRESETS[args.preset](), seed=args.seed)
    trainer = Trainer(model, cfg, batch_fn, val)
    log_file = open(args.log, "w") if args.log else None
    try:
        def report(m):
            keys = ["step", "loss", "si_snr", "snr_mse", "lr", "grad_norm"] + (["val_loss"] if "val_loss" in m else [])
            line = " ".join(f"{k}={m[k]:.6g}" if isinstance(m[k], float) else f"{k}={m[k]}" for k in keys)
            if log_file:
                print(line, file=log_file, flush=True)
            if m["step"] % args.print_every == 0 or m["step"] == cfg.steps:
                print(line)

        trainer.fit(callback=report)
    finally:
        if log_file:
            log_file.close()
    if args.out:
        trainer.save(args.out)
        print(f"checkpoint={args.out}")
    return EXIT_OK


# -------------------------------------------------------------------- bench
def cmd_bench(args) -> int:
    from .bench import run_bench

    model = _model(args)
    rep = run_bench(model, seconds=args.seconds, runs=args.runs, mode=args.mode,
                    postproc=not args.no_postproc, seed=args.seed)
    _emit([f"params={model.num_parameters()}"] + rep.lines())
    return EXIT_OK


# ------------------------------------------------------------------- verify
def cmd_verify(args) -> int:
    from .verify import run_checks

    results = run_checks(args.only or None)
    if args.only and not results:
        raise UsageError(f"no check named {args.only}")
    _emit(r.line() for r in results)
    failed = sum(not r.passed for r in results)
    print(f"checks={len(results)} failed={failed}")
    return EXIT_OK if failed == 0 else EXIT_NUMERIC


# --------------------------------------------------------------------- main
def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dccrnplus", description="Streaming complex-domain speech enhancement.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def model_args(sp, preset):
        sp.add_argument("--checkpoint", help="model checkpoint (.ckpt); untrained preset if omitted")
        sp.add_argument("--preset", choices=sorted(PRESETS), default=preset)
        sp.add_argument("--seed", type=int, default=0)

    e = sub.add_parser("enhance", help="enhance a 16 kHz mono WAV file")
    e.add_argument("input")
    e.add_argument("output")
    model_args(e, "toy")
    e.add_argument("--stream", action="store_true", help="run the frame-by-frame streaming engine")
    e.add_argument("--chunk", type=int, default=dsp.HOP, help="samples per push in --stream mode")
    e.add_argument("--no-postproc", action="store_true", help="skip the MMSE-LSA gain stage")
    e.set_defaults(fn=cmd_enhance)

    t = sub.add_parser("train-toy", help="desk-scale training run")
    t.add_argument("--manifest", help="'<speech|noise|rir> <wav>' lines; synthetic data if omitted")
    t.add_argument("--preset", choices=sorted(PRESETS), default="toy")
    t.add_argument("--steps", type=int, default=200)
    t.add_argument("--batch-size", type=int, default=4)
    t.add_argument("--crop-seconds", type=float, default=1.0)
    t.add_argument("--val-every", type=int, default=100)
    t.add_argument("--val-batches", type=int, default=1)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", help="checkpoint path to write at the end")
    t.add_argument("--log", help="metrics log (key=value lines, one per step)")
    t.add_argument("--print-every", type=int, default=50)
    t.set_defaults(fn=cmd_train_toy)

    b = sub.add_parser("bench", help="single-threaded real-time-factor benchmark")
    model_args(b, "full")
    b.add_argument("--seconds", type=float, default=10.0)
    b.add_argument("--runs", type=int, default=5)
    b.add_argument("--mode", choices=("stream", "offline"), default="stream")
    b.add_argument("--no-postproc", action="store_true")
    b.set_defaults(fn=cmd_bench)

    v = sub.add_parser("verify", help="run the built-in oracle and property checks")
    v.add_argument("--only", action="append", help="run just this check (repeatable)")
    v.set_defaults(fn=cmd_verify)
    return p


def _validate(args) -> None:
    for name in ("steps", "runs", "chunk", "batch_size", "val_every", "val_batches", "print_every"):
        v = getattr(args, name, None)
        if v is not None and v < (0 if name == "steps" else 1):
            raise UsageError(f"--{name.replace('_', '-')} must be positive")
    for name in ("seconds", "crop_seconds", "lr"):
        v = getattr(args, name, None)
        if v is not None and not v > 0:
            raise UsageError(f"--{name.replace('_', '-')} must be positive")


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("DCCRNPLUS_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _validate(args)
        return args.fn(args)
    except UsageError as exc:
        print(f"dccrnplus: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, CheckpointError, dsp.SilentSignalError) as exc:
        print(f"dccrnplus: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, FloatingPointError) as exc:
        print(f"dccrnplus: numerical failure: {exc}", file=sys.stderr)
        for k, v in getattr(exc, "diagnostics", {}).items():
            print(f"  {k}={v:.4g}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:  # WavError and friends derive from ValueError
        print(f"dccrnplus: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
