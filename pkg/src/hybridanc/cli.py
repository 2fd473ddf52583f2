"""Command-line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 I/O error,
3 numerical divergence.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .controllers import ALGORITHMS, HybridConfig, build_sfanc_bank, run_algorithm, write_cluster_log
from .dsp import MonoSignal, bandpass_noise, fir_convolve, read_taps, write_taps
from .errors import ConfigurationError, DivergenceError, FormatError, InputError
from .gfanc import (
    FULL_BAND,
    TRAIN_DURATION_S,
    TRAIN_MU0,
    PredictorConfig,
    decompose,
    equal_bands,
    load_bank,
    save_bank,
    train_broadband_filter,
)
from .harness import (
    DEFAULT_JITTER,
    NoiseSpec,
    Setup,
    aircraft_noise,
    band_noise,
    compute_metrics,
    experiment_clustering_ablation,
    experiment_comparison,
    make_noise,
    vehicle_noise,
)
from .paths import load_paths, save_paths, synth_paths

log = logging.getLogger("hybridanc")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_DIVERGED = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return value


def _positive_float(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return value


def _nonneg_float(text: str) -> float:
    value = float(text)
    if not value >= 0:
        raise argparse.ArgumentTypeError(f"must be non-negative, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    g = common.add_argument_group("global options")
    g.add_argument("--seed", type=int, default=0, help="seed for noise and prediction jitter (default 0)")
    g.add_argument("--path-seed", type=int, default=0, help="seed for synthetic acoustic paths (default 0)")
    g.add_argument("--train-seed", type=int, default=1, help="seed for filter pre-training noise (default 1)")
    g.add_argument("--paths", metavar="DIR", help="load primary.txt / secondary.txt [/ secondary_estimate.txt] from DIR")
    g.add_argument("--out", default="run", help="output directory (default ./run)")
    g.add_argument("--sample-rate", type=_positive_int, default=16000)
    g.add_argument("--filter-len", type=_positive_int, default=1024)
    g.add_argument("--frame-len", type=_positive_int, default=16000)
    g.add_argument("--tau", type=_nonneg_float, default=0.6)
    g.add_argument("--mu0", type=_positive_float, default=0.002)
    g.add_argument("--sub-filters", type=_positive_int, default=8)
    g.add_argument("--train-duration", type=_positive_float, default=TRAIN_DURATION_S,
                   help="seconds of noise used to pre-train filters (default %(default)s)")
    g.add_argument("--train-mu0", type=_positive_float, default=TRAIN_MU0,
                   help="step size used to pre-train filters (default %(default)s)")

    parser = _Parser(prog="hybridanc", description="Hybrid GFANC-FxNLMS active noise control simulator.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("train-broadband", parents=[common], help="pre-train the broadband control filter")

    p = sub.add_parser("decompose", parents=[common], help="split a broadband filter into sub-filters")
    p.add_argument("--broadband", required=True, metavar="FILE")

    p = sub.add_parser("simulate", parents=[common], help="run one control algorithm")
    p.add_argument("--algo", choices=ALGORITHMS, default="gfanc-fxnlms")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--noise", default="band:100-1200",
                     help="vehicle | aircraft | band:LOW-HIGH (default band:100-1200)")
    src.add_argument("--wav", metavar="FILE", help="16-bit mono WAV reference noise")
    p.add_argument("--duration", type=_positive_float, default=10.0, help="seconds of synthetic noise")
    p.add_argument("--no-clustering", action="store_true")
    p.add_argument("--replay", metavar="FILE", help="CSV of weight vectors, one per frame")
    p.add_argument("--jitter", type=_nonneg_float, default=0.0, help="uniform prediction jitter amplitude")
    p.add_argument("--soft", action="store_true", help="soft band-energy weights")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--latency", type=int, default=0, help="extra decision latency in samples")
    p.add_argument("--bank", metavar="DIR", help="load a sub-filter bank written by 'decompose'")

    p = sub.add_parser("compare", parents=[common], help="five-algorithm comparison")
    p.add_argument("--duration", type=_positive_float, default=20.0)

    p = sub.add_parser("ablation", parents=[common], help="clustering on/off ablation")
    p.add_argument("--duration", type=_positive_float, default=10.0)
    p.add_argument("--jitter", type=_nonneg_float, default=DEFAULT_JITTER)
    return parser


# --------------------------------------------------------------------------

def _config(args) -> HybridConfig:
    predictor = PredictorConfig(
        band_edges=tuple(equal_bands(args.sub_filters, FULL_BAND)),
        frame_len=args.frame_len,
        soft=getattr(args, "soft", False),
        threshold=getattr(args, "threshold", 0.5),
        kind="replay" if getattr(args, "replay", None) else "band-energy",
        replay_path=getattr(args, "replay", None),
        jitter=getattr(args, "jitter", 0.0) if args.command == "simulate" else 0.0,
        jitter_seed=args.seed,
    )
    return HybridConfig(
        frame_len=args.frame_len, m=args.sub_filters, filter_len=args.filter_len,
        sample_rate=args.sample_rate, tau=args.tau, mu0=args.mu0,
        clustering_enabled=not getattr(args, "no_clustering", False),
        predictor=predictor, latency=getattr(args, "latency", 0),
    )


def _paths(args):
    if args.paths:
        d = Path(args.paths)
        estimate = d / "secondary_estimate.txt"
        return load_paths(d / "primary.txt", d / "secondary.txt", estimate if estimate.exists() else None)
    return synth_paths(args.path_seed, sample_rate=args.sample_rate)


def _train(args, paths):
    return train_broadband_filter(paths, args.train_seed, args.train_duration, args.train_mu0,
                                  FULL_BAND, args.filter_len, args.sample_rate)


def _print_config(args) -> None:
    for key, value in sorted(vars(args).items()):
        print(f"{key.replace('_', '-')}={value}")


def _write_manifest(path: Path, args, extra=None) -> None:
    # the output directory is left out so identical runs give identical files
    lines = [f"{k.replace('_', '-')}={v}" for k, v in sorted(vars(args).items()) if k != "out"]
    lines += [f"{k}={v}" for k, v in (extra or {}).items()]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _out_dir(args) -> Path:
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc.strerror}") from exc
    return out


def _noise_spec(args) -> NoiseSpec:
    if args.wav:
        return NoiseSpec(kind="wav-file", wav_path=args.wav, sample_rate=args.sample_rate, label="wav")
    text = args.noise
    if text == "vehicle":
        return vehicle_noise(args.duration, args.seed, args.sample_rate)
    if text == "aircraft":
        return aircraft_noise(args.duration, args.seed, args.sample_rate)
    if text.startswith("band:"):
        try:
            low, high = (float(v) for v in text[5:].split("-"))
        except ValueError:
            raise ConfigurationError(f"bad band noise {text!r}; expected band:LOW-HIGH") from None
        return band_noise((low, high), args.duration, args.seed, args.sample_rate)
    raise ConfigurationError(f"unknown noise {text!r}; expected vehicle, aircraft or band:LOW-HIGH")


def _nr_db(paths, filt, band, seed, sample_rate, seconds=5.0) -> float:
    x = bandpass_noise(band, int(seconds * sample_rate), sample_rate, np.random.default_rng(seed))
    d = fir_convolve(paths.primary, MonoSignal(x, sample_rate)).samples
    y = fir_convolve(filt, MonoSignal(x, sample_rate))
    e = d - fir_convolve(paths.secondary, y).samples
    return float(10 * np.log10(np.sum(d**2) / np.sum(e**2)))


def cmd_train_broadband(args) -> int:
    out = _out_dir(args)
    paths = _paths(args)
    w = _train(args, paths)
    nr = _nr_db(paths, w, FULL_BAND, args.seed, args.sample_rate)
    write_taps(out / "broadband.txt", w)
    save_paths(out, paths)
    _write_manifest(out / "manifest.txt", args, {"noise_reduction_db": repr(nr)})
    print(f"noise_reduction_db={nr:.2f}")
    return EXIT_OK


def cmd_decompose(args) -> int:
    out = _out_dir(args)
    broadband = read_taps(args.broadband)
    if len(broadband) != args.filter_len:
        log.warning("broadband filter has %d taps (--filter-len %d ignored)", len(broadband), args.filter_len)
    bank = decompose(broadband, args.sub_filters, FULL_BAND, args.sample_rate)
    bank = replace(bank, source=str(args.broadband))
    save_bank(out, bank)
    return EXIT_OK


def _setup_for(args, cfg: HybridConfig, algo: str) -> Setup:
    paths = _paths(args)
    bank, sfanc, broadband = None, [], None
    if algo in ("gfanc", "gfanc-fxnlms"):
        if args.bank:
            bank = load_bank(args.bank)
        else:
            broadband = _train(args, paths)
            bank = decompose(broadband, cfg.m, FULL_BAND, cfg.sample_rate)
    if algo in ("sfanc", "sfanc-fxnlms"):
        sfanc = build_sfanc_bank(paths, args.train_seed, args.train_duration, args.train_mu0,
                                 args.filter_len, args.sample_rate)
    return Setup(paths, bank, sfanc, args.path_seed, args.train_seed, broadband)


def cmd_simulate(args) -> int:
    cfg = _config(args)
    out = _out_dir(args)
    spec = _noise_spec(args)
    noise = make_noise(spec)
    setup = _setup_for(args, cfg, args.algo)
    trace = run_algorithm(args.algo, noise, setup.paths, cfg, setup.bank, setup.sfanc_bank)
    report = compute_metrics(trace)
    trace.write_csv(out / f"trace_{args.algo}.csv")
    trace.write_events_csv(out / f"events_{args.algo}.csv")
    report.write_csv(out / f"metrics_{args.algo}.csv", args.algo)
    write_cluster_log(out / f"clusters_{args.algo}.csv", trace.cluster_log)
    _write_manifest(out / "manifest.txt", args, {"noise_spec": spec})
    print(f"reinit_count={trace.reinit_count}")
    print(f"steady_state_nr_db={report.steady_state_nr_db:.2f}")
    return EXIT_OK


def _full_setup(args, cfg) -> Setup:
    paths = _paths(args)
    broadband = _train(args, paths)
    bank = decompose(broadband, cfg.m, FULL_BAND, cfg.sample_rate)
    sfanc = build_sfanc_bank(paths, args.train_seed, args.train_duration, args.train_mu0,
                             args.filter_len, args.sample_rate)
    return Setup(paths, bank, sfanc, args.path_seed, args.train_seed, broadband)


def cmd_compare(args) -> int:
    cfg = _config(args)
    out = _out_dir(args)
    setup = _full_setup(args, cfg)
    results = experiment_comparison(args.seed, setup, cfg, args.duration, out_dir=out)
    _write_manifest(out / "manifest.txt", args)
    for name, reports in results.items():
        for algo, rep in reports.items():
            print(f"{name} {algo} steady_state_nr_db={rep.steady_state_nr_db:.2f} "
                  f"time_to_threshold_s={rep.time_to_threshold_s} reinit_count={rep.reinit_count}")
    return EXIT_OK


def cmd_ablation(args) -> int:
    cfg = _config(args)
    out = _out_dir(args)
    paths = _paths(args)
    broadband = _train(args, paths)
    bank = decompose(broadband, cfg.m, FULL_BAND, cfg.sample_rate)
    setup = Setup(paths, bank, [], args.path_seed, args.train_seed, broadband)
    results = experiment_clustering_ablation(args.seed, setup, cfg, args.duration, args.jitter, out_dir=out)
    _write_manifest(out / "manifest.txt", args)
    for name, pair in results.items():
        for label, rep in pair.items():
            print(f"{name} clustering_{label} reinit_count={rep.reinit_count} "
                  f"steady_state_mse={rep.steady_state_mse:.6g}")
    return EXIT_OK


COMMANDS = {
    "train-broadband": cmd_train_broadband,
    "decompose": cmd_decompose,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "ablation": cmd_ablation,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    _print_config(args)
    try:
        return COMMANDS[args.command](args)
    except DivergenceError as exc:
        print(f"error: numerical divergence at sample {exc.sample_index}: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (ConfigurationError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
