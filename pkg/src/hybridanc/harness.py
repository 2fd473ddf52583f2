"""Noise corpus, metrics and the scripted experiments.

Two experiments are provided:

* :func:`experiment_clustering_ablation` runs the hybrid controller with and
  without the clustering gate, driven by a jittered predictor.
* :func:`experiment_comparison` runs all five controllers on the same noise.

Measured recordings are not available, so "vehicle" and "aircraft" noises are
synthetic stand-ins (band noise plus engine-order tones). Manifests label
them as such.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .controllers import (
    ALGORITHMS,
    HybridConfig,
    RunTrace,
    build_sfanc_bank,
    run_algorithm,
    run_hybrid,
    write_cluster_log,
)
from .dsp import DEFAULT_SAMPLE_RATE, FirFilter, MonoSignal, bandpass_noise, read_wav
from .errors import ConfigurationError
from .gfanc import FULL_BAND, SubFilterBank, decompose, train_broadband_filter
from .paths import PathSet, synth_paths

log = logging.getLogger(__name__)

DEFAULT_WINDOW_S = 1.0
DEFAULT_THRESHOLD_DB = 10.0
EARLY_STAGE_S = 2.0
ENERGY_FLOOR = 1e-20
DEFAULT_JITTER = 0.05


@dataclass(frozen=True)
class NoiseSpec:
    """Recipe for a test noise.

    ``tones`` holds ``(frequency_hz, gain_db)`` pairs, the gain being the
    tone RMS relative to the band-noise RMS.
    """

    kind: str = "bandpass-white"
    band: Optional[tuple] = (100.0, 1200.0)
    tones: tuple = ()
    duration_s: float = 10.0
    seed: int = 0
    level: float = 1.0
    wav_path: Optional[str] = None
    sample_rate: int = DEFAULT_SAMPLE_RATE
    label: str = ""

    def __post_init__(self):
        if self.kind not in ("bandpass-white", "tone-mix", "wav-file"):
            raise ConfigurationError(f"unknown noise kind {self.kind!r}")
        if self.kind == "wav-file":
            if not self.wav_path:
                raise ConfigurationError("wav-file noise needs wav_path")
            return
        if not self.duration_s > 0:
            raise ConfigurationError(f"duration must be positive, got {self.duration_s}")
        if self.level < 0:
            raise ConfigurationError("level must be non-negative")
        if self.band is not None:
            low, high = self.band
            if not 0 < low < high < self.sample_rate / 2:
                raise ConfigurationError(f"band {self.band} must lie inside (0, {self.sample_rate / 2}) Hz")
        elif self.kind == "bandpass-white":
            raise ConfigurationError("bandpass-white noise needs a band")
        for freq, _ in self.tones:
            if not 0 < freq < self.sample_rate / 2:
                raise ConfigurationError(f"tone at {freq} Hz outside (0, {self.sample_rate / 2})")


def vehicle_noise(duration_s: float, seed: int, sample_rate: int = DEFAULT_SAMPLE_RATE) -> NoiseSpec:
    """Stand-in for a vehicle cabin recording: 40-400 Hz noise with 80/160 Hz orders at +6 dB."""
    return NoiseSpec("tone-mix", (40.0, 400.0), ((80.0, 6.0), (160.0, 6.0)), duration_s, seed,
                     sample_rate=sample_rate, label="vehicle-standin")


def aircraft_noise(duration_s: float, seed: int, sample_rate: int = DEFAULT_SAMPLE_RATE) -> NoiseSpec:
    """Stand-in for an aircraft cabin recording: 150-900 Hz noise with 300/600 Hz tones at 0 dB."""
    return NoiseSpec("tone-mix", (150.0, 900.0), ((300.0, 0.0), (600.0, 0.0)),
                     duration_s, seed, sample_rate=sample_rate, label="aircraft-standin")


def band_noise(band, duration_s: float, seed: int, sample_rate: int = DEFAULT_SAMPLE_RATE) -> NoiseSpec:
    return NoiseSpec("bandpass-white", tuple(band), (), duration_s, seed, sample_rate=sample_rate,
                     label=f"band-{band[0]:g}-{band[1]:g}")


def make_noise(spec: NoiseSpec) -> MonoSignal:
    """Render ``spec`` to a signal with RMS ``spec.level`` (WAV files are taken as-is)."""
    if spec.kind == "wav-file":
        return read_wav(spec.wav_path)
    fs = spec.sample_rate
    n = int(round(spec.duration_s * fs))
    if spec.level == 0:
        return MonoSignal(np.zeros(n), fs)
    rng = np.random.default_rng(spec.seed)
    x = bandpass_noise(spec.band, n, fs, rng) if spec.band is not None else np.zeros(n)
    t = np.arange(n) / fs
    for freq, gain_db in spec.tones:
        amplitude = np.sqrt(2.0) * 10 ** (gain_db / 20)
        x = x + amplitude * np.sin(2 * np.pi * freq * t + rng.uniform(0, 2 * np.pi))
    rms = np.sqrt(np.mean(x**2))
    return MonoSignal(x * (spec.level / rms), fs)


# --------------------------------------------------------------------------
# Metrics
# --------------------------------------------------------------------------

@dataclass
class MetricsReport:
    nr_curve: np.ndarray = field(repr=False)
    steady_state_mse: float
    time_to_threshold_s: Optional[float]
    reinit_count: int
    early_mean_nr_db: float = float("nan")
    steady_state_nr_db: float = float("nan")

    def row(self) -> dict:
        return {
            "steady_state_mse": repr(self.steady_state_mse),
            "steady_state_nr_db": repr(self.steady_state_nr_db),
            "time_to_threshold_s": "" if self.time_to_threshold_s is None else repr(self.time_to_threshold_s),
            "early_mean_nr_db": repr(self.early_mean_nr_db),
            "reinit_count": str(self.reinit_count),
        }

    def write_csv(self, path, algo: str = "") -> None:
        row = {"algo": algo, **self.row()}
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=list(row), lineterminator="\n")
            w.writeheader()
            w.writerow(row)


def windowed_nr(desired: np.ndarray, error: np.ndarray, window: int) -> np.ndarray:
    """``10 log10(sum d^2 / sum e^2)`` over the trailing ``window`` samples.

    The first ``window - 1`` values use the partially filled window.
    """
    cd = np.concatenate(([0.0], np.cumsum(desired**2)))
    ce = np.concatenate(([0.0], np.cumsum(error**2)))
    hi = np.arange(1, desired.shape[0] + 1)
    lo = np.maximum(hi - window, 0)
    ed = np.maximum(cd[hi] - cd[lo], ENERGY_FLOOR)
    ee = np.maximum(ce[hi] - ce[lo], ENERGY_FLOOR)
    return 10 * np.log10(ed / ee)


def compute_metrics(trace: RunTrace, window_s: float = DEFAULT_WINDOW_S,
                    threshold_db: float = DEFAULT_THRESHOLD_DB) -> MetricsReport:
    """Windowed noise reduction, steady-state error and response time.

    ``time_to_threshold_s`` is the end time of the first full window whose NR
    reaches ``threshold_db``, or None if it never does.
    """
    fs = trace.error.sample_rate
    d, e = trace.desired.samples, trace.error.samples
    n = d.shape[0]
    window = max(1, int(round(window_s * fs)))
    nr = windowed_nr(d, e, window)

    tail = slice(max(0, n - window), n)
    ss_mse = float(np.mean(e[tail] ** 2))
    ss_nr = float(nr[-1])

    reached = np.flatnonzero(nr[window - 1:] >= threshold_db) if n >= window else np.array([])
    t_hit = float((reached[0] + window) / fs) if reached.size else None

    early = nr[: min(n, int(round(EARLY_STAGE_S * fs)))]
    return MetricsReport(nr, ss_mse, t_hit, trace.reinit_count, float(np.mean(early)), ss_nr)


# --------------------------------------------------------------------------
# Experiments
# --------------------------------------------------------------------------

@dataclass
class Setup:
    """Everything pre-trained: paths, GFANC sub-filter bank, SFANC filters."""

    paths: PathSet
    bank: SubFilterBank
    sfanc_bank: list
    path_seed: int
    train_seed: int
    broadband: Optional[FirFilter] = None


def build_setup(cfg: HybridConfig = HybridConfig(), path_seed: int = 0, train_seed: int = 1,
                train_duration_s: Optional[float] = None, train_mu0: Optional[float] = None,
                with_sfanc: bool = True) -> Setup:
    kwargs = {}
    if train_duration_s is not None:
        kwargs["duration_s"] = train_duration_s
    if train_mu0 is not None:
        kwargs["mu0"] = train_mu0
    paths = synth_paths(path_seed)
    broadband = train_broadband_filter(paths, train_seed, band=FULL_BAND, length=cfg.filter_len,
                                       sample_rate=cfg.sample_rate, **kwargs)
    bank = decompose(broadband, cfg.m, FULL_BAND, cfg.sample_rate)
    sfanc = build_sfanc_bank(paths, train_seed, length=cfg.filter_len, sample_rate=cfg.sample_rate,
                             **kwargs) if with_sfanc else []
    return Setup(paths, bank, sfanc, path_seed, train_seed, broadband)


def _manifest(path: Path, entries: dict) -> None:
    lines = [f"{k}={v}" for k, v in entries.items()]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _config_entries(cfg: HybridConfig) -> dict:
    flat = {}
    for k, v in asdict(cfg).items():
        if k == "predictor":
            for pk, pv in v.items():
                flat[f"predictor.{pk}"] = pv
        else:
            flat[k] = v
    return flat


def _export(out: Path, algo: str, trace: RunTrace, report: MetricsReport) -> None:
    trace.write_csv(out / f"trace_{algo}.csv")
    trace.write_events_csv(out / f"events_{algo}.csv")
    report.write_csv(out / f"metrics_{algo}.csv", algo)


def comparison_noises(seed: int, duration_s: float, sample_rate: int = DEFAULT_SAMPLE_RATE) -> dict:
    return {
        "vehicle": vehicle_noise(duration_s, seed, sample_rate),
        "band-100-1200": band_noise((100.0, 1200.0), duration_s, seed, sample_rate),
    }


def ablation_noises(seed: int, duration_s: float, sample_rate: int = DEFAULT_SAMPLE_RATE) -> dict:
    return {
        "aircraft": aircraft_noise(duration_s, seed, sample_rate),
        "band-20-2000": band_noise(FULL_BAND, duration_s, seed, sample_rate),
    }


def experiment_clustering_ablation(
    seed: int,
    setup: Setup,
    cfg: HybridConfig = HybridConfig(),
    duration_s: float = 10.0,
    jitter: float = DEFAULT_JITTER,
    out_dir=None,
    noises: Optional[dict] = None,
) -> dict:
    """Hybrid controller with the clustering gate on and off.

    Both runs of a pair see the same noise and the same jitter stream.
    Returns ``{noise_name: {"on": MetricsReport, "off": MetricsReport}}``.
    """
    noises = noises if noises is not None else ablation_noises(seed, duration_s, cfg.sample_rate)
    predictor = replace(cfg.predictor, jitter=jitter, jitter_seed=seed)
    results = {}
    for name, spec in noises.items():
        noise = make_noise(spec)
        pair = {}
        for label, enabled in (("on", True), ("off", False)):
            run_cfg = replace(cfg, predictor=predictor, clustering_enabled=enabled, adaptation_enabled=True)
            trace = run_hybrid(noise, setup.paths, setup.bank, run_cfg)
            report = compute_metrics(trace)
            pair[label] = report
            if out_dir is not None:
                out = Path(out_dir) / name
                out.mkdir(parents=True, exist_ok=True)
                _export(out, f"clustering_{label}", trace, report)
                write_cluster_log(out / f"clusters_clustering_{label}.csv", trace.cluster_log)
        if out_dir is not None:
            _manifest(Path(out_dir) / name / "manifest.txt", {
                "experiment": "clustering-ablation", "noise": name, "noise_spec": spec,
                "seed": seed, "jitter": jitter, "path_seed": setup.path_seed,
                "train_seed": setup.train_seed, "duration_s": duration_s,
                **_config_entries(cfg),
            })
        results[name] = pair
    return results


def experiment_comparison(
    seed: int,
    setup: Setup,
    cfg: HybridConfig = HybridConfig(),
    duration_s: float = 20.0,
    out_dir=None,
    noises: Optional[dict] = None,
    algorithms=ALGORITHMS,
) -> dict:
    """All controllers on the comparison noises.

    Returns ``{noise_name: {algo: MetricsReport}}``.
    """
    noises = noises if noises is not None else comparison_noises(seed, duration_s, cfg.sample_rate)
    results = {}
    for name, spec in noises.items():
        noise = make_noise(spec)
        reports = {}
        for algo in algorithms:
            trace = run_algorithm(algo, noise, setup.paths, cfg, setup.bank, setup.sfanc_bank)
            reports[algo] = compute_metrics(trace)
            if out_dir is not None:
                out = Path(out_dir) / name
                out.mkdir(parents=True, exist_ok=True)
                _export(out, algo, trace, reports[algo])
        if out_dir is not None:
            _manifest(Path(out_dir) / name / "manifest.txt", {
                "experiment": "comparison", "noise": name, "noise_spec": spec,
                "seed": seed, "path_seed": setup.path_seed, "train_seed": setup.train_seed,
                "duration_s": duration_s, **_config_entries(cfg),
            })
        results[name] = reports
    return results
