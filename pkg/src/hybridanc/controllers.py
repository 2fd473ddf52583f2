"""End-to-end control loops run against a simulated plant.

Five algorithms share one dual-rate loop:

* ``fxnlms``        zero-initialised FxNLMS, no frame-rate decisions
* ``gfanc``         generated filter held fixed per frame
* ``sfanc``         selected pre-trained filter held fixed per frame
* ``sfanc-fxnlms``  selected filter refined by FxNLMS
* ``gfanc-fxnlms``  generated filter refined by FxNLMS, gated by online clustering

Interleaving is deterministic. All samples of frame ``i`` run at the sample
rate first. Then the frame-rate decision is made on frame ``i``. It takes
effect ``latency`` samples after the frame boundary (zero by default, i.e.
at the first sample of frame ``i + 1``).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .clustering import DEFAULT_TAU, ClusterState
from .dsp import DEFAULT_SAMPLE_RATE, FirFilter, MonoSignal, fir_convolve
from .errors import ConfigurationError, InputError
from .fxnlms import DEFAULT_EPS, DEFAULT_MU0, FxNlmsState
from .gfanc import (
    DEFAULT_FILTER_LEN,
    DEFAULT_FRAME_LEN,
    TRAIN_DURATION_S,
    TRAIN_MU0,
    Predictor,
    PredictorConfig,
    SubFilterBank,
    WeightVector,
    band_energy_weights,
    generate_control_filter,
    train_broadband_filter,
)
from .paths import PathSet

ALGORITHMS = ("fxnlms", "gfanc", "sfanc", "sfanc-fxnlms", "gfanc-fxnlms")

SFANC_BANDS = (
    (20.0, 2000.0),
    (20.0, 1010.0),
    (1010.0, 2000.0),
    (20.0, 515.0),
    (515.0, 1010.0),
    (1010.0, 1505.0),
    (1505.0, 2000.0),
)


@dataclass(frozen=True)
class HybridConfig:
    frame_len: int = DEFAULT_FRAME_LEN
    m: int = 8
    filter_len: int = DEFAULT_FILTER_LEN
    sample_rate: int = DEFAULT_SAMPLE_RATE
    tau: float = DEFAULT_TAU
    mu0: float = DEFAULT_MU0
    eps: float = DEFAULT_EPS
    clustering_enabled: bool = True
    adaptation_enabled: bool = True
    predictor: PredictorConfig = field(default_factory=PredictorConfig)
    latency: int = 0

    def __post_init__(self):
        for name in ("frame_len", "m", "filter_len", "sample_rate"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be positive, got {getattr(self, name)}")
        if self.filter_len > self.frame_len:
            raise ConfigurationError("filter_len must not exceed frame_len")
        if self.latency < 0:
            raise ConfigurationError("latency must be non-negative")
        if self.predictor.m != self.m:
            raise ConfigurationError(
                f"predictor has {self.predictor.m} bands but m={self.m}"
            )
        if self.predictor.frame_len != self.frame_len:
            raise ConfigurationError("predictor frame_len must equal frame_len")


@dataclass
class Event:
    sample: int
    kind: str  # weight_update | reinit | new_cluster
    detail: str = ""


@dataclass
class RunTrace:
    error: MonoSignal
    desired: MonoSignal
    events: list = field(default_factory=list)
    reinit_count: int = 0
    frame_filters: list = field(default_factory=list)  # filter in force at each frame start
    final_filter: Optional[FirFilter] = None
    cluster_log: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.error) != len(self.desired):
            raise ConfigurationError("error and desired traces differ in length")

    def events_of(self, kind: str) -> list:
        return [ev for ev in self.events if ev.kind == kind]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["sample", "desired", "error"])
            for n, (dn, en) in enumerate(zip(self.desired.samples, self.error.samples)):
                w.writerow([n, repr(float(dn)), repr(float(en))])

    def write_events_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["sample", "kind", "detail"])
            for ev in self.events:
                w.writerow([ev.sample, ev.kind, ev.detail])


def write_cluster_log(path, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["frame_index", "k_prime", "K", "min_distance", "updated"])
        for row in rows:
            w.writerow(row)


class PlantSim:
    """Disturbance at the error microphone, ``d = P * x`` with zero initial state.

    The secondary path ``S * y`` is applied inside the engine, sample by
    sample, because ``y`` depends on the current filter.
    """

    def __init__(self, paths: PathSet):
        self.paths = paths

    def disturbance(self, x: MonoSignal) -> MonoSignal:
        return fir_convolve(self.paths.primary, x)


# A decision callback gets (frame_index, frame, boundary_sample, events) and
# returns the filter to switch to, or None to keep the current one.
Decide = Callable[[int, MonoSignal, int, list], Optional[FirFilter]]


def _simulate(noise: MonoSignal, paths: PathSet, cfg: HybridConfig, adapt: bool,
              decide: Optional[Decide]) -> RunTrace:
    n_total = len(noise)
    F = cfg.frame_len
    if n_total < F:
        raise InputError(f"noise holds {n_total} samples, need at least one frame of {F}")
    if noise.sample_rate != cfg.sample_rate:
        raise ConfigurationError(
            f"noise sample rate {noise.sample_rate} differs from configured {cfg.sample_rate}"
        )
    x = noise.samples
    d = PlantSim(paths).disturbance(noise).samples
    engine = FxNlmsState(FirFilter.zeros(cfg.filter_len), cfg.mu0, cfg.eps, cfg.filter_len)
    e = np.empty(n_total)
    events: list = []
    frame_filters = []
    pending: list = []  # (apply_at, filter), ordered by apply_at

    def apply_due(upto: int) -> None:
        while pending and pending[0][0] <= upto:
            at, filt = pending.pop(0)
            engine.reinitialize(filt)
            events.append(Event(at, "reinit", f"count={engine.reinit_count}"))

    def advance(start: int, stop: int) -> None:
        pos = start
        while pos < stop:
            apply_due(pos)
            nxt = stop
            if pending and pending[0][0] < stop:
                nxt = pending[0][0]
            e[pos:nxt], _ = engine.run(x[pos:nxt], d[pos:nxt], paths, adapt)
            pos = nxt

    n_frames = -(-n_total // F)
    for i in range(n_frames):
        start, stop = i * F, min((i + 1) * F, n_total)
        apply_due(start)
        frame_filters.append(engine.filter)
        advance(start, stop)
        if decide is not None and stop - start == F:
            new = decide(i, noise.slice(start, stop), stop, events)
            if new is not None:
                pending.append((stop + cfg.latency, new))
    # a decision landing exactly on the end of the record is still applied
    apply_due(n_total)

    return RunTrace(
        error=MonoSignal(e, noise.sample_rate),
        desired=MonoSignal(d, noise.sample_rate),
        events=events,
        reinit_count=engine.reinit_count,
        frame_filters=frame_filters,
        final_filter=engine.filter,
    )


def run_hybrid(noise: MonoSignal, paths: PathSet, bank: SubFilterBank, cfg: HybridConfig) -> RunTrace:
    """GFANC-FxNLMS: frame-rate weight prediction, optional clustering gate,
    sample-rate FxNLMS refinement (when ``cfg.adaptation_enabled``)."""
    if bank.m != cfg.m:
        raise ConfigurationError(f"bank has {bank.m} sub-filters, config expects {cfg.m}")
    if bank.length != cfg.filter_len:
        raise ConfigurationError(f"bank filters have {bank.length} taps, config expects {cfg.filter_len}")
    predictor = Predictor(cfg.predictor)
    clusters = ClusterState(cfg.tau)
    g = WeightVector.zeros(cfg.m)

    def decide(i, frame, boundary, events):
        nonlocal g
        g_prime = predictor(frame)
        if cfg.clustering_enabled:
            k_before = clusters.k
            g_new, updated = clusters.gated_update(g, g_prime)
            if clusters.k > k_before:
                events.append(Event(boundary, "new_cluster", f"k={clusters.k}"))
        else:
            g_new, updated = g_prime, not np.array_equal(g_prime.g, g.g)
        if not updated:
            return None
        g = g_new
        events.append(Event(boundary, "weight_update", " ".join(f"{v:.6g}" for v in g.g)))
        return generate_control_filter(g, bank)

    trace = _simulate(noise, paths, cfg, cfg.adaptation_enabled, decide)
    trace.cluster_log = clusters.log_rows()
    return trace


def run_gfanc(noise: MonoSignal, paths: PathSet, bank: SubFilterBank, cfg: HybridConfig) -> RunTrace:
    """Generated filter only, no sample-rate adaptation."""
    return run_hybrid(noise, paths, bank, replace(cfg, adaptation_enabled=False))


def run_fxnlms(noise: MonoSignal, paths: PathSet, cfg: HybridConfig) -> RunTrace:
    """Zero-initialised FxNLMS without any frame-rate decisions."""
    return _simulate(noise, paths, cfg, True, None)


# --------------------------------------------------------------------------
# SFANC
# --------------------------------------------------------------------------

def build_sfanc_bank(
    paths: PathSet,
    seed: int,
    duration_s: float = TRAIN_DURATION_S,
    mu0: float = TRAIN_MU0,
    length: int = DEFAULT_FILTER_LEN,
    sample_rate: int = DEFAULT_SAMPLE_RATE,
) -> list[tuple[FirFilter, tuple[float, float]]]:
    """Pre-train one control filter per SFANC band."""
    bank = []
    for i, band in enumerate(SFANC_BANDS):
        child = int(np.random.SeedSequence([seed, i]).generate_state(1)[0])
        filt = train_broadband_filter(paths, child, duration_s, mu0, band, length, sample_rate)
        bank.append((filt, band))
    return bank


def select_sfanc_filter(active: np.ndarray, predictor_bands, sfanc_bands) -> Optional[int]:
    """Index of the narrowest pre-trained band covering every active band.

    Ties go to the lower index. Returns None when nothing is active or no
    band covers the active span.
    """
    idx = np.flatnonzero(np.asarray(active) > 0)
    if idx.size == 0:
        return None
    lo = min(predictor_bands[i][0] for i in idx)
    hi = max(predictor_bands[i][1] for i in idx)
    best, best_width = None, np.inf
    for j, (b_lo, b_hi) in enumerate(sfanc_bands):
        if b_lo <= lo and b_hi >= hi and (b_hi - b_lo) < best_width:
            best, best_width = j, b_hi - b_lo
    return best


def _run_sfanc(noise, paths, sfanc_bank, cfg: HybridConfig, adapt: bool) -> RunTrace:
    bands = [band for _, band in sfanc_bank]
    for filt, _ in sfanc_bank:
        if len(filt) != cfg.filter_len:
            raise ConfigurationError(f"SFANC filter has {len(filt)} taps, config expects {cfg.filter_len}")
    hard = replace(cfg.predictor, soft=False, kind="band-energy", replay_path=None, jitter=0.0)
    current = None

    def decide(i, frame, boundary, events):
        nonlocal current
        signature = band_energy_weights(frame, hard).g
        choice = select_sfanc_filter(signature, hard.band_edges, bands)
        if choice is None or choice == current:
            return None
        current = choice
        lo, hi = bands[choice]
        events.append(Event(boundary, "weight_update", f"filter={choice} band={lo:g}-{hi:g}"))
        return sfanc_bank[choice][0]

    return _simulate(noise, paths, cfg, adapt, decide)


def run_sfanc(noise: MonoSignal, paths: PathSet, sfanc_bank, cfg: HybridConfig) -> RunTrace:
    return _run_sfanc(noise, paths, sfanc_bank, cfg, adapt=False)


def run_sfanc_fxnlms(noise: MonoSignal, paths: PathSet, sfanc_bank, cfg: HybridConfig) -> RunTrace:
    return _run_sfanc(noise, paths, sfanc_bank, cfg, adapt=True)


def run_algorithm(algo: str, noise: MonoSignal, paths: PathSet, cfg: HybridConfig,
                  bank: Optional[SubFilterBank] = None, sfanc_bank=None) -> RunTrace:
    if algo == "fxnlms":
        return run_fxnlms(noise, paths, cfg)
    if algo == "gfanc":
        return run_gfanc(noise, paths, bank, cfg)
    if algo == "gfanc-fxnlms":
        return run_hybrid(noise, paths, bank, cfg)
    if algo == "sfanc":
        return run_sfanc(noise, paths, sfanc_bank, cfg)
    if algo == "sfanc-fxnlms":
        return run_sfanc_fxnlms(noise, paths, sfanc_bank, cfg)
    raise ConfigurationError(f"unknown algorithm {algo!r}; choose from {', '.join(ALGORITHMS)}")
