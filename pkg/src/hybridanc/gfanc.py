"""Generative fixed-filter ANC: broadband filter training, sub-band
decomposition, control-filter generation and weight predictors.

The weight predictor takes the place of a trained network. Two kinds exist:
a deterministic band-energy predictor and a replay predictor that reads
weight vectors produced elsewhere from a CSV file.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .dsp import (
    DEFAULT_SAMPLE_RATE,
    FirFilter,
    MonoSignal,
    band_energies,
    bandpass_noise,
    fir_convolve,
    read_taps,
    write_taps,
)
from .errors import ConfigurationError, FormatError, InputError
from .fxnlms import DEFAULT_EPS, FxNlmsState
from .paths import PathSet

log = logging.getLogger(__name__)

FULL_BAND = (20.0, 2000.0)
DEFAULT_FILTER_LEN = 1024
DEFAULT_FRAME_LEN = 16_000
CROSSFADE_FRACTION = 0.1
# Training recipe for pre-trained filters. Larger than the online step size:
# training is offline and noise-free, so only convergence speed matters.
TRAIN_DURATION_S = 30.0
TRAIN_MU0 = 0.05


def equal_bands(m: int, full_band: tuple[float, float] = FULL_BAND) -> list[tuple[float, float]]:
    """Split ``full_band`` into ``m`` contiguous equal-width bands."""
    if m < 1:
        raise ConfigurationError(f"number of bands must be >= 1, got {m}")
    edges = np.linspace(full_band[0], full_band[1], m + 1)
    return [(float(edges[i]), float(edges[i + 1])) for i in range(m)]


# --------------------------------------------------------------------------
# Weight vectors and the sub-filter bank
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class WeightVector:
    """Combination weights, each in [0, 1]. Out-of-range inputs are clamped."""

    g: np.ndarray
    clamped: bool = field(default=False, compare=False)

    def __post_init__(self):
        g = np.asarray(self.g, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(g)):
            raise InputError("weight vector contains non-finite values")
        clipped = np.clip(g, 0.0, 1.0)
        if not np.array_equal(clipped, g):
            log.warning("weight vector %s clamped to [0, 1]", np.array2string(g, precision=3))
            object.__setattr__(self, "clamped", True)
        object.__setattr__(self, "g", clipped)

    def __len__(self) -> int:
        return self.g.shape[0]

    def __eq__(self, other) -> bool:
        return isinstance(other, WeightVector) and np.array_equal(self.g, other.g)

    @classmethod
    def zeros(cls, m: int) -> "WeightVector":
        return cls(np.zeros(m))


@dataclass(frozen=True, eq=False)
class SubFilterBank:
    filters: np.ndarray  # (M, L), row m is sub-filter m
    band_edges: list[tuple[float, float]]
    source: str = "broadband"

    def __post_init__(self):
        filters = np.atleast_2d(np.asarray(self.filters, dtype=np.float64))
        if filters.shape[0] < 1 or filters.shape[1] < 1:
            raise ConfigurationError("sub-filter bank must be non-empty")
        if len(self.band_edges) != filters.shape[0]:
            raise ConfigurationError(
                f"{filters.shape[0]} sub-filters but {len(self.band_edges)} bands"
            )
        object.__setattr__(self, "filters", filters)
        object.__setattr__(self, "band_edges", [tuple(map(float, b)) for b in self.band_edges])

    @property
    def m(self) -> int:
        return self.filters.shape[0]

    @property
    def length(self) -> int:
        return self.filters.shape[1]

    def broadband(self) -> FirFilter:
        return FirFilter(self.filters.sum(axis=0))


def crossfade_masks(freqs: np.ndarray, bands: Sequence[tuple[float, float]]) -> np.ndarray:
    """Non-negative masks, one per band, summing to one at every frequency.

    Adjacent bands hand over through a sin^2/cos^2 crossfade centred on their
    shared edge, 10 % of a band width wide. Everything below the first band
    belongs to the first mask, everything above the last to the last.
    """
    m = len(bands)
    masks = np.zeros((m, freqs.shape[0]))
    if m == 1:
        masks[0] = 1.0
        return masks
    # ramp[i] is the share of bands above interior edge i
    ramps = []
    for i in range(m - 1):
        edge = bands[i][1]
        width = CROSSFADE_FRACTION * min(bands[i][1] - bands[i][0], bands[i + 1][1] - bands[i + 1][0])
        t = np.clip((freqs - (edge - width / 2)) / width, 0.0, 1.0)
        ramps.append(np.sin(0.5 * np.pi * t) ** 2)
    # mask_k = (share above edge k-1) - (share above edge k); telescopes to 1
    above = [np.ones_like(freqs)] + ramps + [np.zeros_like(freqs)]
    for k in range(m):
        masks[k] = above[k] - above[k + 1]
    return np.clip(masks, 0.0, None)


def decompose(
    broadband: FirFilter,
    m: int,
    full_band: tuple[float, float] = FULL_BAND,
    sample_rate: int = DEFAULT_SAMPLE_RATE,
) -> SubFilterBank:
    """Split a broadband control filter into ``m`` band-limited sub-filters.

    Each sub-filter is the broadband filter's spectrum times a crossfade mask,
    brought back to the time domain and cut to the broadband length. The
    masks form a partition of unity, so the sub-filters sum to the broadband
    filter up to rounding.
    """
    low, high = full_band
    if m < 1:
        raise ConfigurationError(f"number of sub-filters must be >= 1, got {m}")
    if not (0.0 < low < high < sample_rate / 2):
        raise ConfigurationError(f"full band {full_band} must lie inside (0, {sample_rate / 2}) Hz")
    bands = equal_bands(m, full_band)
    taps = broadband.taps
    if m == 1:
        return SubFilterBank(taps[None, :].copy(), bands)
    n = len(taps)
    n_fft = 4 * n
    spectrum = np.fft.rfft(taps, n=n_fft)
    freqs = np.fft.rfftfreq(n_fft, d=1.0 / sample_rate)
    masks = crossfade_masks(freqs, bands)
    filters = np.fft.irfft(spectrum[None, :] * masks, n=n_fft, axis=1)[:, :n]
    return SubFilterBank(filters, bands)


def generate_control_filter(g: WeightVector, bank: SubFilterBank) -> FirFilter:
    """Weighted sum of the sub-filters."""
    if len(g) != bank.m:
        raise ConfigurationError(f"weight vector has {len(g)} entries, bank has {bank.m} sub-filters")
    return FirFilter(g.g @ bank.filters)


def save_bank(directory, bank: SubFilterBank) -> list[Path]:
    """Write ``sub_<m>.txt`` tap files plus ``manifest.txt`` listing band edges."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    lines = [f"source={bank.source}", f"sub_filters={bank.m}"]
    for i, (low, high) in enumerate(bank.band_edges, start=1):
        p = directory / f"sub_{i}.txt"
        write_taps(p, FirFilter(bank.filters[i - 1]))
        paths.append(p)
        lines.append(f"band_{i}={low!r},{high!r}")
    (directory / "manifest.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return paths


def load_bank(directory) -> SubFilterBank:
    directory = Path(directory)
    manifest = {}
    for line in (directory / "manifest.txt").read_text(encoding="utf-8").splitlines():
        if "=" in line:
            key, value = line.split("=", 1)
            manifest[key.strip()] = value.strip()
    try:
        m = int(manifest["sub_filters"])
        bands = [tuple(float(v) for v in manifest[f"band_{i}"].split(",")) for i in range(1, m + 1)]
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{directory}/manifest.txt: bad or missing entry {exc}") from exc
    rows = [read_taps(directory / f"sub_{i}.txt").taps for i in range(1, m + 1)]
    return SubFilterBank(np.vstack(rows), bands, manifest.get("source", "broadband"))


# --------------------------------------------------------------------------
# Pre-trained broadband filter
# --------------------------------------------------------------------------

def train_broadband_filter(
    paths: PathSet,
    seed: int,
    duration_s: float = TRAIN_DURATION_S,
    mu0: float = TRAIN_MU0,
    band: tuple[float, float] = FULL_BAND,
    length: int = DEFAULT_FILTER_LEN,
    sample_rate: int = DEFAULT_SAMPLE_RATE,
    eps: float = DEFAULT_EPS,
) -> FirFilter:
    """Adapt a zero-initialised FxNLMS filter on bandpass white noise.

    Raises :class:`~hybridanc.errors.DivergenceError` if training blows up.
    """
    if duration_s < 5:
        raise ConfigurationError(f"training duration must be at least 5 s, got {duration_s}")
    rng = np.random.default_rng(seed)
    n = int(round(duration_s * sample_rate))
    x = bandpass_noise(band, n, sample_rate, rng)
    d = fir_convolve(paths.primary, MonoSignal(x, sample_rate)).samples
    state = FxNlmsState(FirFilter.zeros(length), mu0, eps)
    state.run(x, d, paths)
    return state.filter


# --------------------------------------------------------------------------
# Weight predictors
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PredictorConfig:
    """Settings for the frame-rate weight predictor.

    ``jitter`` adds seeded uniform noise in ``[-jitter, jitter]`` to every
    element of the band-energy output. It models prediction noise.
    """

    kind: str = "band-energy"
    band_edges: tuple = tuple(equal_bands(8))
    soft: bool = False
    threshold: float = 0.5
    replay_path: str | None = None
    frame_len: int = DEFAULT_FRAME_LEN
    jitter: float = 0.0
    jitter_seed: int = 0

    def __post_init__(self):
        if self.kind not in ("band-energy", "replay"):
            raise ConfigurationError(f"unknown predictor kind {self.kind!r}")
        if self.kind == "replay" and not self.replay_path:
            raise ConfigurationError("replay predictor requires replay_path")
        if not 0.0 < self.threshold < 1.0:
            raise ConfigurationError(f"threshold must lie in (0, 1), got {self.threshold}")
        if self.jitter < 0:
            raise ConfigurationError("jitter must be non-negative")
        object.__setattr__(self, "band_edges", tuple(tuple(map(float, b)) for b in self.band_edges))

    @property
    def m(self) -> int:
        return len(self.band_edges)


def _check_frame(frame: MonoSignal, frame_len: int) -> None:
    if len(frame) != frame_len:
        raise InputError(f"predictor frame must hold {frame_len} samples, got {len(frame)}")


def band_energy_weights(frame: MonoSignal, cfg: PredictorConfig) -> WeightVector:
    """Weights from band energies normalised by the strongest band."""
    energies = band_energies(frame, cfg.band_edges)
    peak = energies.max()
    if peak <= 0.0:
        return WeightVector.zeros(cfg.m)
    norm = energies / peak
    if cfg.soft:
        return WeightVector(np.clip(norm, 0.0, 1.0))
    return WeightVector((norm >= cfg.threshold).astype(np.float64))


def read_replay(path, m: int | None = None) -> list[np.ndarray]:
    """Parse a replay CSV: one weight vector per line, comma separated."""
    rows = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            row = np.array([float(v) for v in line.split(",")])
        except ValueError:
            raise FormatError(f"{path}: line {lineno}: not a list of numbers: {line!r}") from None
        if m is not None and row.shape[0] != m:
            raise FormatError(f"{path}: line {lineno}: expected {m} values, got {row.shape[0]}")
        rows.append(row)
    return rows


def write_replay(path, vectors) -> None:
    lines = [",".join(repr(float(v)) for v in np.asarray(g, dtype=float)) for g in vectors]
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


class Predictor:
    """Stateful frame-rate predictor built from a :class:`PredictorConfig`.

    A fresh instance starts at the top of the replay file and at the start of
    the jitter stream, so two runs with the same config see the same outputs.
    """

    def __init__(self, cfg: PredictorConfig):
        self.cfg = cfg
        self._rows = read_replay(cfg.replay_path, cfg.m) if cfg.kind == "replay" else None
        self._cursor = 0
        self._rng = np.random.default_rng(cfg.jitter_seed)

    def __call__(self, frame: MonoSignal) -> WeightVector:
        cfg = self.cfg
        _check_frame(frame, cfg.frame_len)
        if cfg.kind == "replay":
            if self._cursor >= len(self._rows):
                raise InputError(
                    f"replay file {cfg.replay_path} exhausted after {len(self._rows)} vectors"
                )
            g = WeightVector(self._rows[self._cursor])
            self._cursor += 1
        else:
            g = band_energy_weights(frame, cfg)
        if cfg.jitter > 0:
            noise = self._rng.uniform(-cfg.jitter, cfg.jitter, size=cfg.m)
            g = WeightVector(np.clip(g.g + noise, 0.0, 1.0))
        return g


def predict_weights(frame: MonoSignal, cfg: PredictorConfig) -> WeightVector:
    """One-shot prediction. Replay configs return the first vector of the file."""
    return Predictor(cfg)(frame)
