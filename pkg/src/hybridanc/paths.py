"""Primary path P, secondary path S and its estimate Ŝ.

Paths are either synthesized from a seed or loaded from tap files. The
synthetic recipe is a pure delay followed by an exponentially decaying random
tail, scaled to unit peak magnitude response.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.optimize import minimize_scalar

from .dsp import DEFAULT_SAMPLE_RATE, FirFilter, read_taps, write_taps
from .errors import ConfigurationError

log = logging.getLogger(__name__)

PRIMARY_DELAY = 32
SECONDARY_DELAY = 16
DEFAULT_PRIMARY_LEN = 256
DEFAULT_SECONDARY_LEN = 128

# Secondary paths with a notch deeper than this inside the control band are
# re-drawn; FxNLMS barely adapts at such frequencies.
MAX_NOTCH_DB = -60.0
CONTROL_BAND = (20.0, 2000.0)
RESEED_STRIDE = 2**16
_FREQ_GRID = 8192
_NOTCH_GRID = 65536


@dataclass(frozen=True, eq=False)
class PathSet:
    primary: FirFilter
    secondary: FirFilter
    secondary_estimate: FirFilter

    def __post_init__(self):
        if len(self.secondary_estimate) != len(self.secondary):
            raise ConfigurationError(
                f"secondary estimate has {len(self.secondary_estimate)} taps, "
                f"secondary path has {len(self.secondary)}"
            )


def magnitude_response(taps: np.ndarray, n_fft: int = _FREQ_GRID) -> np.ndarray:
    return np.abs(np.fft.rfft(taps, n=max(n_fft, len(taps))))


def _decaying_path(rng: np.random.Generator, length: int, delay: int) -> np.ndarray:
    taps = np.zeros(length)
    tail = length - delay
    k = np.arange(tail)
    taps[delay:] = rng.standard_normal(tail) * np.exp(-k / (length / 4))
    taps /= magnitude_response(taps).max()
    return taps


def min_band_gain_db(
    taps: np.ndarray,
    band: tuple[float, float] = CONTROL_BAND,
    sample_rate: int = DEFAULT_SAMPLE_RATE,
) -> float:
    """Deepest point of the magnitude response inside ``band``, in dB re. peak.

    A coarse FFT grid can step over a sharp notch, so the grid minimum is
    refined with a bounded scalar search on the exact response.
    """
    n_fft = max(_NOTCH_GRID, len(taps))
    mag = magnitude_response(taps, n_fft)
    freqs = np.fft.rfftfreq(n_fft, d=1.0 / sample_rate)
    inband = np.flatnonzero((freqs >= band[0]) & (freqs <= band[1]))
    k = inband[np.argmin(mag[inband])]
    n = np.arange(len(taps))

    def response(f):
        return abs(np.exp(-2j * np.pi * f * n / sample_rate) @ taps)

    step = sample_rate / n_fft
    lo, hi = max(band[0], freqs[k] - step), min(band[1], freqs[k] + step)
    found = minimize_scalar(response, bounds=(lo, hi), method="bounded", options={"xatol": 1e-6})
    floor = min(mag[k], float(found.fun))
    return float(20 * np.log10(max(floor, 1e-300) / mag.max()))


def synth_paths(
    seed: int,
    primary_len: int = DEFAULT_PRIMARY_LEN,
    secondary_len: int = DEFAULT_SECONDARY_LEN,
    sample_rate: int = DEFAULT_SAMPLE_RATE,
) -> PathSet:
    """Deterministic synthetic paths; Ŝ equals S exactly."""
    if primary_len < 8 or secondary_len < 8:
        raise ConfigurationError("path lengths must be at least 8 taps")
    if primary_len <= PRIMARY_DELAY or secondary_len <= SECONDARY_DELAY:
        raise ConfigurationError(
            f"path lengths must exceed their delays ({PRIMARY_DELAY}, {SECONDARY_DELAY})"
        )
    draw = seed
    while True:
        rng = np.random.default_rng(draw)
        primary = _decaying_path(rng, primary_len, PRIMARY_DELAY)
        secondary = _decaying_path(rng, secondary_len, SECONDARY_DELAY)
        notch = min_band_gain_db(secondary, CONTROL_BAND, sample_rate)
        if notch > MAX_NOTCH_DB:
            break
        log.warning(
            "seed %d: secondary path notch %.1f dB in %s Hz, re-drawing with seed %d",
            draw, notch, CONTROL_BAND, draw + RESEED_STRIDE,
        )
        draw += RESEED_STRIDE
    return PathSet(FirFilter(primary), FirFilter(secondary), FirFilter(secondary.copy()))


def perturb_estimate(paths: PathSet, relative_error: float, seed: int) -> PathSet:
    """Return a copy whose Ŝ is S plus noise of norm ``relative_error * ||S||``."""
    if relative_error < 0:
        raise ConfigurationError("relative_error must be non-negative")
    if relative_error == 0:
        return paths
    s = paths.secondary.taps
    noise = np.random.default_rng(seed).standard_normal(s.shape[0])
    noise *= relative_error * np.linalg.norm(s) / np.linalg.norm(noise)
    return replace(paths, secondary_estimate=FirFilter(s + noise))


def load_paths(primary, secondary, secondary_estimate=None) -> PathSet:
    """Load measured paths from tap files; Ŝ defaults to S."""
    p = read_taps(primary)
    s = read_taps(secondary)
    s_hat = read_taps(secondary_estimate) if secondary_estimate is not None else FirFilter(s.taps.copy())
    return PathSet(p, s, s_hat)


def save_paths(directory, paths: PathSet) -> None:
    directory = Path(directory)
    write_taps(directory / "primary.txt", paths.primary)
    write_taps(directory / "secondary.txt", paths.secondary)
    write_taps(directory / "secondary_estimate.txt", paths.secondary_estimate)
