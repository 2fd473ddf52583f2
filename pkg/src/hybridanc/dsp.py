"""Signal and FIR primitives: sample buffers, convolution, delay lines,
band energies, and WAV / tap-file I/O.

All arithmetic is float64. Quantization to 16 bits happens only when a WAV
file is written.
"""

from __future__ import annotations

import wave
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import signal as sps

from .errors import ConfigurationError, FormatError, InputError

DEFAULT_SAMPLE_RATE = 16_000
NOISE_FILTER_TAPS = 255


@dataclass(frozen=True, eq=False)
class MonoSignal:
    """Finite sequence of samples at a fixed sample rate."""

    samples: np.ndarray
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        if int(self.sample_rate) != self.sample_rate or self.sample_rate <= 0:
            raise ConfigurationError(f"sample_rate must be a positive integer, got {self.sample_rate}")
        if not np.all(np.isfinite(samples)):
            raise InputError("signal contains non-finite samples")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate

    def slice(self, start: int, stop: int) -> "MonoSignal":
        return MonoSignal(self.samples[start:stop], self.sample_rate)


@dataclass(frozen=True, eq=False)
class FirFilter:
    """FIR tap vector. Used for acoustic paths, control filters and sub-filters."""

    taps: np.ndarray

    def __post_init__(self):
        taps = np.asarray(self.taps, dtype=np.float64).reshape(-1)
        if taps.shape[0] < 1:
            raise ConfigurationError("FIR filter needs at least one tap")
        if not np.all(np.isfinite(taps)):
            raise ConfigurationError("FIR filter contains non-finite taps")
        object.__setattr__(self, "taps", taps)

    def __len__(self) -> int:
        return self.taps.shape[0]

    @classmethod
    def zeros(cls, length: int) -> "FirFilter":
        return cls(np.zeros(length))

    @classmethod
    def delta(cls, length: int = 1, delay: int = 0) -> "FirFilter":
        taps = np.zeros(length)
        taps[delay] = 1.0
        return cls(taps)


class DelayLine:
    """The ``capacity`` most recent input samples, newest first, zero-padded."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ConfigurationError(f"delay line capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self.contents = np.zeros(capacity)

    def push(self, sample: float) -> None:
        self.contents[1:] = self.contents[:-1]
        self.contents[0] = sample

    def clear(self) -> None:
        self.contents[:] = 0.0


def fir_step(filt: FirFilter, line: DelayLine) -> float:
    """Output of ``filt`` for the current delay-line contents (tap 0 on the newest sample)."""
    if line.capacity != len(filt):
        raise ConfigurationError(
            f"delay line capacity {line.capacity} does not match filter length {len(filt)}"
        )
    return float(np.dot(filt.taps, line.contents))


def fir_convolve(filt: FirFilter, sig: MonoSignal) -> MonoSignal:
    """Same-length linear convolution with zero initial state."""
    if len(sig) == 0:
        raise InputError("cannot filter an empty signal")
    out = sps.lfilter(filt.taps, [1.0], sig.samples)
    return MonoSignal(out, sig.sample_rate)


def _check_band(low: float, high: float, sample_rate: int) -> None:
    if not (0.0 <= low < high <= sample_rate / 2):
        raise ConfigurationError(
            f"band ({low}, {high}) Hz must satisfy 0 <= low < high <= {sample_rate / 2}"
        )


def band_energies(frame: MonoSignal, band_edges: Sequence[tuple[float, float]]) -> np.ndarray:
    """Per-band periodogram energy.

    The one-sided periodogram is scaled so that summing every bin reproduces
    the time-domain energy. Bin ``k`` belongs to a band when its frequency
    lies in ``[low, high)``; a band whose upper edge is exactly Nyquist also
    takes the Nyquist bin.
    """
    n = len(frame)
    if n == 0:
        raise InputError("cannot compute band energies of an empty frame")
    if n < 2:
        raise InputError("frame must hold at least 2 samples")
    fs = frame.sample_rate
    for low, high in band_edges:
        _check_band(low, high, fs)

    spectrum = np.fft.rfft(frame.samples)
    power = np.abs(spectrum) ** 2 / n
    if n % 2 == 0:
        power[1:-1] *= 2.0
    else:
        power[1:] *= 2.0
    # k * fs / n is exact at the Nyquist bin, unlike rfftfreq's k / (n / fs)
    freqs = np.arange(power.shape[0]) * fs / n
    at_nyquist = np.zeros(power.shape[0], dtype=bool)
    if n % 2 == 0:
        at_nyquist[-1] = True

    energies = np.empty(len(band_edges))
    for i, (low, high) in enumerate(band_edges):
        mask = (freqs >= low) & (freqs < high)
        if high >= fs / 2:
            mask |= at_nyquist
        energies[i] = power[mask].sum()
    return energies


def design_bandpass(band: tuple[float, float], sample_rate: int, numtaps: int = NOISE_FILTER_TAPS) -> FirFilter:
    """Linear-phase windowed-sinc (Hamming) bandpass."""
    low, high = band
    _check_band(low, high, sample_rate)
    if low <= 0.0:
        taps = sps.firwin(numtaps, high, fs=sample_rate)
    elif high >= sample_rate / 2:
        taps = sps.firwin(numtaps, low, pass_zero=False, fs=sample_rate)
    else:
        taps = sps.firwin(numtaps, [low, high], pass_zero=False, fs=sample_rate)
    return FirFilter(taps)


def bandpass_noise(
    band: tuple[float, float],
    n_samples: int,
    sample_rate: int,
    rng: np.random.Generator,
    numtaps: int = NOISE_FILTER_TAPS,
) -> np.ndarray:
    """White Gaussian noise through a windowed-sinc bandpass, unit RMS.

    The filter runs over ``numtaps - 1`` extra leading samples so the output
    carries no start-up transient.
    """
    taps = design_bandpass(band, sample_rate, numtaps).taps
    white = rng.standard_normal(n_samples + numtaps - 1)
    out = np.convolve(white, taps, mode="valid")
    rms = np.sqrt(np.mean(out**2))
    return out / rms if rms > 0 else out


# --------------------------------------------------------------------------
# File I/O
# --------------------------------------------------------------------------

def read_wav(path) -> MonoSignal:
    """Read a 16-bit PCM mono WAV file, scaling samples to [-1, 1)."""
    try:
        with wave.open(str(path), "rb") as wf:
            channels = wf.getnchannels()
            width = wf.getsampwidth()
            rate = wf.getframerate()
            raw = wf.readframes(wf.getnframes())
    except wave.Error as exc:
        raise FormatError(f"{path}: malformed WAV header: {exc}") from exc
    except EOFError as exc:
        raise FormatError(f"{path}: truncated WAV header") from exc
    if channels != 1:
        raise FormatError(f"{path}: channels={channels}, expected 1 (mono)")
    if width != 2:
        raise FormatError(f"{path}: sample width={8 * width} bits, expected 16")
    if rate <= 0:
        raise FormatError(f"{path}: sample rate={rate}, expected a positive value")
    data = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return MonoSignal(data, rate)


def write_wav(path, sig: MonoSignal) -> None:
    """Write ``sig`` as 16-bit PCM mono; samples are rounded and clipped."""
    pcm = np.clip(np.round(sig.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(sig.sample_rate)
        wf.writeframes(pcm.tobytes())


def read_taps(path) -> FirFilter:
    """Read one decimal tap per line."""
    taps = []
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            taps.append(float(line))
        except ValueError:
            raise FormatError(f"{path}: line {lineno}: not a number: {line!r}") from None
    if not taps:
        raise FormatError(f"{path}: no taps found")
    return FirFilter(np.array(taps))


def write_taps(path, filt: FirFilter) -> None:
    # repr() gives the shortest string that round-trips a float64 exactly.
    text = "".join(f"{float(t)!r}\n" for t in filt.taps)
    Path(path).write_text(text, encoding="utf-8")
