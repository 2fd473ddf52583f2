"""Filtered-x normalized LMS engine.

One call to :meth:`FxNlmsState.step` performs, in order:

1. push ``x(n)`` into the reference line and the Ŝ input line,
2. ``y(n) = w^T x(n)``,
3. ``e(n) = d(n) - (S * y)(n)`` through the internal secondary-path state,
4. ``x'(n) = (Ŝ * x)(n)`` pushed into the filtered-reference line,
5. ``mu(n) = mu0 / (eps + ||x'||^2)`` over the last L filtered samples,
6. ``w <- w + mu(n) e(n) x'``.

:meth:`FxNlmsState.run` does the same over a block inside a numba kernel.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .dsp import FirFilter
from .errors import ConfigurationError, DivergenceError
from .paths import PathSet

DEFAULT_MU0 = 0.002
DEFAULT_EPS = 1e-6
MAX_TAP = 1e6


@njit(cache=True)
def _shift_in(line, value):
    for j in range(line.shape[0] - 1, 0, -1):
        line[j] = line[j - 1]
    line[0] = value


@njit(cache=True)
def _fxnlms_block(x, d, w, x_line, shat_line, xf_line, y_line, s, s_hat,
                  mu0, eps, adapt, max_tap, e_out, y_out):
    """Run the engine over ``x``/``d``. Returns the block offset of the first
    divergent update, or -1."""
    L = w.shape[0]
    for n in range(x.shape[0]):
        _shift_in(x_line, x[n])
        _shift_in(shat_line, x[n])

        y = 0.0
        for j in range(L):
            y += w[j] * x_line[j]
        _shift_in(y_line, y)

        sy = 0.0
        for j in range(s.shape[0]):
            sy += s[j] * y_line[j]
        e = d[n] - sy

        xf = 0.0
        for j in range(s_hat.shape[0]):
            xf += s_hat[j] * shat_line[j]
        _shift_in(xf_line, xf)

        e_out[n] = e
        y_out[n] = y
        if not np.isfinite(e):
            return n
        if adapt:
            power = 0.0
            for j in range(L):
                power += xf_line[j] * xf_line[j]
            step = mu0 / (eps + power) * e
            blown = False
            for j in range(L):
                w[j] += step * xf_line[j]
                if not abs(w[j]) <= max_tap:  # catches NaN as well
                    blown = True
            if blown:
                return n
    return -1


class FxNlmsState:
    """Mutable FxNLMS engine state.

    The Ŝ and S convolution lines are sized on the first :meth:`step`/:meth:`run`
    call from the supplied :class:`PathSet`.
    """

    def __init__(self, w0: FirFilter, mu0: float = DEFAULT_MU0, eps: float = DEFAULT_EPS,
                 length: int | None = None):
        if not mu0 > 0:
            raise ConfigurationError(f"mu0 must be positive, got {mu0}")
        if not eps > 0:
            raise ConfigurationError(f"eps must be positive, got {eps}")
        if length is not None and len(w0) != length:
            raise ConfigurationError(f"initial filter has {len(w0)} taps, expected {length}")
        self.mu0 = float(mu0)
        self.eps = float(eps)
        self.w = w0.taps.copy()
        self.x_line = np.zeros(len(w0))
        self.xf_line = np.zeros(len(w0))
        self.shat_line: np.ndarray | None = None
        self.y_line: np.ndarray | None = None
        self.n = 0
        self.reinit_count = 0

    @property
    def length(self) -> int:
        return self.w.shape[0]

    @property
    def filter(self) -> FirFilter:
        return FirFilter(self.w.copy())

    def _bind(self, paths: PathSet) -> None:
        ns, nshat = len(paths.secondary), len(paths.secondary_estimate)
        if self.y_line is None:
            self.y_line = np.zeros(ns)
            self.shat_line = np.zeros(nshat)
        elif self.y_line.shape[0] != ns or self.shat_line.shape[0] != nshat:
            raise ConfigurationError("secondary path length changed between steps")

    def run(self, x: np.ndarray, d: np.ndarray, paths: PathSet, adapt: bool = True):
        """Process a block; returns ``(e, y)`` arrays."""
        x = np.ascontiguousarray(x, dtype=np.float64)
        d = np.ascontiguousarray(d, dtype=np.float64)
        if x.shape != d.shape:
            raise ConfigurationError("reference and disturbance blocks differ in length")
        self._bind(paths)
        e = np.empty_like(x)
        y = np.empty_like(x)
        bad = _fxnlms_block(x, d, self.w, self.x_line, self.shat_line, self.xf_line,
                            self.y_line, paths.secondary.taps, paths.secondary_estimate.taps,
                            self.mu0, self.eps, adapt, MAX_TAP, e, y)
        if bad >= 0:
            index = self.n + bad
            self.n += bad + 1
            raise DivergenceError("FxNLMS diverged", index)
        self.n += x.shape[0]
        return e, y

    def step(self, x_n: float, d_n: float, paths: PathSet, adapt: bool = True) -> tuple[float, float]:
        e, y = self.run(np.array([x_n]), np.array([d_n]), paths, adapt)
        return float(e[0]), float(y[0])

    def reinitialize(self, w_new: FirFilter) -> None:
        """Swap the control filter; all signal history is kept."""
        if len(w_new) != self.length:
            raise ConfigurationError(f"new filter has {len(w_new)} taps, expected {self.length}")
        self.w[:] = w_new.taps
        self.reinit_count += 1


def init(w0: FirFilter, mu0: float = DEFAULT_MU0, eps: float = DEFAULT_EPS,
         length: int | None = None) -> FxNlmsState:
    return FxNlmsState(w0, mu0, eps, length)
