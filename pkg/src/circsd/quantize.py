"""Scalar, memoryless, and stable Sigma-Delta quantization.

The Sigma-Delta quantizer uses the greedy rule: at each step the input plus
the weighted history of the state variables is rounded to the nearest
alphabet element, and the rounding error becomes the new state.  Under the
level condition L >= mu/delta + (2^r - 1)/2 for inputs bounded by mu, the
state trajectory stays within delta/2 in sup norm.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

from circsd.errors import InputError
from circsd.operators import apply_difference

_STABILITY_SLACK = 1e-12


@dataclass(frozen=True)
class Alphabet:
    """Mid-rise alphabet {+-(2l+1)*step/2 : 0 <= l < levels}; symmetric,
    no zero element.  The 1-bit alphabet {-1, +1} is levels=1, step=2."""

    levels: int
    step: float

    def __post_init__(self):
        if self.levels < 1:
            raise InputError(f"levels must be >= 1, got {self.levels}")
        if not self.step > 0:
            raise InputError(f"step must be positive, got {self.step}")

    @classmethod
    def one_bit(cls):
        return cls(levels=1, step=2.0)

    @property
    def elements(self):
        pos = (2 * np.arange(self.levels) + 1) * self.step / 2
        return np.sort(np.concatenate([-pos, pos]))

    @property
    def max_element(self):
        return (2 * self.levels - 1) * self.step / 2

    def admits(self, bound, r):
        """Greedy stability condition for inputs with sup norm <= bound."""
        return self.levels >= bound / self.step + (2**r - 1) / 2


@dataclass(frozen=True)
class SigmaDeltaRun:
    """Output of one Sigma-Delta pass: quantized vector q, state trace u,
    and the stability certificate."""

    r: int
    q: np.ndarray
    u: np.ndarray
    stability_bound: float
    stable: bool


def scalar_quantize(z, alphabet):
    """Nearest alphabet element; ties go to the more positive element.
    Saturates at the extreme elements. Accepts scalars or arrays."""
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)):
        raise InputError("input to scalar quantizer must be finite")
    step = alphabet.step
    q = step * (np.floor(z / step) + 0.5)
    q = np.clip(q, -alphabet.max_element, alphabet.max_element)
    return float(q) if q.ndim == 0 else q


def msq(y, alphabet):
    """Memoryless scalar quantization: entrywise nearest-element rounding."""
    return scalar_quantize(y, alphabet)


def sigma_delta(y, r, alphabet):
    """Run the greedy r-th order Sigma-Delta quantizer over y.

    y may be a vector of length m or a (batch, m) array; the recursion runs
    along the last axis with zero initial state.
    """
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        raise InputError("empty input")
    if r < 1:
        raise InputError(f"order must be >= 1, got {r}")
    squeeze = y.ndim == 1
    yb = y[None, :] if squeeze else y
    if yb.ndim != 2:
        raise InputError("y must be 1-d or 2-d")
    batch, m = yb.shape

    # rho(y_i, u_{i-1},...,u_{i-r}) = y_i - sum_j C(r,j)(-1)^j u_{i-j};
    # then q_i rounds rho and u_i = rho - q_i.
    weights = np.array([-comb(r, j) * (-1) ** j for j in range(1, r + 1)])
    u = np.zeros((batch, m))
    q = np.empty((batch, m))
    hist = np.zeros((batch, r))  # hist[:, j-1] = u_{i-j}
    step = alphabet.step
    lo, hi = -alphabet.max_element, alphabet.max_element
    for i in range(m):
        rho = yb[:, i] + hist @ weights
        qi = np.clip(step * (np.floor(rho / step) + 0.5), lo, hi)
        ui = rho - qi
        q[:, i] = qi
        u[:, i] = ui
        if r > 1:
            hist[:, 1:] = hist[:, :-1]
        hist[:, 0] = ui

    bound = alphabet.step / 2
    stable = bool(np.abs(u).max() <= bound + _STABILITY_SLACK)
    if squeeze:
        q, u = q[0], u[0]
    return SigmaDeltaRun(r=r, q=q, u=u, stability_bound=bound, stable=stable)


def verify_sd_identity(run, y):
    """Max entrywise residual of the defining relation: r-th difference of
    the state trace minus (input - quantized output)."""
    y = np.asarray(y, dtype=float)
    if y.shape != run.u.shape:
        raise InputError(f"shape mismatch: y {y.shape} vs state {run.u.shape}")
    resid = apply_difference(run.u, run.r) - (y - run.q)
    return float(np.abs(resid).max())
