"""Monte-Carlo checks of the near-isometry properties of the projected,
shaped, partial circulant matrix (1/sqrt(ell)) * P_ell V^T R C.

`rip_monte_carlo` lower-bounds the restricted isometry constant by sampling
(or, on tiny problems, enumerating) column supports.  `expectation_check`
compares the exact per-draw expectation over the generator (a squared
Frobenius norm) against the closed-form bound (s-1)(m-ell)/(ell(N-1)).
`bounded_difference_check` probes the bounded-difference inequality that
the concentration argument rests on.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from math import comb, floor, sqrt

import numpy as np

from circsd.errors import InputError
from circsd.operators import (
    build_difference_system,
    circulant_dense,
    fourier_sup_norm,
    measurement_matrix,
)

# Exhaustive support enumeration is used below this many supports.
_ENUMERATION_LIMIT = 5000


@dataclass(frozen=True)
class CompositeSpec:
    """Dimensions of the projected composite matrix; ell = round(m (s/m)^alpha),
    clamped to [1, m]."""

    N: int
    m: int
    s: int
    alpha: float
    r: int
    ell_override: int | None = None   # pin ell directly instead of the formula

    def __post_init__(self):
        if not 0 <= self.alpha < 0.5:
            raise InputError(f"alpha must lie in [0, 1/2), got {self.alpha}")
        if not 1 <= self.m <= self.N:
            raise InputError(f"need 1 <= m <= N, got m={self.m}, N={self.N}")
        if not 1 <= self.s <= self.N:
            raise InputError(f"need 1 <= s <= N, got s={self.s}")
        if self.ell_override is not None and not 1 <= self.ell_override <= self.m:
            raise InputError(f"need 1 <= ell <= m, got ell={self.ell_override}")

    @property
    def ell(self):
        if self.ell_override is not None:
            return int(self.ell_override)
        raw = self.m * (self.s / self.m) ** self.alpha
        return int(min(max(floor(raw + 0.5), 1), self.m))


@dataclass(frozen=True)
class RipEstimate:
    """Sampled lower bound on the restricted isometry constant of order s."""

    s: int
    trials: int
    delta_hat: float
    min_eigs: np.ndarray
    max_eigs: np.ndarray
    exhaustive: bool


def composite_matrix(ens, diff, ell):
    """Dense ell x N matrix (1/sqrt(ell)) * (top-ell right singular rows of
    the inverse difference) * (partial circulant measurement matrix)."""
    if diff.m != ens.m:
        raise InputError(f"size mismatch: diff.m={diff.m} vs ens.m={ens.m}")
    if not 1 <= ell <= ens.m:
        raise InputError(f"need 1 <= ell <= m={ens.m}, got ell={ell}")
    A = measurement_matrix(ens)
    return (diff.V[:, :ell].T @ A) / sqrt(ell)


def rip_monte_carlo(M, s, trials, rng, exhaustive=None):
    """Extreme eigenvalues of M_T^T M_T over sampled supports T of size s.

    Returns a lower bound on the true restricted isometry constant (the
    maximum over *sampled* supports only).  When the number of supports is
    at most 5000 (or `exhaustive` is forced), all supports are checked and
    the value is exact.
    """
    M = np.asarray(M, dtype=float)
    N = M.shape[1]
    if not 1 <= s <= N:
        raise InputError(f"need 1 <= s <= N={N}, got s={s}")
    if trials < 1:
        raise InputError(f"trials must be >= 1, got {trials}")
    if exhaustive is None:
        exhaustive = comb(N, s) <= _ENUMERATION_LIMIT
    if exhaustive:
        supports = (np.asarray(T) for T in combinations(range(N), s))
        count = comb(N, s)
    else:
        supports = (np.sort(rng.choice(N, size=s, replace=False)) for _ in range(trials))
        count = trials
    min_eigs = np.empty(count)
    max_eigs = np.empty(count)
    for i, T in enumerate(supports):
        G = M[:, T].T @ M[:, T]
        eigs = np.linalg.eigvalsh(G)
        min_eigs[i] = eigs[0]
        max_eigs[i] = eigs[-1]
    delta_hat = max(float(1.0 - min_eigs.min()), float(max_eigs.max() - 1.0), 0.0)
    return RipEstimate(s=s, trials=count, delta_hat=delta_hat,
                       min_eigs=min_eigs, max_eigs=max_eigs,
                       exhaustive=exhaustive)


@dataclass(frozen=True)
class ExpectationCheck:
    mean: float
    deviation: float   # |mean - 1|
    bound: float       # (s-1)(m-ell)/(ell(N-1))


def expectation_bound(spec):
    return (spec.s - 1) * (spec.m - spec.ell) / (spec.ell * (spec.N - 1))


def expectation_check(x, spec, omega_draws, rng):
    """Average, over sampled index vectors, of the exact generator-side
    expectation of the squared composite norm of a fixed unit-norm sparse
    vector, compared against the closed-form deviation bound."""
    xd = x.to_dense() if hasattr(x, "to_dense") else np.asarray(x, dtype=float)
    if xd.shape != (spec.N,):
        raise InputError(f"x must have length N={spec.N}")
    if abs(np.linalg.norm(xd) - 1.0) > 1e-9:
        raise InputError("x must have unit l2 norm")
    if omega_draws < 1:
        raise InputError(f"omega_draws must be >= 1, got {omega_draws}")
    ell = spec.ell
    diff = build_difference_system(spec.r, spec.m)
    W = diff.V[:, :ell].T / sqrt(ell)      # ell x m
    Cx = circulant_dense(xd)               # N x N
    total = 0.0
    for _ in range(omega_draws):
        omega = rng.permutation(spec.N)[:spec.m]
        total += float(np.sum((W @ Cx[omega, :]) ** 2))
    mean = total / omega_draws
    return ExpectationCheck(mean=mean, deviation=abs(mean - 1.0),
                            bound=expectation_bound(spec))


@dataclass(frozen=True)
class BoundedDifferenceCheck:
    max_diff: float
    bound: float
    max_ratio: float
    pairs: int


def bounded_difference_check(x, y, spec, trials, rng):
    """Sample index vectors and one/two-coordinate perturbations of them and
    verify |f(w) - f(w')| <= (12/ell) * sup|DFT(x - y)| where f is the
    squared-Frobenius-norm difference of the two composite matrices."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != (spec.N,) or y.shape != (spec.N,):
        raise InputError(f"x and y must have length N={spec.N}")
    if trials < 1:
        raise InputError(f"trials must be >= 1, got {trials}")
    ell = spec.ell
    diff = build_difference_system(spec.r, spec.m)
    W = diff.V[:, :ell].T / sqrt(ell)
    Cx = circulant_dense(x)
    Cy = circulant_dense(y)

    def f(omega0):
        rows_x = Cx[omega0, :]
        rows_y = Cy[omega0, :]
        return float(np.sum((W @ rows_x) ** 2) - np.sum((W @ rows_y) ** 2))

    bound = (12.0 / ell) * fourier_sup_norm(x - y)
    max_diff = 0.0
    for _ in range(trials):
        omega = rng.permutation(spec.N)[:spec.m]
        k = int(rng.integers(1, 3))        # perturb one or two coordinates
        omega2 = omega.copy()
        pos = rng.choice(spec.m, size=min(k, spec.m), replace=False)
        pool = np.setdiff1d(np.arange(spec.N), omega)
        if pool.size >= pos.size:
            omega2[pos] = rng.choice(pool, size=pos.size, replace=False)
        max_diff = max(max_diff, abs(f(omega) - f(omega2)))
    ratio = max_diff / bound if bound > 0 else (0.0 if max_diff == 0 else np.inf)
    return BoundedDifferenceCheck(max_diff=max_diff, bound=bound,
                                  max_ratio=ratio, pairs=trials)


def report_record(check, params, statistic, bound, passed):
    """One machine-readable report line for the ripcheck surface."""
    return {"check": check, "params": params, "statistic": statistic,
            "bound": bound, "pass": bool(passed)}
