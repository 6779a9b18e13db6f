"""Linear-algebra core: circulant actions, row subsampling, difference powers.

Conventions
-----------
Index vectors (``omega``) are 1-based externally, matching the usual [N]
notation; they are converted to 0-based offsets internally.

The circulant matrix generated by ``xi`` is the circular-convolution matrix:
its first column is ``xi`` and entry (j, i) is ``xi[(j - i) mod N]`` (0-based).
With this orientation the action is symmetric in generator and argument,
``C_xi x == C_x xi``, which the rest of the package relies on.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from circsd.errors import InputError

# Below this size the direct O(N^2) product is used; above it, the FFT
# diagonalization.  Both paths are exposed for cross-checking.
FFT_THRESHOLD = 64

# Tolerated imaginary residue (relative to ||x||_2) when truncating the FFT
# path back to the reals.
_IMAG_RESIDUE_REL = 1e-9


@dataclass(frozen=True)
class MeasurementEnsemble:
    """A partial circulant measurement map: m rows of the circulant matrix
    generated by ``xi``, selected (without replacement) by ``omega``."""

    N: int
    m: int
    xi: np.ndarray
    omega: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        xi = np.asarray(self.xi, dtype=float)
        omega = np.asarray(self.omega, dtype=np.int64)
        if self.N <= 0 or self.m <= 0 or self.m > self.N:
            raise InputError(f"need 1 <= m <= N, got N={self.N}, m={self.m}")
        if xi.shape != (self.N,):
            raise InputError(f"xi must have length N={self.N}, got shape {xi.shape}")
        if not np.all(np.isfinite(xi)):
            raise InputError("xi has non-finite entries")
        if omega.shape != (self.m,):
            raise InputError(f"omega must have length m={self.m}, got shape {omega.shape}")
        _validate_omega(omega, self.N)
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "omega", omega)

    @property
    def xi_hat(self):
        """DFT of the generator, cached for repeated operator applications."""
        if "xi_hat" not in self._cache:
            self._cache["xi_hat"] = np.fft.fft(self.xi)
        return self._cache["xi_hat"]

    def dense(self):
        """Dense m x N measurement matrix, cached."""
        if "dense" not in self._cache:
            self._cache["dense"] = circulant_dense(self.xi)[self.omega - 1]
        return self._cache["dense"]


@dataclass(frozen=True)
class DifferenceSystem:
    """The r-th power of the first-difference matrix, its inverse, and the
    SVD of the inverse (singular values sorted descending)."""

    r: int
    m: int
    forward: np.ndarray      # m x m, lower triangular, integer entries
    inverse: np.ndarray      # m x m, inverse of `forward`
    U: np.ndarray
    singular_values: np.ndarray
    V: np.ndarray            # columns are right singular vectors

    def apply_inverse(self, v):
        """inverse @ v, computed as r repeated cumulative sums."""
        return apply_inverse_difference(v, self.r)


@dataclass(frozen=True)
class SparseSignal:
    """A vector stored as (support, values); indices are 1-based."""

    N: int
    support: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        support = np.asarray(self.support, dtype=np.int64)
        values = np.asarray(self.values, dtype=float)
        if support.shape != values.shape or support.ndim != 1:
            raise InputError("support and values must be 1-d arrays of equal length")
        if support.size and (support.min() < 1 or support.max() > self.N):
            raise InputError("support indices out of range")
        if np.unique(support).size != support.size:
            raise InputError("support indices must be distinct")
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "values", values)

    def to_dense(self):
        x = np.zeros(self.N)
        x[self.support - 1] = self.values
        return x


def _validate_omega(omega, N):
    if omega.size == 0:
        raise InputError("omega is empty")
    if omega.min() < 1 or omega.max() > N:
        raise InputError("omega entries must lie in 1..N")
    if np.unique(omega).size != omega.size:
        raise InputError("omega entries must be pairwise distinct")


def circulant_dense(xi):
    """Explicit circulant matrix generated by ``xi`` (first column = xi)."""
    xi = np.asarray(xi, dtype=float)
    N = xi.shape[0]
    idx = (np.arange(N)[:, None] - np.arange(N)[None, :]) % N
    return xi[idx]


def apply_circulant(xi, x, method="auto"):
    """Circular convolution: the circulant matrix of ``xi`` applied to ``x``.

    ``method`` selects the computation path: "direct" builds the dense
    matrix, "fft" uses the Fourier diagonalization, "auto" switches on size.
    """
    xi = np.asarray(xi, dtype=float)
    x = np.asarray(x, dtype=float)
    if xi.shape != x.shape or xi.ndim != 1:
        raise InputError(f"length mismatch: xi {xi.shape} vs x {x.shape}")
    N = xi.shape[0]
    if method == "auto":
        method = "fft" if N > FFT_THRESHOLD else "direct"
    if method == "direct":
        return circulant_dense(xi) @ x
    if method == "fft":
        out = np.fft.ifft(np.fft.fft(xi) * np.fft.fft(x))
        return _real_part(out, x)
    raise InputError(f"unknown method {method!r}")


def _real_part(z, x):
    residue = np.abs(z.imag).max() if z.size else 0.0
    scale = max(np.linalg.norm(x), 1e-300)
    if residue > _IMAG_RESIDUE_REL * scale:
        raise FloatingPointError(
            f"imaginary residue {residue:.3e} exceeds {_IMAG_RESIDUE_REL:g} * ||x||"
        )
    return z.real.copy()


def subsample(v, omega):
    """Select entries v[omega_j] (omega 1-based, distinct)."""
    v = np.asarray(v)
    omega = np.asarray(omega, dtype=np.int64)
    _validate_omega(omega, v.shape[0])
    return v[omega - 1]


def sample_omega(N, m, rng):
    """m distinct indices from 1..N, uniform over ordered samples without
    replacement (Fisher-Yates draws from the shrinking pool)."""
    if not 1 <= m <= N:
        raise InputError(f"need 1 <= m <= N, got N={N}, m={m}")
    return rng.permutation(N)[:m].astype(np.int64) + 1


def measure(ens, x):
    """Apply the partial circulant map: subsample the convolution of xi, x."""
    x = np.asarray(x, dtype=float)
    if x.shape != (ens.N,):
        raise InputError(f"x must have length N={ens.N}")
    if ens.N <= FFT_THRESHOLD:
        return ens.dense() @ x
    full = _real_part(np.fft.ifft(ens.xi_hat * np.fft.fft(x)), x)
    return full[ens.omega - 1]


def measure_adjoint(ens, v):
    """Transpose of `measure`: scatter v to the sampled rows, apply C^T."""
    v = np.asarray(v, dtype=float)
    if v.shape != (ens.m,):
        raise InputError(f"v must have length m={ens.m}")
    if ens.N <= FFT_THRESHOLD:
        return ens.dense().T @ v
    full = np.zeros(ens.N)
    full[ens.omega - 1] = v
    # C(xi)^T is the circulant generated by the index-reversed xi; in the
    # Fourier domain that is multiplication by conj(fft(xi)).
    out = np.fft.ifft(np.conj(ens.xi_hat) * np.fft.fft(full))
    return _real_part(out, v)


def measurement_matrix(ens):
    """Dense m x N matrix realizing `measure` (test / small-scale oracle)."""
    return ens.dense().copy()


def apply_difference(v, r):
    """r-th difference power applied along the last axis (zero initial state)."""
    v = np.asarray(v, dtype=float)
    for _ in range(r):
        v = np.diff(v, prepend=0.0) if v.ndim == 1 else np.diff(v, axis=-1, prepend=0.0)
    return v


def apply_inverse_difference(v, r):
    """Inverse of `apply_difference`: r repeated cumulative sums."""
    v = np.asarray(v, dtype=float)
    for _ in range(r):
        v = np.cumsum(v, axis=-1)
    return v


def apply_inverse_difference_t(v, r):
    """Transpose of `apply_inverse_difference` (reversed cumulative sums)."""
    v = np.asarray(v, dtype=float)
    for _ in range(r):
        v = np.cumsum(v[..., ::-1], axis=-1)[..., ::-1]
    return v


def build_difference_system(r, m):
    """Build D^r, D^{-r} and the SVD of D^{-r} for the m x m first-difference
    matrix (unit diagonal, -1 subdiagonal)."""
    if r < 1:
        raise InputError(f"order must be >= 1, got {r}")
    if m < r:
        raise InputError(f"need m >= r, got m={m}, r={r}")
    D = np.eye(m) - np.eye(m, k=-1)
    forward = np.linalg.matrix_power(D, r)
    # D^{-1} is the running-sum matrix; its powers stay integer-exact here.
    inverse = np.linalg.matrix_power(np.tril(np.ones((m, m))), r)
    U, s, Vh = np.linalg.svd(inverse)
    return DifferenceSystem(r=r, m=m, forward=forward, inverse=inverse,
                            U=U, singular_values=s, V=Vh.T)


def project_top(V, ell, w):
    """First ``ell`` coordinates of V^T w: the components along the right
    singular vectors with the largest singular values."""
    V = np.asarray(V)
    w = np.asarray(w)
    m = V.shape[0]
    if not 1 <= ell <= m:
        raise InputError(f"need 1 <= ell <= m={m}, got ell={ell}")
    return V[:, :ell].T @ w


def fourier_sup_norm(x):
    """Sup norm of the (unnormalized) DFT of x."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise InputError("x has non-finite entries")
    return float(np.abs(np.fft.fft(x)).max())
