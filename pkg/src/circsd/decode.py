"""Reconstruction decoders.

`decode_sd` solves

    min ||z||_1  s.t.  ||Binv(A z + nu - q)||_2 <= gamma_r * sqrt(m)
                       ||nu||_2 <= eps * sqrt(m)

where Binv is the inverse r-th difference (r repeated cumulative sums).
The solver substitutes w = Binv(A z + nu - q), which turns the badly
conditioned shaped ball into the affine constraint A z + nu - D^r w = q
plus a plain ball on w, and runs ADMM with an exact (Cholesky-factored)
projection onto the affine set and residual-balanced penalty updates.
Convergence is declared from the feasibility residuals and a duality gap
evaluated at a rescaled dual-feasible multiplier.

`decode_l1` is the plain noise-aware l1 program with a single residual
ball (the same machinery with r = 0).  `sobolev_dual_decode` applies the
noise-shaping-adapted left inverse on a known support, and
`two_stage_decode` chains an l1 support estimate with that left inverse.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import sqrt

import numpy as np

from scipy.linalg import cho_factor, cho_solve

from circsd.errors import InputError, RankDeficiencyError
from circsd.operators import (
    DifferenceSystem,
    MeasurementEnsemble,
    apply_inverse_difference,
    measure,
    measurement_matrix,
)

_CHECK_EVERY = 25


@dataclass(frozen=True)
class DecodeProblem:
    """One instance of the quantization-aware program."""

    ens: MeasurementEnsemble
    diff: DifferenceSystem
    q: np.ndarray
    gamma_r: float
    eps: float = 0.0
    tol_feas: float | None = None   # default 1e-6 * sqrt(m)
    tol_obj: float = 1e-6           # relative duality gap
    max_iters: int = 50_000

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        if q.shape != (self.ens.m,):
            raise InputError(f"q must have length m={self.ens.m}")
        if self.diff.m != self.ens.m:
            raise InputError(
                f"difference system size {self.diff.m} != m={self.ens.m}")
        if self.gamma_r <= 0:
            raise InputError(f"gamma_r must be positive, got {self.gamma_r}")
        if self.eps < 0:
            raise InputError(f"eps must be nonnegative, got {self.eps}")
        object.__setattr__(self, "q", q)
        if self.tol_feas is None:
            object.__setattr__(self, "tol_feas", 1e-6 * sqrt(self.ens.m))


@dataclass(frozen=True)
class DecodeResult:
    xhat: np.ndarray
    nuhat: np.ndarray
    objective: float
    feas_quant: float   # residual of the shaped-measurement ball constraint
    feas_noise: float   # residual of the noise ball constraint
    iterations: int
    converged: bool


def _soft_threshold(z, t):
    return np.sign(z) * np.maximum(np.abs(z) - t, 0.0)


def _project_ball(v, center, radius):
    d = v - center
    n = np.linalg.norm(d)
    if n <= radius or n == 0.0:
        return v
    return center + d * (radius / n)


def _admm(A, Dr, q, r1, r2, tol_feas, tol_obj, max_iters):
    """ADMM for  min ||z||_1  s.t.  Az + nu - Dr w = q, ||w|| <= r1,
    ||nu|| <= r2.  Dr=None means the identity; r2=0 pins nu to zero.

    The consensus split puts the affine constraint in one block (exact
    projection through a Cholesky factor of the m x m normal matrix) and
    the l1 term plus the two balls in the other.  The penalty is rebalanced
    from the primal/dual residual ratio during the first half of the
    iteration budget, and the v-update is over-relaxed.  The returned
    iterate is the affine-projected one, so its only constraint violations
    are on the balls.
    """
    relax = 1.8
    m, N = A.shape
    has_nu = r2 > 0.0

    def dr(w):
        return w if Dr is None else Dr @ w

    def drt(w):
        return w if Dr is None else Dr.T @ w

    gram = A @ A.T
    gram += np.eye(m) if Dr is None else Dr @ Dr.T
    if has_nu:
        gram += np.eye(m)
    cf = cho_factor(gram)

    def proj_affine(az, anu, aw):
        resid = A @ az - dr(aw) - q
        if has_nu:
            resid = resid + anu
        lam = cho_solve(cf, resid)
        return (az - A.T @ lam,
                (anu - lam) if has_nu else None,
                aw + drt(lam),
                lam)

    zeros_m = np.zeros(m)
    vz, dz = np.zeros(N), np.zeros(N)
    vw, dw = zeros_m.copy(), zeros_m.copy()
    vnu = dnu = None
    if has_nu:
        vnu, dnu = zeros_m.copy(), zeros_m.copy()

    gamma = 0.1   # soft-threshold level; ADMM penalty is 1/gamma
    uz = vz
    unu, uw, lam = vnu, vw, zeros_m
    converged = False
    it = 0
    while it < max_iters:
        it += 1
        uz, unu, uw, lam = proj_affine(vz - dz,
                                       (vnu - dnu) if has_nu else None,
                                       vw - dw)
        hz = relax * uz + (1.0 - relax) * vz
        hw = relax * uw + (1.0 - relax) * vw
        hnu = relax * unu + (1.0 - relax) * vnu if has_nu else None
        vz_old, vw_old, vnu_old = vz, vw, vnu
        vz = _soft_threshold(hz + dz, gamma)
        vw = _project_ball(hw + dw, zeros_m, r1)
        if has_nu:
            vnu = _project_ball(hnu + dnu, zeros_m, r2)
        dz = dz + hz - vz
        dw = dw + hw - vw
        if has_nu:
            dnu = dnu + hnu - vnu

        if it % _CHECK_EVERY == 0 or it == max_iters:
            obj = float(np.abs(uz).sum())
            res1 = max(0.0, float(np.linalg.norm(uw)) - r1)
            res2 = max(0.0, float(np.linalg.norm(unu)) - r2) if has_nu else 0.0
            # Duality gap at the rescaled affine multiplier.
            lamd = lam / gamma
            g = A.T @ lamd
            scale = max(1.0, float(np.abs(g).max()) if g.size else 1.0)
            dual = abs(float(q @ lamd)) - r1 * float(np.linalg.norm(drt(lamd)))
            if has_nu:
                dual -= r2 * float(np.linalg.norm(lamd))
            gap = obj - dual / scale
            # Stop strictly inside the feasibility tolerance so the
            # reported residuals sit below it with margin.
            if res1 <= 0.5 * tol_feas and res2 <= 0.5 * tol_feas \
                    and gap <= tol_obj * max(1.0, obj):
                converged = True
                break

            if it <= max_iters // 2:
                rp = np.linalg.norm(uz - vz) ** 2 + np.linalg.norm(uw - vw) ** 2
                rd = np.linalg.norm(vz - vz_old) ** 2 + np.linalg.norm(vw - vw_old) ** 2
                if has_nu:
                    rp += np.linalg.norm(unu - vnu) ** 2
                    rd += np.linalg.norm(vnu - vnu_old) ** 2
                rp, rd = sqrt(rp), sqrt(rd) / gamma
                if rp > 10.0 * rd:
                    gamma *= 0.5
                    dz, dw = 0.5 * dz, 0.5 * dw
                    if has_nu:
                        dnu = 0.5 * dnu
                elif rd > 10.0 * rp:
                    gamma *= 2.0
                    dz, dw = 2.0 * dz, 2.0 * dw
                    if has_nu:
                        dnu = 2.0 * dnu

    obj = float(np.abs(uz).sum())
    res1 = max(0.0, float(np.linalg.norm(uw)) - r1)
    res2 = max(0.0, float(np.linalg.norm(unu)) - r2) if has_nu else 0.0
    return uz, (unu if has_nu else zeros_m), obj, res1, res2, it, converged


def decode_sd(prob):
    """Solve the quantization-aware program for a DecodeProblem."""
    ens = prob.ens
    m = ens.m
    z, nu, obj, res1, res2, it, ok = _admm(
        A=measurement_matrix(ens),
        Dr=prob.diff.forward,
        q=prob.q,
        r1=prob.gamma_r * sqrt(m),
        r2=prob.eps * sqrt(m),
        tol_feas=prob.tol_feas, tol_obj=prob.tol_obj, max_iters=prob.max_iters,
    )
    return DecodeResult(xhat=z, nuhat=nu, objective=obj, feas_quant=res1,
                        feas_noise=res2, iterations=it, converged=ok)


def decode_l1(ens, y, eps, tol_feas=None, tol_obj=1e-6, max_iters=50_000):
    """min ||z||_1 subject to ||Az - y||_2 <= eps."""
    y = np.asarray(y, dtype=float)
    if y.shape != (ens.m,):
        raise InputError(f"y must have length m={ens.m}")
    if eps < 0:
        raise InputError(f"eps must be nonnegative, got {eps}")
    if tol_feas is None:
        tol_feas = 1e-6 * sqrt(ens.m)
    z, nu, obj, res1, res2, it, ok = _admm(
        A=measurement_matrix(ens),
        Dr=None,
        q=y, r1=eps, r2=0.0,
        tol_feas=tol_feas, tol_obj=tol_obj, max_iters=max_iters,
    )
    return DecodeResult(xhat=z, nuhat=nu, objective=obj, feas_quant=res1,
                        feas_noise=res2, iterations=it, converged=ok)


def shaped_residuals(prob, x, e):
    """Constraint residuals of a candidate pair (x, e); both are <= 0 when
    the pair is feasible for the program."""
    r = prob.diff.r
    m = prob.ens.m
    shaped = apply_inverse_difference(measure(prob.ens, x) + e - prob.q, r)
    res1 = float(np.linalg.norm(shaped)) - prob.gamma_r * sqrt(m)
    res2 = float(np.linalg.norm(e)) - prob.eps * sqrt(m)
    return res1, res2


def sobolev_dual_decode(ens, diff, q, support):
    """Least-squares reconstruction on a known support through the shaped
    system: restrict to the support columns, pre-apply the inverse
    difference to both sides, and solve."""
    q = np.asarray(q, dtype=float)
    support = np.asarray(support, dtype=np.int64)
    xhat = np.zeros(ens.N)
    if support.size == 0:
        return xhat
    if support.size > ens.m:
        raise InputError(f"support size {support.size} exceeds m={ens.m}")
    if support.min() < 1 or support.max() > ens.N:
        raise InputError("support indices out of range")
    if np.unique(support).size != support.size:
        raise InputError("support indices must be distinct")
    cols = np.stack([measure(ens, _basis(ens.N, k)) for k in support], axis=1)
    lhs = apply_inverse_difference(cols.T, diff.r).T   # Binv applied columnwise
    rhs = apply_inverse_difference(q, diff.r)
    sol, _, rank, _ = np.linalg.lstsq(lhs, rhs, rcond=None)
    if rank < support.size:
        raise RankDeficiencyError(
            f"shaped submatrix on support {support.tolist()} has rank "
            f"{rank} < {support.size}", support=support)
    xhat[support - 1] = sol
    return xhat


def two_stage_decode(ens, diff, q, s, gamma_r, eps=0.0, **l1_kwargs):
    """Estimate the support with the l1 decoder, then reconstruct on it
    with the shaped least-squares decoder."""
    if s < 0 or s > ens.m:
        raise InputError(f"need 0 <= s <= m, got s={s}")
    if s == 0:
        return np.zeros(ens.N)
    radius = (gamma_r + eps) * sqrt(ens.m)
    stage1 = decode_l1(ens, np.asarray(q, dtype=float), radius, **l1_kwargs)
    # Top-s by magnitude; stable sort keeps the smaller index on ties.
    order = np.argsort(-np.abs(stage1.xhat), kind="stable")
    support = np.sort(order[:s]) + 1
    return sobolev_dual_decode(ens, diff, q, support)


def _basis(N, k):
    e = np.zeros(N)
    e[k - 1] = 1.0
    return e
