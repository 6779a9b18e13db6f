"""Decoders: convex program vs an independent conic oracle, Sobolev dual,
and the two-stage pipeline."""

from math import sqrt

import numpy as np
import pytest

from circsd.errors import InputError, RankDeficiencyError
from circsd.decode import (
    DecodeProblem,
    decode_l1,
    decode_sd,
    shaped_residuals,
    sobolev_dual_decode,
    two_stage_decode,
)
from circsd.operators import (
    MeasurementEnsemble,
    build_difference_system,
    measure,
    measurement_matrix,
    sample_omega,
)
from circsd.quantize import Alphabet, sigma_delta

cvxpy = pytest.importorskip("cvxpy")


def _instance(rng, N, m, s, r, eps=0.0, alphabet=None):
    alphabet = alphabet or Alphabet(levels=4, step=0.25)
    xi = rng.choice([-1.0, 1.0], N)
    ens = MeasurementEnsemble(N=N, m=m, xi=xi, omega=sample_omega(N, m, rng))
    diff = build_difference_system(r, m)
    x = np.zeros(N)
    x[rng.permutation(N)[:s]] = rng.normal(size=s)
    A = measurement_matrix(ens)
    x *= 0.6 / np.max(np.abs(A @ x))
    e = np.zeros(m)
    if eps > 0:
        e = rng.normal(size=m)
        e *= 0.9 * eps * sqrt(m) / np.linalg.norm(e)
    run = sigma_delta(A @ x + e, r, alphabet)
    return ens, diff, x, e, run, alphabet


def _oracle_objective(A, r, q, radius, nu_radius):
    m, N = A.shape
    Binv = np.linalg.matrix_power(np.tril(np.ones((m, m))), r)
    z = cvxpy.Variable(N)
    nu = cvxpy.Variable(m)
    cons = [cvxpy.norm(Binv @ (A @ z + nu - q)) <= radius]
    cons.append(cvxpy.norm(nu) <= nu_radius if nu_radius > 0 else nu == 0)
    prob = cvxpy.Problem(cvxpy.Minimize(cvxpy.norm1(z)), cons)
    prob.solve(solver=cvxpy.CLARABEL)
    return prob.value


@pytest.mark.parametrize("seed,r,eps", [(0, 1, 0.0), (1, 2, 0.0), (2, 2, 0.02),
                                        (3, 1, 0.01), (4, 2, 0.0)])
def test_decode_sd_matches_oracle(seed, r, eps):
    rng = np.random.default_rng(seed)
    ens, diff, x, e, run, a = _instance(rng, N=20, m=15, s=2, r=r, eps=eps)
    gamma = a.step / 2
    prob = DecodeProblem(ens=ens, diff=diff, q=run.q, gamma_r=gamma, eps=eps)
    res = decode_sd(prob)
    assert res.converged
    assert res.feas_quant <= prob.tol_feas
    assert res.feas_noise <= prob.tol_feas
    oval = _oracle_objective(measurement_matrix(ens), r, run.q,
                             gamma * sqrt(ens.m), eps * sqrt(ens.m))
    assert abs(res.objective - oval) <= 1e-4 * max(1.0, abs(oval))


def test_truth_is_feasible():
    rng = np.random.default_rng(10)
    ens, diff, x, e, run, a = _instance(rng, N=24, m=16, s=2, r=2)
    prob = DecodeProblem(ens=ens, diff=diff, q=run.q, gamma_r=a.step / 2)
    res1, res2 = shaped_residuals(prob, x, e)
    assert res1 <= 1e-9 and res2 <= 1e-9


def test_zero_signal_recovers_zero():
    # q = quantization of zero measurements: z=0 is feasible, so the
    # minimizer has zero l1 norm.
    rng = np.random.default_rng(11)
    N, m, r = 16, 12, 1
    ens = MeasurementEnsemble(N=N, m=m, xi=rng.choice([-1.0, 1.0], N),
                              omega=sample_omega(N, m, rng))
    diff = build_difference_system(r, m)
    a = Alphabet(levels=4, step=0.25)
    run = sigma_delta(np.zeros(m), r, a)
    res = decode_sd(DecodeProblem(ens=ens, diff=diff, q=run.q, gamma_r=a.step / 2))
    assert res.converged
    assert res.objective <= 1e-6


def test_tiny_radius_exact_recovery():
    rng = np.random.default_rng(12)
    N, m = 16, 12
    ens = MeasurementEnsemble(N=N, m=m, xi=rng.choice([-1.0, 1.0], N),
                              omega=sample_omega(N, m, rng))
    diff = build_difference_system(1, m)
    x = np.zeros(N)
    x[4] = 0.8
    y = measure(ens, x)
    res = decode_sd(DecodeProblem(ens=ens, diff=diff, q=y, gamma_r=1e-9))
    assert np.linalg.norm(res.xhat - x) < 1e-5


def test_decode_l1_noiseless_exact():
    rng = np.random.default_rng(13)
    N, m = 32, 24
    ens = MeasurementEnsemble(N=N, m=m, xi=rng.choice([-1.0, 1.0], N),
                              omega=sample_omega(N, m, rng))
    x = np.zeros(N)
    x[rng.permutation(N)[:2]] = [0.5, -0.7]
    res = decode_l1(ens, measure(ens, x), 0.0)
    assert res.converged
    assert np.linalg.norm(res.xhat - x) < 1e-5


def test_decode_validation():
    rng = np.random.default_rng(14)
    N, m = 16, 8
    ens = MeasurementEnsemble(N=N, m=m, xi=rng.normal(size=N),
                              omega=sample_omega(N, m, rng))
    diff = build_difference_system(1, m)
    with pytest.raises(InputError):
        DecodeProblem(ens=ens, diff=diff, q=np.zeros(m), gamma_r=0.0)
    with pytest.raises(InputError):
        DecodeProblem(ens=ens, diff=diff, q=np.zeros(m + 1), gamma_r=0.1)
    with pytest.raises(InputError):
        DecodeProblem(ens=ens, diff=diff, q=np.zeros(m), gamma_r=0.1, eps=-1.0)
    with pytest.raises(InputError):
        decode_l1(ens, np.zeros(m), -0.5)
    with pytest.raises(InputError):
        DecodeProblem(ens=ens, diff=build_difference_system(1, m + 1),
                      q=np.zeros(m), gamma_r=0.1)


def test_sobolev_dual_on_true_support():
    rng = np.random.default_rng(15)
    N, m, s, r = 32, 24, 2, 1
    ens, diff, x, e, run, a = _instance(rng, N=N, m=m, s=s, r=r,
                                        alphabet=Alphabet.one_bit())
    support = np.flatnonzero(x) + 1
    xhat = sobolev_dual_decode(ens, diff, run.q, support)
    assert np.array_equal(np.flatnonzero(xhat) + 1, support)
    # reconstruction is asymptotically accurate; at this scale just sane
    assert np.linalg.norm(xhat - x) < np.linalg.norm(x)


def test_sobolev_dual_exact_without_quantization():
    rng = np.random.default_rng(16)
    N, m, r = 32, 20, 2
    ens = MeasurementEnsemble(N=N, m=m, xi=rng.normal(size=N),
                              omega=sample_omega(N, m, rng))
    diff = build_difference_system(r, m)
    x = np.zeros(N)
    support = np.array([3, 17, 25])
    x[support - 1] = rng.normal(size=3)
    xhat = sobolev_dual_decode(ens, diff, measure(ens, x), support)
    assert np.allclose(xhat, x, atol=1e-8)


def test_sobolev_dual_validation():
    rng = np.random.default_rng(17)
    N, m = 16, 8
    ens = MeasurementEnsemble(N=N, m=m, xi=rng.normal(size=N),
                              omega=sample_omega(N, m, rng))
    diff = build_difference_system(1, m)
    q = np.zeros(m)
    with pytest.raises(InputError):
        sobolev_dual_decode(ens, diff, q, np.arange(1, m + 2))
    with pytest.raises(InputError):
        sobolev_dual_decode(ens, diff, q, np.array([0]))
    with pytest.raises(InputError):
        sobolev_dual_decode(ens, diff, q, np.array([2, 2]))
    assert np.array_equal(sobolev_dual_decode(ens, diff, q, np.array([], dtype=int)),
                          np.zeros(N))


def test_sobolev_dual_rank_deficiency():
    # a zero generator makes every measurement column zero
    ens = MeasurementEnsemble(N=8, m=4, xi=np.zeros(8), omega=np.array([1, 2, 3, 4]))
    diff = build_difference_system(1, 4)
    with pytest.raises(RankDeficiencyError):
        sobolev_dual_decode(ens, diff, np.zeros(4), np.array([1, 2]))


def test_two_stage_decode():
    rng = np.random.default_rng(18)
    N, m, s, r = 32, 24, 2, 1
    ens, diff, x, e, run, a = _instance(rng, N=N, m=m, s=s, r=r)
    xhat = two_stage_decode(ens, diff, run.q, s, a.step / 2)
    assert np.count_nonzero(xhat) <= s
    assert np.linalg.norm(xhat - x) < np.linalg.norm(x)
    assert np.array_equal(two_stage_decode(ens, diff, run.q, 0, a.step / 2),
                          np.zeros(N))
    with pytest.raises(InputError):
        two_stage_decode(ens, diff, run.q, m + 1, a.step / 2)
