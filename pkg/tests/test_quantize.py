"""Scalar and Sigma-Delta quantization."""

import numpy as np
import pytest

from circsd.errors import InputError
from circsd.quantize import Alphabet, msq, scalar_quantize, sigma_delta, verify_sd_identity


def test_alphabet_elements():
    a = Alphabet(levels=2, step=0.5)
    assert np.allclose(a.elements, [-0.75, -0.25, 0.25, 0.75])
    assert a.max_element == 0.75
    b = Alphabet.one_bit()
    assert np.allclose(b.elements, [-1.0, 1.0])
    with pytest.raises(InputError):
        Alphabet(levels=0, step=0.5)
    with pytest.raises(InputError):
        Alphabet(levels=2, step=0.0)


def test_admits():
    # L >= mu/step + (2^r - 1)/2
    a = Alphabet(levels=4, step=0.25)
    assert a.admits(0.6, 1)        # 0.6/0.25 + 0.5 = 2.9 <= 4
    assert a.admits(0.6, 2)        # 2.4 + 1.5 = 3.9 <= 4
    assert not a.admits(0.7, 2)    # 2.8 + 1.5 = 4.3 > 4


def test_scalar_quantize_nearest_and_ties():
    a = Alphabet(levels=2, step=0.5)
    assert scalar_quantize(0.3, a) == 0.25
    assert scalar_quantize(-0.3, a) == -0.25
    assert scalar_quantize(0.0, a) == 0.25      # tie toward positive
    assert scalar_quantize(0.5, a) == 0.75      # midpoint tie toward positive
    assert scalar_quantize(10.0, a) == 0.75     # saturation
    assert scalar_quantize(-10.0, a) == -0.75
    with pytest.raises(InputError):
        scalar_quantize(np.nan, a)


def test_msq_residual_bound_in_range():
    rng = np.random.default_rng(0)
    a = Alphabet(levels=4, step=0.25)
    y = rng.uniform(-a.max_element, a.max_element, size=500)
    q = msq(y, a)
    assert set(np.round(q, 12)) <= set(np.round(a.elements, 12))
    assert np.abs(y - q).max() <= a.step / 2 + 1e-12


def test_sigma_delta_hand_example():
    # one-bit, first order, constant input 0.5:
    # rho_1 = 0.5 -> q=1, u=-0.5; rho_2 = 0 -> q=1 (tie up), u=-1;
    # rho_3 = -0.5 -> q=-1, u=0.5
    run = sigma_delta(np.array([0.5, 0.5, 0.5]), 1, Alphabet.one_bit())
    assert np.array_equal(run.q, [1.0, 1.0, -1.0])
    assert np.array_equal(run.u, [-0.5, -1.0, 0.5])


def test_sigma_delta_identity_and_stability():
    rng = np.random.default_rng(1)
    a = Alphabet(levels=8, step=0.25)
    for r in (1, 2, 3):
        mu = (a.levels - (2**r - 1) / 2) * a.step  # largest admissible bound
        y = rng.uniform(-0.95 * mu, 0.95 * mu, size=300)
        run = sigma_delta(y, r, a)
        assert verify_sd_identity(run, y) < 1e-10
        assert run.stable
        assert np.abs(run.u).max() <= a.step / 2 + 1e-12


def test_sigma_delta_batch_matches_loop():
    rng = np.random.default_rng(2)
    a = Alphabet(levels=4, step=0.25)
    Y = rng.uniform(-0.6, 0.6, size=(5, 40))
    batch = sigma_delta(Y, 2, a)
    for i in range(5):
        single = sigma_delta(Y[i], 2, a)
        assert np.array_equal(batch.q[i], single.q)
        assert np.array_equal(batch.u[i], single.u)


def test_sigma_delta_instability_detected():
    # input far beyond the admissible range overflows the state
    a = Alphabet(levels=1, step=0.25)
    run = sigma_delta(np.full(100, 3.0), 2, a)
    assert not run.stable


def test_sigma_delta_validation():
    a = Alphabet.one_bit()
    with pytest.raises(InputError):
        sigma_delta(np.array([]), 1, a)
    with pytest.raises(InputError):
        sigma_delta(np.zeros(4), 0, a)
    with pytest.raises(InputError):
        verify_sd_identity(sigma_delta(np.zeros(4), 1, a), np.zeros(5))
