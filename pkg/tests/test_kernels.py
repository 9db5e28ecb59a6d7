"""The compiled scan kernels must agree with the numpy reference implementations."""

import numpy as np
import pytest

from mnflow import _kernels as K
from mnflow.hos import GammaParams, KurtosisUndefined, excess_kurtosis_window, gamma_of_kurtosis
from mnflow.imagecore import Image, _sample
from mnflow.mnsolver import SolverConfig, assemble, fixed_gamma, kurtosis_gamma, solve_update, square_window
from mnflow.pelrec import predict_displacement
from oracles import random_system


def test_sample_bitwise(rng):
    data = rng.random((7, 9))
    for x, y in rng.uniform(-2, 11, size=(500, 2)):
        assert K.sample(data, x, y) == _sample(data, x, y)


def test_gamma_bitwise():
    for chi in np.linspace(-60, 60, 241):
        for c, A in [(1.0, 1.0), (0.3, 4.0), (5.0, 0.5)]:
            assert K.gamma_of_kurtosis(chi, c, A) == gamma_of_kurtosis(chi, GammaParams(c, A))


def test_pooled_kurtosis(rng):
    for n_hist in range(5):
        hist = rng.laplace(size=(n_hist, 9))
        res = rng.standard_normal(9)
        ref = excess_kurtosis_window(np.concatenate((hist.ravel(), res))).chi
        assert K.pooled_kurtosis(hist, res, True) == pytest.approx(ref, abs=1e-12)
    with pytest.raises(KurtosisUndefined):
        excess_kurtosis_window(np.zeros(9))
    assert K.pooled_kurtosis(np.zeros((2, 9)), np.zeros(9), True) == 0.0


def test_assemble_bitwise(pair64):
    cur, prev = pair64
    offs = square_window(3).astype(np.int64)
    z, gx, gy = np.empty(9), np.empty(9), np.empty(9)
    for (x, y, dx, dy) in [(0, 0, 0.0, 0.0), (30, 31, 0.7, -0.2), (63, 10, 1.4, 2.6), (5, 63, -3.0, 0.5)]:
        K.assemble(cur.data, prev.data, x, y, offs, dx, dy, z, gx, gy)
        obs = assemble(cur, prev, (x, y), (dx, dy), offs)
        np.testing.assert_array_equal(z, obs.z)
        np.testing.assert_array_equal(np.column_stack((gx, gy)), obs.G)


@pytest.mark.parametrize("gamma", [0.0, 0.4, 1.0])
def test_descend_fixed_gamma(rng, gamma):
    for _ in range(20):
        obs = random_system(rng)
        ref = solve_update(obs, SolverConfig(), fixed_gamma(gamma))
        ux, uy, iters, gsum, conv, fcost, _ = K.descend(
            obs.z, obs.G[:, 0].copy(), obs.G[:, 1].copy(), np.zeros((0, 9)), K.GAMMA_FIXED, gamma,
            1.0, 1.0, 1.0, 1e-8, 50, 1e-4, 20)
        assert iters == ref.iters and conv == ref.converged
        np.testing.assert_allclose([ux, uy], ref.u, rtol=1e-9, atol=1e-12)
        assert fcost == pytest.approx(ref.final_cost, rel=1e-9)


def test_descend_kurtosis_with_history(rng):
    params = GammaParams(1.5, 2.0)
    for _ in range(20):
        obs = random_system(rng)
        hist = rng.laplace(size=(4, 9)) * 0.5
        ref = solve_update(obs, SolverConfig(gamma_params=params), kurtosis_gamma(params, hist))
        ux, uy, iters, gsum, conv, fcost, _ = K.descend(
            obs.z, obs.G[:, 0].copy(), obs.G[:, 1].copy(), hist, K.GAMMA_KURTOSIS, 0.0,
            params.c, params.A, 1.0, 1e-8, 50, 1e-4, 20)
        assert iters == ref.iters
        np.testing.assert_allclose([ux, uy], ref.u, rtol=1e-8, atol=1e-12)
        assert gsum / iters == pytest.approx(ref.mean_gamma, rel=1e-9)


def test_predict_bitwise(rng):
    vec = rng.uniform(-2, 2, size=(5, 6, 2))
    codes = {"causal_average": K.PRED_CAUSAL_AVERAGE, "previous_pixel": K.PRED_PREVIOUS, "zero": K.PRED_ZERO}
    for rule, code in codes.items():
        for y in range(5):
            for x in range(6):
                assert K.predict(vec, x, y, code) == predict_displacement(vec, (x, y), rule)
