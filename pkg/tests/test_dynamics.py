import math

import numpy as np
import pytest

from thinfilm import constants
from thinfilm.dynamics import (hbar_min_bound_check, velocity_direct,
                               velocity_fast)
from thinfilm.kernel import eval_K, eval_K_deriv

from conftest import random_state

# frozen by hand from the kernel closed forms at alpha = 1
PAIR_HBAR = 0.21696986029286058
PAIR_V = 0.002164782905447947


def fsum_reference(x, w, alpha):
    """Independent direct sum with exact (fsum) accumulation."""
    n = x.size
    hbar = np.empty(n)
    k3 = np.empty(n)
    for i in range(n):
        hbar[i] = math.fsum(w[j] * eval_K(x[i] - x[j], alpha)
                            for j in range(n))
        k3[i] = math.fsum(w[j] * eval_K_deriv(x[i] - x[j], 3, alpha)
                          for j in range(n) if j != i)
    return hbar * hbar * k3, hbar, k3


class TestDirect:
    def test_single_particle(self, kc1):
        ve = velocity_direct(np.array([0.3]), np.array([1.0]), kc1)
        assert ve.velocities[0] == 0.0
        assert ve.hbar_at[0] == 0.25
        assert ve.k3_sums[0] == 0.0

    def test_two_particle_hand_values(self, kc1):
        ve = velocity_direct(np.array([-0.5, 0.5]), np.array([0.5, 0.5]), kc1)
        assert ve.hbar_at[1] == pytest.approx(PAIR_HBAR, rel=1e-15)
        assert ve.velocities[1] == pytest.approx(PAIR_V, rel=1e-14)
        assert ve.velocities[0] == pytest.approx(-PAIR_V, rel=1e-14)

    def test_matches_fsum_reference(self, kc1, rng):
        for n in (2, 7, 33, 128):
            x, w = random_state(rng, n)
            ve = velocity_direct(x, w, kc1)
            v_ref, h_ref, k3_ref = fsum_reference(x, w, 1.0)
            np.testing.assert_allclose(ve.hbar_at, h_ref, rtol=1e-14)
            scale = np.max(np.abs(v_ref))
            assert np.max(np.abs(ve.velocities - v_ref)) <= 1e-13 * scale

    def test_validation(self, kc1):
        with pytest.raises(ValueError):
            velocity_direct(np.array([0.0, 0.0]), np.array([0.5, 0.5]), kc1)
        with pytest.raises(ValueError):
            velocity_direct(np.array([1.0, 0.0]), np.array([0.5, 0.5]), kc1)
        with pytest.raises(ValueError):
            velocity_direct(np.array([0.0, 1.0]), np.array([-0.1, 0.5]), kc1)


class TestFastEqualsDirect:
    @pytest.mark.parametrize("n", [1, 2, 3, 17, 256, 4096])
    def test_sizes(self, n, rng):
        for alpha in (0.1, 1.0, 10.0):
            kc = constants(alpha)
            x, w = random_state(rng, n, alpha=alpha)
            vf = velocity_fast(x, w, kc)
            vd = velocity_direct(x, w, kc)
            scale = max(np.max(np.abs(vd.velocities)), 1e-300)
            assert np.max(np.abs(vf.velocities - vd.velocities)) <= 1e-12 * scale
            np.testing.assert_allclose(vf.hbar_at, vd.hbar_at, rtol=1e-12)

    def test_wide_span_no_overflow(self, kc1, rng):
        # spans far beyond the exponential underflow scale stay finite
        x = np.sort(np.concatenate([rng.uniform(-2000, -1995, 50),
                                    rng.uniform(1995, 2000, 50)]))
        x = np.unique(x)
        w = np.full(x.size, 0.9 / x.size)
        vf = velocity_fast(x, w, kc1)
        vd = velocity_direct(x, w, kc1)
        assert np.all(np.isfinite(vf.velocities))
        scale = np.max(np.abs(vd.velocities))
        assert np.max(np.abs(vf.velocities - vd.velocities)) <= 1e-12 * scale

    def test_pair_example(self, kc1):
        vf = velocity_fast(np.array([-0.5, 0.5]), np.array([0.5, 0.5]), kc1)
        assert vf.velocities[1] == pytest.approx(PAIR_V, rel=1e-14)

    def test_velocity_identity(self, kc1, rng):
        x, w = random_state(rng, 40)
        ve = velocity_fast(x, w, kc1)
        np.testing.assert_array_equal(ve.velocities,
                                      ve.hbar_at ** 2 * ve.k3_sums)


class TestFieldProperties:
    def test_mirror_antisymmetry(self, kc1, rng):
        half = np.sort(rng.uniform(0.1, 3.0, 9))
        x = np.concatenate([-half[::-1], half])
        wh = rng.uniform(0.01, 0.05, 9)
        w = np.concatenate([wh[::-1], wh])
        v = velocity_fast(x, w, kc1).velocities
        np.testing.assert_allclose(v, -v[::-1], atol=1e-18)

    def test_translation_equivariance(self, kc1, rng):
        x, w = random_state(rng, 23)
        v0 = velocity_fast(x, w, kc1).velocities
        for shift in (7.25, -3.0, 1e4):
            v1 = velocity_fast(x + shift, w, kc1).velocities
            np.testing.assert_allclose(v1, v0, rtol=1e-9,
                                       atol=1e-12 * np.max(np.abs(v0)))

    def test_speed_bound(self, rng):
        for alpha in (0.5, 1.0, 2.0):
            kc = constants(alpha)
            for n in (1, 2, 13, 200):
                x, w = random_state(rng, n, alpha=alpha)
                v = velocity_fast(x, w, kc).velocities
                assert np.max(np.abs(v)) <= kc.speed_bound
                if n > 1 and np.sum(w) < 1.0:
                    assert np.max(np.abs(v)) < kc.speed_bound

    def test_lipschitz_on_ordered_cone(self, kc1, rng):
        # empirical difference quotients stay below a_const * N
        for n in (2, 8, 64):
            x, w = random_state(rng, n)
            v_x = velocity_fast(x, w, kc1).velocities
            for _ in range(20):
                y = np.sort(x + rng.uniform(-1, 1, x.size) * 0.2 * np.min(
                    np.diff(x), initial=1.0))
                if np.any(np.diff(y) <= 0):
                    continue
                v_y = velocity_fast(y, w, kc1).velocities
                num = np.sum(np.abs(v_x - v_y))
                den = np.sum(np.abs(x - y))
                if den > 0:
                    assert num / den <= kc1.a_const * x.size * (1 + 1e-9)


class TestHbarBound:
    def test_single(self, kc1):
        assert hbar_min_bound_check(np.array([0.0]), np.array([1.0]), kc1) == 0.0

    def test_pair_strictly_positive(self, kc1):
        m = hbar_min_bound_check(np.array([-0.5, 0.5]),
                                 np.array([0.5, 0.5]), kc1)
        assert m > 0.0

    def test_random_states(self, kc1, rng):
        for _ in range(50):
            x, w = random_state(rng, int(rng.integers(1, 80)))
            assert hbar_min_bound_check(x, w, kc1) >= -1e-12
