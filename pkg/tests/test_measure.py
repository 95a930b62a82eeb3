import json
import math

import numpy as np
import pytest

from thinfilm import constants
from thinfilm.measure import (DensityPiece, DiscreteMeasure, InitialMeasure,
                              bl_distance, build_grid, discretize,
                              droplet_parabola, gamma, lambda_)


def uniform01():
    return InitialMeasure(pieces=(DensityPiece(0.0, 1.0, (1.0,)),))


def two_atoms():
    return InitialMeasure(atoms=((0.0, 0.5), (1.0, 0.5)))


def random_measure(rng, max_atoms=3):
    n = int(rng.integers(1, max_atoms + 1))
    xs = np.sort(rng.uniform(-2.0, 2.0, n))
    xs = np.unique(xs)
    w = rng.uniform(0.05, 1.0, xs.size)
    w = w / w.sum() * rng.uniform(0.3, 0.999)
    return InitialMeasure(atoms=tuple(zip(xs.tolist(), w.tolist())))


class TestInitialMeasure:
    def test_interval_mass_uniform(self):
        mu = uniform01()
        assert mu.interval_mass(0.0, 0.5, True, False) == 0.5
        assert mu.interval_mass(-5.0, math.inf, True, True) == 1.0

    def test_interval_mass_atom_endpoints(self):
        mu = two_atoms()
        assert mu.interval_mass(0.0, 1.0, True, False) == 0.5
        assert mu.interval_mass(0.0, 1.0, False, True) == 0.5
        assert mu.interval_mass(0.0, 1.0, True, True) == 1.0
        assert mu.interval_mass(0.0, 1.0, False, False) == 0.0

    def test_open_at_atom(self):
        mu = InitialMeasure(atoms=((0.0, 1.0),))
        assert mu.interval_mass(0.0, 1.0, False, True) == 0.0

    def test_degenerate_interval(self):
        mu = InitialMeasure(atoms=((0.0, 1.0),))
        assert mu.interval_mass(0.0, 0.0, True, True) == 1.0
        assert mu.interval_mass(0.0, 0.0, True, False) == 0.0

    def test_endpoint_order_error(self):
        with pytest.raises(ValueError):
            uniform01().interval_mass(1.0, 0.0)

    def test_total_mass_bound(self):
        with pytest.raises(ValueError):
            InitialMeasure(atoms=((0.0, 1.5),))
        with pytest.raises(ValueError):
            InitialMeasure(atoms=((0.0, 0.6), (1.0, 0.6)))

    def test_zero_measure_rejected(self):
        with pytest.raises(ValueError):
            InitialMeasure(atoms=((0.0, 0.0),))

    def test_atom_ordering(self):
        with pytest.raises(ValueError):
            InitialMeasure(atoms=((1.0, 0.2), (0.0, 0.2)))
        with pytest.raises(ValueError):
            InitialMeasure(atoms=((0.0, 0.2), (0.0, 0.2)))

    def test_negative_density_rejected(self):
        with pytest.raises(ValueError):
            DensityPiece(0.0, 1.0, (0.1, 0.0, -1.0))  # dips negative inside

    def test_overlapping_pieces_rejected(self):
        with pytest.raises(ValueError):
            InitialMeasure(pieces=(DensityPiece(0.0, 1.0, (0.4,)),
                                   DensityPiece(0.5, 1.5, (0.4,))))

    def test_droplet_profile(self):
        mu = droplet_parabola()
        assert mu.total_mass == pytest.approx(1.0, abs=1e-15)
        assert mu.support_min == -1.0 and mu.support_max == 1.0
        assert mu.pieces[0](0.0) == pytest.approx(0.75)
        assert mu.pieces[0](1.0) == pytest.approx(0.0, abs=1e-15)
        # piecewise mass is the exact polynomial antiderivative
        assert mu.interval_mass(-1.0, 0.0) == pytest.approx(0.5, abs=1e-15)

    def test_cubic_piece_mass(self):
        p = DensityPiece(0.0, 1.0, (0.0, 0.0, 0.0, 1.0))
        assert p.mass(0.0, 1.0) == pytest.approx(0.25, rel=1e-15)
        assert p.mass(-3.0, 0.5) == pytest.approx(0.5 ** 4 / 4, rel=1e-15)


class TestGammaLambda:
    def test_gamma_example(self, kc1):
        assert gamma(two_atoms(), 0.0, 1.0, kc1) == pytest.approx(0.03125)
        assert gamma(two_atoms(), 1.0, 0.0, kc1) == pytest.approx(0.03125)

    def test_gamma_degenerate(self, kc1):
        mu = two_atoms()
        assert gamma(mu, 0.25, 0.25, kc1) == 0.0   # not an atom
        assert gamma(mu, 0.0, 0.0, kc1) == 0.0     # empty half-open intervals

    def test_lambda_examples(self, kc1):
        mu = InitialMeasure(atoms=((-1.0, 0.5), (1.0, 0.5)))
        assert lambda_(mu, -1.0, 1.0, kc1) == pytest.approx(0.00390625)
        assert lambda_(mu, 0.3, 0.7, kc1) == 0.0
        delta0 = InitialMeasure(atoms=((0.0, 1.0),))
        assert lambda_(delta0, 0.0, 5.0, kc1) == pytest.approx(0.03125)

    def test_gamma_pseudometric(self, kc1, rng):
        for _ in range(40):
            mu = random_measure(rng)
            pts = rng.uniform(-3.0, 3.0, (25, 3))
            for x, y, z in pts:
                gxy = gamma(mu, x, y, kc1)
                gyz = gamma(mu, y, z, kc1)
                gxz = gamma(mu, x, z, kc1)
                assert gxy >= 0.0
                assert gxy == gamma(mu, y, x, kc1)
                assert gxz <= gxy + gyz + 1e-15


class TestGridsAndDiscretization:
    def test_grid_example_uniform(self):
        grid = build_grid(uniform01(), 1, (0.0, 1.0))
        np.testing.assert_array_equal(grid, [0.0, 0.5, 1.0])

    def test_grid_example_atom(self):
        mu = InitialMeasure(atoms=((0.3, 1.0),))
        grid = build_grid(mu, 1, (0.0, 1.0))
        np.testing.assert_array_equal(grid, [0.0, 0.3, 0.5, 1.0])

    def test_grid_nesting_exact(self):
        mu = droplet_parabola()
        prev = build_grid(mu, 1, (-1.0, 1.0))
        for n in range(2, 9):
            cur = build_grid(mu, n, (-1.0, 1.0))
            assert np.all(np.isin(prev, cur))
            prev = cur

    def test_grid_window_validation(self):
        with pytest.raises(ValueError):
            build_grid(droplet_parabola(), 2, (-0.5, 1.0))
        with pytest.raises(ValueError):
            build_grid(droplet_parabola(), 0, (-1.0, 1.0))

    def test_discretize_uniform(self):
        dm = discretize(uniform01(), np.array([0.0, 0.5]))
        np.testing.assert_allclose(dm.weights, [0.5, 0.5])

    def test_discretize_atoms(self):
        dm = discretize(two_atoms(), np.array([-1.0, 0.0, 1.0]))
        np.testing.assert_allclose(dm.weights, [0.0, 0.5, 0.5])

    def test_discretize_mass_preserved(self, rng):
        for _ in range(20):
            mu = random_measure(rng)
            lo = mu.support_min - rng.uniform(0.0, 1.0)
            grid = np.unique(rng.uniform(lo, 3.0, 10))
            grid[0] = lo
            dm = discretize(mu, np.sort(grid))
            assert dm.total_mass == pytest.approx(mu.total_mass, abs=1e-14)

    def test_discretize_validation(self):
        with pytest.raises(ValueError):
            discretize(uniform01(), np.array([0.5, 0.25]))
        with pytest.raises(ValueError):
            discretize(uniform01(), np.array([0.25, 0.5]))  # misses support

    def test_zero_weight_tracers_kept(self):
        dm = discretize(two_atoms(), np.array([-2.0, -1.0, 0.0, 1.0]))
        assert dm.weights[0] == 0.0 and dm.weights[1] == 0.0
        assert len(dm) == 4

    def test_refinement_converges_in_bl(self):
        mu = droplet_parabola()
        dists = []
        for n in range(2, 8):
            a = discretize(mu, build_grid(mu, n, (-1.0, 1.0)))
            b = discretize(mu, build_grid(mu, n + 1, (-1.0, 1.0)))
            dists.append(bl_distance(a, b))
        assert all(d2 < d1 for d1, d2 in zip(dists, dists[1:]))


class TestDiscreteMeasure:
    def test_validation(self):
        with pytest.raises(ValueError):
            DiscreteMeasure(np.array([0.0, 0.0]), np.array([0.5, 0.5]))
        with pytest.raises(ValueError):
            DiscreteMeasure(np.array([0.0, 1.0]), np.array([-0.1, 0.5]))
        with pytest.raises(ValueError):
            DiscreteMeasure(np.array([0.0, 1.0]), np.array([0.0, 0.0]))
        with pytest.raises(ValueError):
            DiscreteMeasure(np.array([0.0, 1.0]), np.array([0.7, 0.7]))


class TestBLDistance:
    def test_identical(self):
        a = DiscreteMeasure(np.array([0.0]), np.array([1.0]))
        assert bl_distance(a, a) == 0.0

    def test_two_unit_diracs_unit_gap(self):
        a = DiscreteMeasure(np.array([0.0]), np.array([1.0]))
        b = DiscreteMeasure(np.array([1.0]), np.array([1.0]))
        assert bl_distance(a, b) == pytest.approx(2.0 / 3.0, abs=1e-9)

    @pytest.mark.parametrize("delta", [0.1, 1.0, 10.0])
    def test_two_unit_diracs_closed_form(self, delta):
        a = DiscreteMeasure(np.array([0.0]), np.array([1.0]))
        b = DiscreteMeasure(np.array([delta]), np.array([1.0]))
        expect = 2.0 * delta / (2.0 + delta)
        assert bl_distance(a, b) == pytest.approx(expect, abs=1e-9)

    def test_metric_axioms(self, rng):
        ms = []
        for _ in range(12):
            n = int(rng.integers(1, 9))
            x = np.unique(np.sort(rng.uniform(-3, 3, n)))
            w = rng.uniform(0.01, 1.0, x.size)
            w /= w.sum() * (1 + 1e-12)
            ms.append(DiscreteMeasure(x, w))
        for _ in range(40):
            a, b, c = (ms[int(i)] for i in rng.integers(0, len(ms), 3))
            dab = bl_distance(a, b)
            dba = bl_distance(b, a)
            dac = bl_distance(a, c)
            dcb = bl_distance(c, b)
            assert dab >= 0.0
            assert abs(dab - dba) <= 1e-9
            assert dab <= dac + dcb + 1e-9

    def test_lower_bound_oracle(self, rng):
        # any feasible piecewise-linear test function gives a value
        # that the LP optimum must dominate
        for _ in range(25):
            na, nb = int(rng.integers(1, 6)), int(rng.integers(1, 6))
            xa = np.unique(np.sort(rng.uniform(-2, 2, na)))
            xb = np.unique(np.sort(rng.uniform(-2, 2, nb)))
            wa = rng.uniform(0.01, 1.0, xa.size)
            wa /= wa.sum() * (1 + 1e-12)
            wb = rng.uniform(0.01, 1.0, xb.size)
            wb /= wb.sum() * (1 + 1e-12)
            a = DiscreteMeasure(xa, wa)
            b = DiscreteMeasure(xb, wb)
            d = bl_distance(a, b)
            pts = np.unique(np.concatenate([xa, xb]))
            for _ in range(20):
                ell = rng.uniform(0.0, 1.0)
                bnd = 1.0 - ell
                f = np.empty(pts.size)
                f[0] = rng.uniform(-bnd, bnd)
                for k in range(1, pts.size):
                    gap = pts[k] - pts[k - 1]
                    lofv = max(-bnd, f[k - 1] - ell * gap)
                    hifv = min(bnd, f[k - 1] + ell * gap)
                    f[k] = rng.uniform(lofv, hifv)
                val = float(np.sum(wa * np.interp(xa, pts, f))
                            - np.sum(wb * np.interp(xb, pts, f)))
                assert val <= d + 1e-9

    def test_type_checked(self):
        with pytest.raises(TypeError):
            bl_distance(1.0, 2.0)


class TestSerialization:
    def test_roundtrip(self, tmp_path):
        mu = InitialMeasure(atoms=((0.25, 0.125),),
                            pieces=(DensityPiece(1.0, 2.0, (0.5, 0.1)),))
        path = tmp_path / "measure.json"
        mu.dump(path)
        back = InitialMeasure.load(path)
        assert back.atoms == mu.atoms
        assert back.pieces[0].coeffs == mu.pieces[0].coeffs
        assert back.total_mass == pytest.approx(mu.total_mass, rel=1e-15)

    def test_unknown_key_named(self):
        with pytest.raises(ValueError, match="atomz"):
            InitialMeasure.from_dict({"atomz": []})

    def test_bad_atom_entry_named(self):
        with pytest.raises(ValueError, match="atoms"):
            InitialMeasure.from_dict({"atoms": [{"x": 0.0}]})

    def test_bad_piece_entry_named(self):
        with pytest.raises(ValueError, match="density_pieces"):
            InitialMeasure.from_dict(
                {"density_pieces": [{"a": 0.0, "b": 1.0}]})
