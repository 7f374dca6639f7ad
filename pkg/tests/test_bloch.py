from __future__ import annotations

import numpy as np
import pytest
from conftest import exact, random_system

from discrete_fermions.algebra import (
    ValidationError,
    action,
    apply_gauge,
    chain_roots,
    closed_chain,
    projector_from_fermion_matrix,
    random_gauge,
)
from discrete_fermions.bloch import (
    BlochConfiguration,
    LocalCorrelation,
    bloch_configuration,
    chain_roots_from_bloch,
    configuration_gram,
    correlation_matrices,
    gauge_orbit_distance,
    gram_signature,
    local_correlation,
    orientation,
    reconstruct_fermion_matrix,
)
from discrete_fermions.closedform import degenerate_three_point_family, four_point_family, two_point_critical


class TestLocalCorrelation:
    def test_two_point_system(self):
        psi = two_point_critical()
        a, b = local_correlation(psi, 1), local_correlation(psi, 2)
        assert a.rho == pytest.approx(1) and b.rho == pytest.approx(1)
        np.testing.assert_allclose(a.bloch, [0, 0, 1], atol=1e-15)
        np.testing.assert_allclose(b.bloch, [0, 0, -1], atol=1e-15)

    @pytest.mark.parametrize("alpha", [0.0, 0.5, 2.0])
    def test_degenerate_point_is_empty(self, alpha):
        c = local_correlation(degenerate_three_point_family(alpha), 3)
        assert c.rho == pytest.approx(0, abs=1e-15)
        np.testing.assert_allclose(c.bloch, 0, atol=1e-15)

    def test_requires_two_particles(self):
        psi = random_system(3, 1, 0)
        with pytest.raises(ValueError, match="two particles"):
            local_correlation(psi, 1)

    def test_correlation_matrices_hermitian(self):
        f = correlation_matrices(random_system(4, 2, 5))
        np.testing.assert_allclose(f, np.conj(np.swapaxes(f, 1, 2)), atol=1e-10)

    def test_matrix_round_trip(self):
        psi = random_system(3, 2, 9)
        f = correlation_matrices(psi)
        for x in range(3):
            np.testing.assert_allclose(local_correlation(psi, x + 1).matrix(), f[x], atol=1e-10)


class TestChainRootsFromBloch:
    def test_opposite_unit_vectors(self):
        a = LocalCorrelation(1.0, np.array([0, 0, 1.0]))
        b = LocalCorrelation(1.0, np.array([0, 0, -1.0]))
        spec = chain_roots_from_bloch(a, b)
        assert spec.lambda_plus == 0 and spec.lambda_minus == 0

    def test_same_point(self):
        a = LocalCorrelation(1.0, np.array([0, 0, 1.0]))
        spec = chain_roots_from_bloch(a, a)
        assert spec.lambda_plus == pytest.approx(1) and spec.lambda_minus == pytest.approx(0)

    def test_triangle_pair(self, derived):
        r = 2 / 3
        a = LocalCorrelation(r, r * np.array([1.0, 0, 0]))
        b = LocalCorrelation(r, r * np.array([-0.5, np.sqrt(3) / 2, 0]))
        spec = chain_roots_from_bloch(a, b)
        hi, lo = (exact(s) for s in derived["bloch_roots_120"])
        assert spec.lambda_plus.real == pytest.approx(hi, abs=1e-15)
        assert spec.lambda_minus.real == pytest.approx(lo, abs=1e-15)

    @pytest.mark.parametrize("seed", range(10))
    def test_agrees_with_closed_chain(self, seed):
        psi = random_system(3, 2, seed)
        P = projector_from_fermion_matrix(psi).entries
        for x in (1, 2, 3):
            for y in (1, 2, 3):
                direct = chain_roots(closed_chain(P, x, y))
                via = chain_roots_from_bloch(local_correlation(psi, x), local_correlation(psi, y))
                scale = max(1.0, abs(direct.lambda_plus))
                assert abs(direct.lambda_plus - via.lambda_plus) <= 1e-8 * scale
                assert abs(direct.lambda_minus - via.lambda_minus) <= 1e-8 * scale
                assert (via.lambda_plus * via.lambda_minus).real >= -1e-9 * scale ** 2


class TestReconstruction:
    def test_two_point_round_trip(self):
        config = bloch_configuration(two_point_critical())
        psi = reconstruct_fermion_matrix(config)
        psi.validate()
        back = bloch_configuration(psi)
        np.testing.assert_allclose(back.rho, config.rho, atol=1e-12)
        np.testing.assert_allclose(configuration_gram(back)[0], configuration_gram(config)[0], atol=1e-12)

    def test_triangle_gives_one_third(self):
        r = 2 / 3
        dirs = np.array([[1, 0, 0], [-0.5, np.sqrt(3) / 2, 0], [-0.5, -np.sqrt(3) / 2, 0]])
        psi = reconstruct_fermion_matrix(BlochConfiguration([r] * 3, r * dirs))
        assert action(projector_from_fermion_matrix(psi), 0.5) == pytest.approx(1 / 3, abs=1e-12)

    def test_rejects_non_zero_sum(self):
        with pytest.raises(ValidationError, match="sum to zero"):
            reconstruct_fermion_matrix(BlochConfiguration([1, 1], [[0, 0, 1], [0, 0, -0.5]]))

    def test_rejects_short_vector(self):
        with pytest.raises(ValidationError, match=r"\|v_1\|"):
            reconstruct_fermion_matrix(BlochConfiguration([1.5, 0.5], [[0, 0, 1], [0, 0, -1]]))

    def test_degenerate_point_gives_zero_block(self):
        psi = reconstruct_fermion_matrix(bloch_configuration(degenerate_three_point_family(1.0)))
        np.testing.assert_allclose(psi.blocks()[2], 0, atol=1e-15)

    @pytest.mark.parametrize("seed", range(10))
    def test_random_round_trip(self, seed):
        config = bloch_configuration(random_system(4, 2, seed))
        back = bloch_configuration(reconstruct_fermion_matrix(config, tol=1e-8))
        scale = max(1.0, np.abs(config.bloch).max()) ** 2
        np.testing.assert_allclose(back.rho, config.rho, atol=1e-8 * scale)
        np.testing.assert_allclose(configuration_gram(back)[0], configuration_gram(config)[0], atol=1e-8 * scale)


class TestGram:
    def test_tetrahedron(self, derived):
        gram, rho = configuration_gram(bloch_configuration(four_point_family(2 * np.pi / 3)))
        off = gram[~np.eye(4, dtype=bool)]
        np.testing.assert_allclose(off, exact(derived["tetra_gram"]), atol=1e-14)
        np.testing.assert_allclose(rho, 0.5, atol=1e-14)

    def test_triangle(self, derived):
        r = 2 / 3
        dirs = np.array([[1, 0, 0], [-0.5, np.sqrt(3) / 2, 0], [-0.5, -np.sqrt(3) / 2, 0]])
        gram, _ = configuration_gram(BlochConfiguration([r] * 3, r * dirs))
        np.testing.assert_allclose(gram[~np.eye(3, dtype=bool)], exact(derived["triangle_gram"]), atol=1e-15)

    def test_single_vector_diagonal(self):
        gram, _ = configuration_gram(BlochConfiguration([0.5, 0.5], [[0, 0.6, 0.8], [0, -0.6, -0.8]]))
        assert gram[0, 0] == pytest.approx(1.0)

    def test_signature_ignores_rotation_and_labels(self):
        config = bloch_configuration(random_system(4, 2, 2))
        q, _ = np.linalg.qr(np.random.default_rng(0).normal(size=(3, 3)))
        perm = [2, 0, 3, 1]
        moved = BlochConfiguration(config.rho[perm], config.bloch[perm] @ q.T)
        assert gram_signature(moved, decimals=8) == gram_signature(config, decimals=8)

    def test_orientation_distinguishes_mirror_images(self):
        a = bloch_configuration(four_point_family(2 * np.pi / 3))
        b = bloch_configuration(four_point_family(-2 * np.pi / 3))
        np.testing.assert_allclose(configuration_gram(a)[0], configuration_gram(b)[0], atol=1e-14)
        assert orientation(a) == -orientation(b) != 0


class TestNonUniqueness:
    def test_bloch_data_independent_of_alpha(self):
        a = bloch_configuration(degenerate_three_point_family(0.5))
        b = bloch_configuration(degenerate_three_point_family(2.0))
        np.testing.assert_allclose(a.rho, [1, 1, 0], atol=1e-15)
        np.testing.assert_allclose(a.bloch, [[0, 0, 1], [0, 0, -1], [0, 0, 0]], atol=1e-15)
        np.testing.assert_allclose(b.rho, a.rho)
        np.testing.assert_allclose(b.bloch, a.bloch)

    def _P(self, alpha):
        return projector_from_fermion_matrix(degenerate_three_point_family(alpha))

    def test_gauge_copy_has_zero_distance(self):
        moved = apply_gauge(self._P(0.5), random_gauge(3, np.random.default_rng(1)))
        assert gauge_orbit_distance(self._P(0.5), moved) < 1e-6

    def test_sign_of_alpha_is_gauge(self):
        assert gauge_orbit_distance(self._P(0.5), self._P(-0.5)) < 1e-6

    def test_different_alpha_not_gauge_equivalent(self):
        assert gauge_orbit_distance(self._P(0.5), self._P(2.0)) > 0.1
        assert gauge_orbit_distance(self._P(2.0), self._P(0.5)) > 0.1
