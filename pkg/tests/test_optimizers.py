import logging

import numpy as np
import pytest

from core.bernoulli_dist import ProbVector, fisher_diag, kl_exact, kl_quadratic
from core.fitness_shaping import NaturalGradient, centered_rank
from core.optimizers import (
    EcConfig,
    EsConfig,
    SatrConfig,
    TrConfig,
    apply_update,
    bernoulli_rule,
    ec_step,
    ec_tr_step,
    es_perturbations,
    es_step,
    satr_step,
)


def _grad(values):
    g = np.asarray(values, dtype=np.float64)
    return NaturalGradient.from_vector(g, pop_size=8)


def _pv(values):
    return ProbVector(np.asarray(values, dtype=np.float64))


# ============================================================================
# SATR
# ============================================================================

class TestSatrStep:
    def test_by_hand(self):
        rho, grad = _pv([0.5]), _grad([0.2])
        delta = satr_step(rho, grad, SatrConfig(eta=0.15))
        assert delta[0] == pytest.approx(0.015)
        assert kl_quadratic(rho, delta) == pytest.approx(4.5e-4, rel=1e-12)
        assert kl_quadratic(rho, delta) == pytest.approx(0.15 ** 2 / 2 * 0.04, rel=1e-12)

    def test_zero_signal_zero_step(self):
        assert np.array_equal(satr_step(_pv([0.3, 0.7]), _grad([0.0, 0.0]), SatrConfig()),
                              [0.0, 0.0])

    def test_quadratic_kl_identity(self, rng):
        cfg = SatrConfig(eta=0.15)
        for _ in range(1000):
            d = int(rng.integers(1, 50))
            rho = _pv(rng.uniform(1e-3, 1 - 1e-3, d))
            grad = _grad(rng.uniform(-0.5, 0.5, d))
            kl = kl_quadratic(rho, satr_step(rho, grad, cfg))
            assert kl == pytest.approx(cfg.kl_per_energy * grad.energy, rel=1e-12)

    def test_exact_kl_proximity(self, rng):
        for _ in range(1000):
            eta = float(rng.uniform(0.005, 0.05))
            d = int(rng.integers(1, 20))
            rho = _pv(rng.uniform(0.1, 0.9, d))
            grad = _grad(rng.uniform(-0.5, 0.5, d))
            delta = satr_step(rho, grad, SatrConfig(eta=eta))
            ratio = kl_exact(rho, _pv(rho.probs + delta)) / grad.energy
            assert abs(ratio - eta ** 2 / 2) <= 0.1 * eta ** 2 / 2

    def test_preserves_sign(self, rng):
        g = rng.normal(size=64)
        delta = satr_step(_pv(rng.uniform(0.01, 0.99, 64)), _grad(g), SatrConfig())
        assert np.array_equal(np.sign(delta), np.sign(g))

    def test_shrinks_near_boundary(self):
        cfg = SatrConfig()
        near = satr_step(_pv([1e-3]), _grad([0.2]), cfg)[0]
        center = satr_step(_pv([0.5]), _grad([0.2]), cfg)[0]
        assert 0 < near < center


# ============================================================================
# EC
# ============================================================================

class TestEcStep:
    def test_ignores_rho(self):
        for p in (0.01, 0.5, 0.9):
            assert ec_step(_pv([p]), _grad([0.2]), 0.15)[0] == pytest.approx(0.03)

    def test_zero_signal(self):
        assert ec_step(_pv([0.4]), _grad([0.0]), 0.15)[0] == 0.0

    def test_boundary_contrast(self):
        grad, eta = _grad([0.2]), 0.15
        ec_kl = [kl_quadratic(_pv([p]), ec_step(_pv([p]), grad, eta)) for p in (1e-1, 1e-2, 1e-3)]
        satr_kl = [kl_quadratic(_pv([p]), satr_step(_pv([p]), grad, SatrConfig(eta=eta)))
                   for p in (1e-1, 1e-2, 1e-3)]
        assert ec_kl[0] < ec_kl[1] < ec_kl[2]
        for kl in satr_kl:
            assert kl == pytest.approx(satr_kl[0], rel=1e-12)


# ============================================================================
# EC+TR
# ============================================================================

class TestEcTrStep:
    def test_by_hand(self):
        delta = ec_tr_step(_pv([0.5]), _grad([0.3]), TrConfig(delta_per_param=0.02))
        assert delta[0] == pytest.approx(0.1, rel=1e-12)
        assert 0.5 * 4.0 * delta[0] ** 2 == pytest.approx(0.02, rel=1e-12)

    def test_constraint_active(self, rng):
        for _ in range(1000):
            d = int(rng.integers(1, 50))
            rho = _pv(rng.uniform(1e-3, 1 - 1e-3, d))
            cfg = TrConfig(delta_per_param=float(rng.uniform(1e-5, 1e-2)))
            delta = ec_tr_step(rho, _grad(rng.normal(size=d)), cfg)
            kl = 0.5 * np.sum(delta * fisher_diag(rho) * delta)
            assert kl == pytest.approx(cfg.budget(d), rel=1e-10)

    def test_scale_invariant(self, rng):
        rho = _pv(rng.uniform(0.1, 0.9, 8))
        g = rng.normal(size=8)
        cfg = TrConfig()
        np.testing.assert_allclose(ec_tr_step(rho, _grad(g), cfg),
                                   ec_tr_step(rho, _grad(37.0 * g), cfg), rtol=1e-12)

    def test_positively_proportional(self, rng):
        g = rng.normal(size=16)
        delta = ec_tr_step(_pv(rng.uniform(0.1, 0.9, 16)), _grad(g), TrConfig())
        assert np.array_equal(np.sign(delta), np.sign(g))

    def test_zero_signal_warns(self, caplog):
        with caplog.at_level(logging.WARNING, logger="core.optimizers"):
            delta = ec_tr_step(_pv([0.5, 0.5]), _grad([0.0, 0.0]), TrConfig())
        assert np.array_equal(delta, [0.0, 0.0])
        assert "no-signal generation" in caplog.text

    def test_main_text_form(self):
        rho, grad = _pv([0.5]), _grad([0.3])
        delta = ec_tr_step(rho, grad, TrConfig(delta_per_param=0.02, main_text_form=True))
        # denominator sqrt(g^2 * rho (1 - rho)) = 0.15
        assert delta[0] == pytest.approx(0.2 * 0.3 / 0.15, rel=1e-12)


# ============================================================================
# apply_update / dispatch
# ============================================================================

class TestApplyUpdate:
    def test_clamps_ceiling(self):
        assert apply_update(_pv([0.999]), [0.05]).probs[0] == pytest.approx(0.999)

    def test_zero_delta(self):
        assert apply_update(_pv([0.5]), [0.0]).probs[0] == 0.5

    def test_interior(self):
        assert apply_update(_pv([0.5]), [-0.015]).probs[0] == pytest.approx(0.485)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            apply_update(_pv([0.5]), [0.1, 0.2])

    def test_rule_dispatch(self):
        rule = bernoulli_rule("ec", SatrConfig(), EcConfig(eta=0.5), TrConfig())
        assert rule(_pv([0.5]), _grad([0.2]))[0] == pytest.approx(0.1)
        with pytest.raises(ValueError):
            bernoulli_rule("es", SatrConfig(), EcConfig(), TrConfig())


# ============================================================================
# Gaussian ES
# ============================================================================

class TestEs:
    def test_no_signal_no_decay_is_identity(self, rng):
        w = rng.normal(size=5)
        cfg = EsConfig(weight_decay=0.0)
        eps = es_perturbations(rng, 4, 5, cfg)
        assert np.array_equal(es_step(w, eps, np.zeros(4), cfg), w)

    def test_decay_only(self, rng):
        w = rng.normal(size=5)
        cfg = EsConfig(eta=0.15, weight_decay=0.1)
        out = es_step(w, es_perturbations(rng, 4, 5, cfg), np.zeros(4), cfg)
        np.testing.assert_allclose(out, w * (1 - 0.015), rtol=1e-12)

    def test_mirrored_pairs(self, rng):
        eps = es_perturbations(rng, 5, 3, EsConfig())
        assert np.array_equal(eps[1], -eps[0])
        assert np.array_equal(eps[3], -eps[2])

    def test_unmirrored_shape(self, rng):
        eps = es_perturbations(rng, 6, 4, EsConfig(mirrored=False))
        assert eps.shape == (6, 4)

    def test_shape_mismatch(self, rng):
        with pytest.raises(ValueError):
            es_step(np.zeros(3), np.zeros((4, 2)), np.zeros(4), EsConfig())

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_descends_convex_bowl(self, seed):
        gen = np.random.default_rng(seed)
        cfg = EsConfig()
        w = np.array([3.0, -2.0])
        start = np.linalg.norm(w)
        for _ in range(50):
            eps = es_perturbations(gen, 512, 2, cfg)
            fitness = -np.sum((w + eps) ** 2, axis=1)
            w = es_step(w, eps, centered_rank(fitness), cfg)
        assert np.linalg.norm(w) < start
