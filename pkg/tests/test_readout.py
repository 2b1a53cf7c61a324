import math

import numpy as np
import pytest

from podreadout.errors import FieldError
from podreadout.flow import Field2D
from podreadout.mps import tt_svd
from podreadout.pod import build_snapshot_matrix, pod_decompose
from podreadout.readout import (
    coefficient_from_counts,
    error_budget_check,
    fsr_readout,
    hadamard_p0,
    podr_readout,
    rsr_readout,
    sample_coefficient,
)


def small_problem(n=256, m=6, n_b=4, seed=0, chi=4):
    rng = np.random.default_rng(seed)
    fields = [Field2D(n, 1, rng.normal(size=n)) for _ in range(m)]
    s = build_snapshot_matrix(fields, list(range(m)))
    basis = pod_decompose(s).with_nb(n_b)
    apx = [tt_svd(basis.u[:, i], chi) for i in range(n_b)]
    # a unit target correlated with the ensemble
    x = s.data @ rng.normal(size=m)
    x /= np.linalg.norm(x)
    return basis, apx, x


class TestHadamardP0:
    def test_identical_states(self):
        x = np.ones(4) / 2.0
        assert hadamard_p0(x, x) == pytest.approx(1.0, abs=1e-14)

    def test_orthogonal_states(self):
        x = np.array([1.0, 0.0, 0.0, 0.0])
        u = np.array([0.0, 1.0, 0.0, 0.0])
        assert hadamard_p0(x, u) == pytest.approx(0.5, abs=1e-15)

    def test_overlap_arithmetic(self):
        x = np.array([1.0, 0.0])
        u = np.array([0.6, 0.8])
        assert hadamard_p0(x, u) == pytest.approx(0.8, abs=1e-15)

    def test_norm_deviation_rejected(self):
        with pytest.raises(FieldError, match="unit norm"):
            hadamard_p0(np.array([1.0, 1e-3]), np.array([1.0, 0.0]))


class TestSampleCoefficient:
    def test_degenerate_p0_one(self):
        for seed in range(5):
            assert sample_coefficient(1.0, 100, seed) == 1.0

    def test_counts_arithmetic(self):
        assert coefficient_from_counts(75, 100) == pytest.approx(0.5, abs=1e-15)

    def test_seed_determinism(self):
        a = sample_coefficient(0.7, 1000, [3, 1])
        b = sample_coefficient(0.7, 1000, [3, 1])
        assert a == b

    def test_binomial_moments(self):
        # oracle: binomial mean 2 p0 - 1 with per-sample std 2 sqrt(p0 q0 / n)
        p0, shots = 0.8, 10**6
        draws = np.array([sample_coefficient(p0, shots, s) for s in range(100)])
        tol = 3.0 * (2.0 * math.sqrt(p0 * (1 - p0) / shots))
        assert abs(draws.mean() - 0.6) <= tol

    def test_unbiased_and_variance_law(self):
        p0, shots, n_seeds = 0.63, 2000, 300
        draws = np.array([sample_coefficient(p0, shots, s) for s in range(n_seeds)])
        expected_var = 4.0 * p0 * (1 - p0) / shots
        stderr = math.sqrt(expected_var / n_seeds)
        assert abs(draws.mean() - (2 * p0 - 1)) <= 4 * stderr
        assert expected_var / 1.5 <= draws.var(ddof=1) <= expected_var * 1.5


class TestPodrReadout:
    def test_exact_recovery_in_analytic_mode(self):
        basis, _, _ = small_problem(n_b=6)
        basis = basis.with_nb(6)
        apx = [tt_svd(basis.u[:, i], 16) for i in range(6)]
        rng = np.random.default_rng(5)
        x = basis.u @ rng.normal(size=6)
        x /= np.linalg.norm(x)
        rep = podr_readout(x, basis, apx, 600, seed=0, analytic=True)
        assert rep.epsilon <= 1e-10

    def test_budget_divisibility_enforced(self):
        basis, apx, x = small_problem()
        with pytest.raises(FieldError, match="divisible"):
            podr_readout(x, basis, apx, 1001, seed=0)

    def test_approximant_count_enforced(self):
        basis, apx, x = small_problem()
        with pytest.raises(FieldError, match="approximants"):
            podr_readout(x, basis, apx[:-1], 1000, seed=0)

    def test_analytic_epsilon_matches_dense_expansion(self):
        # oracle: expand the residual directly in the augmented basis
        basis, apx, x = small_problem(chi=2)
        rep = podr_readout(x, basis, apx, 4000, seed=0, analytic=True)
        n_b = basis.n_b
        un = basis.u[:, :n_b]
        overlaps = np.array([float(x @ np.asarray(a.dense)) for a in apx])
        recon = un @ overlaps
        direct = np.linalg.norm(x - recon)
        assert rep.epsilon == pytest.approx(direct, abs=1e-12)
        floor = math.sqrt(rep.budget.e_proj**2 + rep.budget.e_enc**2)
        assert rep.epsilon == pytest.approx(floor, abs=1e-10)

    def test_shot_bookkeeping(self):
        basis, apx, x = small_problem()
        rep = podr_readout(x, basis, apx, 4000, seed=1)
        assert rep.n_shot_total == 4000
        assert rep.n_b == 4
        assert len(rep.estimated_coefficients) == 4

    def test_subregion_restriction(self):
        basis, apx, x = small_problem()
        sub = np.arange(50)
        rep = podr_readout(x, basis, apx, 4000, seed=1, subregion=sub)
        assert rep.reconstruction.shape == (50,)
        full = podr_readout(x, basis, apx, 4000, seed=1)
        assert rep.epsilon <= full.epsilon + 1e-12
        assert np.allclose(rep.reconstruction, full.reconstruction[:50])

    def test_seed_determinism(self):
        basis, apx, x = small_problem()
        a = podr_readout(x, basis, apx, 4000, seed=9)
        b = podr_readout(x, basis, apx, 4000, seed=9)
        assert np.array_equal(a.estimated_coefficients, b.estimated_coefficients)


class TestRsrReadout:
    def test_uniform_state_analytic(self):
        x = np.full(4, 0.5)
        rep = rsr_readout(x, 100, seed=0, analytic=True)
        assert np.allclose(rep.reconstruction, 0.5, atol=1e-15)
        assert rep.epsilon <= 1e-15

    def test_point_mass_exact_with_sign_oracle(self):
        x = np.zeros(8)
        x[3] = 1.0
        rep = rsr_readout(x, 1, seed=4)
        assert rep.epsilon == 0.0

    def test_negative_point_mass_needs_sign_oracle(self):
        x = np.zeros(8)
        x[3] = -1.0
        with_oracle = rsr_readout(x, 10, seed=4, sign_oracle=True)
        without = rsr_readout(x, 10, seed=4, sign_oracle=False)
        assert with_oracle.epsilon == 0.0
        assert without.epsilon == pytest.approx(2.0)

    def test_error_shrinks_with_shots(self):
        rng = np.random.default_rng(11)
        x = rng.normal(size=256)
        x /= np.linalg.norm(x)
        eps = [
            np.median([rsr_readout(x, n, seed=s).epsilon for s in range(5)])
            for n in (10**3, 10**5)
        ]
        assert eps[1] < eps[0]


class TestFsrReadout:
    def test_constant_state_single_mode(self):
        x = np.full(16, 0.25)
        rep = fsr_readout(x, 10**4, cutoff=0.01, seed=0)
        assert rep.kept_modes == 1
        assert rep.epsilon <= 0.05
        analytic = fsr_readout(x, 10**4, cutoff=0.01, seed=0, analytic=True)
        assert analytic.epsilon <= 1e-12

    def test_single_fourier_mode_analytic(self):
        n = 64
        k = 5
        x = np.cos(2 * np.pi * k * np.arange(n) / n)
        x /= np.linalg.norm(x)
        rep = fsr_readout(x, 100, cutoff=0.1, seed=0, analytic=True)
        assert rep.epsilon <= 1e-12
        assert rep.kept_modes == 2  # the +-k pair of a real mode

    def test_cutoff_validation(self):
        with pytest.raises(FieldError):
            fsr_readout(np.ones(4) / 2.0, 100, cutoff=1.5, seed=0)

    def test_kept_modes_grow_with_budget(self):
        rng = np.random.default_rng(12)
        smooth = np.cumsum(rng.normal(size=256))
        smooth /= np.linalg.norm(smooth)
        lo = fsr_readout(smooth, 10**3, cutoff=1e-4, seed=1)
        hi = fsr_readout(smooth, 10**6, cutoff=1e-4, seed=1)
        assert hi.kept_modes >= lo.kept_modes
        assert hi.epsilon <= lo.epsilon


class TestErrorBudget:
    def test_analytic_mode_always_within_budget(self):
        basis, apx, x = small_problem()
        rep = podr_readout(x, basis, apx, 4000, seed=0, analytic=True)
        assert error_budget_check(rep)

    def test_rejects_non_podr_reports(self):
        rep = rsr_readout(np.ones(4) / 2.0, 10, seed=0)
        with pytest.raises(FieldError):
            error_budget_check(rep)

    def test_coverage_beta2_and_beta4(self):
        basis, apx, x = small_problem(chi=4)
        checks2, checks4 = [], []
        for seed in range(200):
            rep = podr_readout(x, basis, apx, 2000, seed=seed, beta=2.0)
            checks2.append(error_budget_check(rep))
            checks4.append(error_budget_check(rep, beta=4.0))
        assert np.mean(checks2) >= 0.75
        assert np.mean(checks4) >= 0.93

    def test_beta_must_be_at_least_two(self):
        basis, apx, x = small_problem()
        rep = podr_readout(x, basis, apx, 4000, seed=0)
        with pytest.raises(FieldError):
            error_budget_check(rep, beta=1.0)
