import numpy as np
import pytest
from dataclasses import replace

from kramers.fitting import (
    DataPoint,
    FitProblem,
    canonical_orientation,
    closest_subsite_representative,
    fit,
    invert_and_seed,
    reconstruct_levels,
    residuals,
)
from kramers.hamiltonian import energies_sweep, eigensystem
from kramers.presets import SITE_I, SITE_II
from kramers.tensors import (
    EulerAngles,
    PrincipalTensor,
    assemble_tensor,
    decompose_tensor,
)

PAIRS = [(i, j) for i in range(4) for j in range(i + 1, 4)]
TRUTH = decompose_tensor(SITE_I.ground.A)
TRUTH_ANGLES = np.array(TRUTH.orientation.as_tuple())


def ground_data(directions, step_mt=2.0, noise=0.0, seed=0, sigma=2e-3):
    rng = np.random.default_rng(seed)
    data = []
    for d in directions:
        d = np.asarray(d, dtype=float)
        d = d / np.linalg.norm(d)
        mags = np.arange(step_mt, 150.1, step_mt)
        e = energies_sweep(SITE_I.ground, mags[:, None] * d[None, :])
        for row, m in enumerate(mags):
            for (i, j) in PAIRS:
                nu = e[row, j] - e[row, i] + (rng.normal(0, noise) if noise else 0.0)
                data.append(DataPoint("shb", "ground", tuple(m * d), nu, sigma, (i, j)))
    return data


def perturbed_problem(max_offset_deg, seed):
    rng = np.random.default_rng(seed)
    pert = TRUTH_ANGLES + rng.uniform(-max_offset_deg, max_offset_deg, 3)
    site = replace(
        SITE_I,
        ground=replace(
            SITE_I.ground,
            A=assemble_tensor(PrincipalTensor(TRUTH.values, EulerAngles(*pert))),
        ),
    )
    return FitProblem(site=site)


def angle_errors(problem, result):
    fitted = problem.realized_site(result.parameters).ground.A
    rep = closest_subsite_representative(fitted, SITE_I.ground.A)
    ang = np.array(decompose_tensor(rep).orientation.as_tuple())
    return np.abs((ang - TRUTH_ANGLES + 180.0) % 360.0 - 180.0)


class TestResiduals:
    def test_zero_at_truth(self):
        data = ground_data([(1, 0, 0), (0, 1, 0)], step_mt=10.0)
        r = residuals(FitProblem(site=SITE_I), TRUTH_ANGLES, data)
        assert np.abs(r).max() < 1e-9

    def test_zero_field_odmr_points(self):
        # measured zero-field lines against the canonical site-I parameters
        lines_mhz = [2046.0, 2385.0, 2869.0, 3208.0]
        data = [
            DataPoint("odmr", "ground", (0.0, 0.0, 0.0), f * 1e-3, 0.5e-3)
            for f in lines_mhz
        ]
        r = residuals(FitProblem(site=SITE_I), TRUTH_ANGLES, data)
        assert np.abs(r).max() * 1e3 < 1.0

    def test_gate_flags_far_points_without_crash(self):
        rng = np.random.default_rng(50)
        data = ground_data([(1, 0, 0)], step_mt=20.0)
        data.append(DataPoint("shb", "ground", (10.0, 0.0, 0.0), 99.0, 2e-3, (0, 1)))
        for _ in range(5):
            params = rng.uniform(-180, 180, 3)
            r, model, excluded = residuals(FitProblem(site=SITE_I), params, data, full=True)
            assert len(data) - 1 in excluded
            assert r[len(data) - 1] == 0.0

    def test_unlabeled_points_use_nearest_transition(self):
        es = eigensystem(SITE_I.ground, (40.0, 0.0, 0.0))
        nu = es.energies[2] - es.energies[1]
        point = DataPoint("shb", "ground", (40.0, 0.0, 0.0), nu + 1e-4, 2e-3, None)
        r = residuals(FitProblem(site=SITE_I), TRUTH_ANGLES, [point])
        assert r[0] == pytest.approx(1e-4, abs=1e-9)

    def test_objective_invariant_under_simultaneous_subsite_transform(self):
        data = ground_data([(1, 0, 0), (0, 0, 1)], step_mt=25.0)
        p1 = FitProblem(site=SITE_I)
        p2 = FitProblem(site=SITE_I.with_subsite(2))
        r1 = residuals(p1, p1.initial_parameters(), data)
        r2 = residuals(p2, p2.initial_parameters(), data)
        assert np.abs(np.sort(np.abs(r1)) - np.sort(np.abs(r2))).max() < 1e-9

    def test_epr_points_compare_resonance_fields(self):
        from kramers.magres import epr_resonance_fields

        found = epr_resonance_fields(SITE_I.ground, (1, 0, 0), 9.7, 300.0)
        assert found
        res_field = found[0].field_mt
        on = DataPoint("epr", "ground", (1.0, 0.0, 0.0), res_field, 0.5, found[0].transition)
        off = DataPoint("epr", "ground", (1.0, 0.0, 0.0), res_field + 2.0, 0.5, found[0].transition)
        problem = FitProblem(site=SITE_I)
        r = residuals(problem, TRUTH_ANGLES, [on, off])
        assert abs(r[0]) < 2e-3  # matches to the bisection tolerance
        assert r[1] == pytest.approx(2.0, abs=2e-3)

    def test_epr_point_with_no_resonance_excluded(self):
        # 50 MHz is below every splitting: no resonance to compare against
        point = DataPoint("epr", "ground", (1.0, 0.0, 0.0), 100.0, 0.5)
        problem = FitProblem(site=SITE_I, nu_mw_ghz=0.05)
        r, model, excluded = residuals(problem, TRUTH_ANGLES, [point], full=True)
        assert excluded == [0]
        assert r[0] == 0.0

    def test_rejects_empty_data(self):
        with pytest.raises(ValueError):
            residuals(FitProblem(site=SITE_I), TRUTH_ANGLES, [])


class TestFit:
    def test_exact_recovery_property(self):
        # noise-free synthetic data: RMS < 1e-6 GHz
        data = ground_data([(1, 0, 0), (0, 1, 0)], step_mt=2.0)
        problem = perturbed_problem(15.0, seed=7)
        result = fit(problem, data, restarts=4, seed=7)
        assert result.rms_mhz * 1e-3 < 1e-6
        assert result.success

    def test_noise_free_recovery_from_near_start(self):
        data = ground_data([(1, 0, 0), (0, 1, 0)], step_mt=2.0)
        problem = perturbed_problem(2.0, seed=11)
        result = fit(problem, data, restarts=1, seed=11)
        assert angle_errors(problem, result).max() < 1e-2

    def test_infinite_sigma_point_leaves_optimum_unchanged(self):
        data = ground_data([(1, 0, 0), (0, 1, 0)], step_mt=10.0)
        problem = perturbed_problem(3.0, seed=13)
        base = fit(problem, data, restarts=1, seed=13)
        data_inf = data + [
            DataPoint("shb", "ground", (50.0, 0.0, 0.0), 7.77, np.inf, (0, 3))
        ]
        with_inf = fit(problem, data_inf, restarts=1, seed=13)
        assert np.abs(base.parameters - with_inf.parameters).max() < 1e-8

    def test_zero_free_parameters_returns_input(self):
        data = ground_data([(1, 0, 0)], step_mt=25.0, noise=1e-3, seed=3)
        problem = FitProblem(site=SITE_I, fit_ground=False, fit_excited=False)
        result = fit(problem, data, restarts=8, seed=3)
        assert result.parameters.size == 0
        raw = residuals(problem, np.array([]), data)
        assert result.rms_mhz == pytest.approx(np.sqrt(np.mean(raw**2)) * 1e3)

    def test_single_direction_covariance_larger(self):
        # ill-conditioning shows in the Jacobian covariance
        noise, sigma = 1e-3, 1e-3
        d2 = fit(
            FitProblem(site=SITE_I),
            ground_data([(1, 0, 0), (0, 0, 1)], step_mt=10.0, noise=noise, seed=5, sigma=sigma),
            restarts=1, seed=5,
        )
        d1 = fit(
            FitProblem(site=SITE_I),
            ground_data([(1, 0, 0)], step_mt=10.0, noise=noise, seed=5, sigma=sigma),
            restarts=1, seed=5,
        )
        var1 = np.diag(d1.covariance)
        var2 = np.diag(d2.covariance)
        assert var1.max() > var2.max()
        for cov in (d1.covariance, d2.covariance):
            assert np.abs(cov - cov.T).max() < 1e-12
            assert np.linalg.eigvalsh(cov).min() > -1e-12

    def test_restart_statistics_reported(self):
        data = ground_data([(1, 0, 0), (0, 1, 0)], step_mt=20.0, noise=2e-3, seed=9)
        result = fit(perturbed_problem(10.0, seed=9), data, restarts=3, seed=9)
        assert len(result.restart_rms_mhz) == 3
        assert result.restart_rms_mhz[0] <= result.restart_rms_mhz[-1]

    def test_too_few_points_rejected(self):
        data = ground_data([(1, 0, 0)], step_mt=150.0)[:2]
        with pytest.raises(ValueError):
            fit(FitProblem(site=SITE_I), data)

    def test_unmatchable_data_reports_failure(self):
        # values 50+ GHz away from any transition: everything gets gated
        data = [
            DataPoint("shb", "ground", (m, 0.0, 0.0), 50.0 + m, 2e-3, (0, 1))
            for m in (10.0, 20.0, 30.0, 40.0)
        ]
        result = fit(FitProblem(site=SITE_I), data, restarts=2, seed=0)
        assert not result.success
        assert "outliers" in result.message
        assert set(result.excluded) == {0, 1, 2, 3}

    def test_misalignment_recovery(self):
        # data from a model tilted 2 deg about D1; only the misalignment free
        tilt_problem = FitProblem(site=SITE_I, fit_ground=False, fit_misalignment=True)
        tilted_site = tilt_problem.realized_site(np.array([2.0, 0.0, 0.0]))
        data = []
        for d in (np.array([1.0, 0, 0]), np.array([0.0, 0, 1.0])):
            mags = np.arange(20.0, 150.1, 20.0)
            e = energies_sweep(tilted_site.ground, mags[:, None] * d[None, :])
            for row, m in enumerate(mags):
                for (i, j) in PAIRS:
                    data.append(
                        DataPoint("shb", "ground", tuple(m * d), e[row, j] - e[row, i], 2e-3, (i, j))
                    )
        result = fit(tilt_problem, data, restarts=1, seed=2)
        assert result.rms_mhz < 0.1
        assert result.parameters[0] == pytest.approx(2.0, abs=0.05)
        assert np.abs(result.parameters).max() <= 5.0  # bound respected

    def test_parameter_names_and_bounds(self):
        problem = FitProblem(
            site=SITE_I, fit_ground=True, fit_excited=True,
            fit_misalignment=True, refine_eigenvalues=True,
        )
        names = problem.parameter_names()
        assert len(names) == 15
        lo, hi = problem.bounds()
        assert lo.size == 15
        assert hi[names.index("mis_x")] == 5.0
        assert hi[names.index("ground_dA1")] == problem.eigenvalue_bound_ghz

    def test_excited_state_fit(self):
        rng = np.random.default_rng(60)
        data = []
        for d in (np.array([1.0, 0, 0]), np.array([0.0, 0, 1.0])):
            mags = np.arange(10.0, 150.1, 10.0)
            e = energies_sweep(SITE_I.excited, mags[:, None] * d[None, :])
            for row, m in enumerate(mags):
                for (i, j) in PAIRS:
                    data.append(
                        DataPoint("shb", "excited", tuple(m * d), e[row, j] - e[row, i], 2e-3, (i, j))
                    )
        problem = FitProblem(site=SITE_I, fit_ground=False, fit_excited=True)
        result = fit(problem, data, restarts=1, seed=1)
        assert result.rms_mhz < 1e-3
        assert "excited" in result.canonical_angles


class TestCanonicalization:
    def test_canonical_orientation_subsite_pick_deterministic(self):
        angles, subsite = canonical_orientation(SITE_I.ground.A)
        assert subsite in (1, 2)
        again, subsite2 = canonical_orientation(SITE_I.ground.A)
        assert angles.as_tuple() == again.as_tuple() and subsite == subsite2

    def test_closest_representative_prefers_untransformed(self):
        rep = closest_subsite_representative(SITE_I.ground.A, SITE_I.ground.A)
        assert np.array_equal(rep.matrix, SITE_I.ground.A.matrix)

    def test_closest_representative_collapses_subsite(self):
        from kramers.tensors import subsite_transform

        flipped = subsite_transform(SITE_I.ground.A)
        rep = closest_subsite_representative(flipped, SITE_I.ground.A)
        assert np.array_equal(rep.matrix, SITE_I.ground.A.matrix)


class TestInvertAndSeed:
    def test_site_i_four_lines(self):
        lines_ghz = np.array([2046.0, 2385.0, 2869.0, 3208.0]) * 1e-3
        mags, problem = invert_and_seed(lines_ghz, SITE_I)
        assert np.abs(np.array(mags) - (0.484, 1.162, 5.254)).max() * 1e3 <= 2.0
        assert problem.fit_ground and not problem.fit_excited
        seeded = decompose_tensor(problem.site.ground.A)
        assert np.array(seeded.values) == pytest.approx(mags, abs=1e-12)

    def test_site_ii_five_lines_overdetermined(self):
        lines_ghz = np.array([528.0, 655.0, 2370.0, 2496.0, 3025.0]) * 1e-3
        mags, problem = invert_and_seed(lines_ghz, SITE_II)
        table = np.abs(np.array([-0.1259, 1.1835, 4.8668]))
        assert np.abs(np.array(mags) - table).max() * 1e3 < 2.0
        # sign hypothesis follows the site's stored ordering (A1 < 0)
        seeded = decompose_tensor(problem.site.ground.A)
        assert seeded.values[0] < 0

    def test_synthetic_exact_lines(self):
        from kramers.hamiltonian import zero_field_levels

        a = (0.3, 1.4, 6.2)
        levels = zero_field_levels(*a).sorted()
        lines = np.sort([levels[j] - levels[i] for i, j in PAIRS])
        mags, _ = invert_and_seed(lines, SITE_I)
        assert np.abs(np.array(mags) - a).max() < 1e-9

    def test_inconsistent_lines_rejected_with_report(self):
        with pytest.raises(ValueError, match="closest"):
            invert_and_seed([0.5, 0.9, 1.7, 2.9], SITE_I)

    def test_reconstruct_needs_three_lines(self):
        with pytest.raises(ValueError):
            reconstruct_levels([1.0, 2.0])


class TestDataPoint:
    def test_validation(self):
        with pytest.raises(ValueError):
            DataPoint("nope", "ground", (0, 0, 0), 1.0, 1.0)
        with pytest.raises(ValueError):
            DataPoint("shb", "middle", (0, 0, 0), 1.0, 1.0)
        with pytest.raises(ValueError):
            DataPoint("shb", "ground", (0, 0, 0), 1.0, 0.0)
