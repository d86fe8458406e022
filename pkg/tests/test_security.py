import math

import numpy as np
import pytest

from tetraqkd import quantum as q
from tetraqkd import security, tomography
from tetraqkd.source import noisy_singlet, pair_cell_probabilities


class TestMutualInformation:
    def test_reference_values(self):
        assert security.mutual_info_tetra(0.0) == pytest.approx(math.log2(4 / 3), abs=1e-12)
        assert security.mutual_info_tetra(2 / 3) == pytest.approx(0.0292, abs=5e-4)
        assert security.mutual_info_six(0.0) == pytest.approx(1 / 3, abs=1e-12)
        assert security.mutual_info_six(1.0) == pytest.approx(0.0, abs=1e-12)
        assert security.mutual_info_tetra(1.0) == pytest.approx(0.0, abs=1e-12)

    def test_closed_form_matches_born_rule_tetra(self):
        pom = tomography.tetra_pom()
        for eps in np.linspace(0.0, 1.0, 50):
            numeric = q.shannon_mutual_information(
                tomography.joint_distribution(noisy_singlet(eps), pom, pom)
            )
            assert abs(security.mutual_info_tetra(eps) - numeric) < 1e-9

    def test_closed_form_matches_born_rule_six(self):
        pom = tomography.six_state_pom()
        for eps in np.linspace(0.0, 1.0, 50):
            numeric = q.shannon_mutual_information(
                tomography.joint_distribution(noisy_singlet(eps), pom, pom)
            )
            assert abs(security.mutual_info_six(eps) - numeric) < 1e-9

    def test_monotone_decrease_on_nonseparable_range(self):
        grid = np.linspace(1e-6, 2 / 3, 200)
        tetra = [security.mutual_info_tetra(e) for e in grid]
        six = [security.mutual_info_six(e) for e in grid]
        assert np.all(np.diff(tetra) < 0)
        assert np.all(np.diff(six) < 0)

    def test_domain(self):
        with pytest.raises(ValueError):
            security.mutual_info_tetra(-0.1)
        with pytest.raises(ValueError):
            security.mutual_info_six(1.1)


class TestNoiseDuality:
    def test_endpoints(self):
        assert security.eve_noise(0.0) == pytest.approx(1.0, abs=1e-15)
        assert security.eve_noise(2 / 3) == pytest.approx(0.0, abs=1e-15)

    def test_circle_identity(self):
        for eps in np.linspace(0.0, 2 / 3, 40):
            eta = security.eve_noise(eps)
            assert abs((1 - 1.5 * eps) ** 2 + (1 - eta) ** 2 - 1) < 1e-12

    def test_inverse_recovers_epsilon(self):
        for eps in np.linspace(0.0, 2 / 3, 25):
            assert security.eve_noise_inverse(security.eve_noise(eps)) == pytest.approx(
                eps, abs=1e-10
            )

    def test_domain(self):
        with pytest.raises(ValueError):
            security.eve_noise(0.7)


class TestCsiszarKoerner:
    def test_threshold_matches_closed_form(self):
        report = security.ck_threshold()
        assert report.threshold == pytest.approx(1 / (2.5 + math.sqrt(3)), abs=1e-6)
        assert report.threshold == pytest.approx(0.2363, abs=5e-5)

    def test_yield_at_zero_noise_is_full_information(self):
        assert security.ck_yield(0.0) == pytest.approx(0.41504, abs=1e-5)

    def test_yield_vanishes_at_threshold_and_is_positive_below(self):
        root = security.ck_threshold().threshold
        assert abs(security.ck_yield(root)) < 1e-9
        for eps in (0.05, 0.15, 0.23):
            assert security.ck_yield(eps) > 0
        assert security.ck_yield(0.25) < 0


class TestHolevoOneWay:
    def test_closed_form_matches_explicit_construction(self):
        for eps in np.linspace(0.05, 0.65, 10):
            assert abs(
                security.holevo_bound_oneway(eps) - security.holevo_bound_oneway_numeric(eps)
            ) < 1e-9

    def test_vanishes_at_zero_noise(self):
        assert security.holevo_bound_oneway(0.0) == 0.0
        assert security.holevo_bound_oneway(1e-9) < 1e-6

    def test_thresholds(self):
        assert security.holevo_threshold("tetra").threshold == pytest.approx(0.1265, abs=5e-4)
        assert security.holevo_threshold("six").threshold == pytest.approx(0.1086, abs=5e-4)


class TestIterationFormulas:
    def test_bit_error_values(self):
        assert security.bit_error(0.25, 1) == pytest.approx(1 / 6, abs=1e-15)
        assert security.bit_error(0.25, 2) == pytest.approx(1 / 26, abs=1e-15)
        assert security.bit_error(0.0, 3) == 0.0

    def test_bit_error_decreases_with_rounds(self):
        for eps in (0.05, 0.3, 0.6):
            errors = [security.bit_error(eps, n) for n in range(1, 12)]
            assert np.all(np.diff(errors) <= 0)  # ties only once underflowed to 0
            assert np.all(np.diff(errors[:4]) < 0)
            assert errors[-1] < 1e-3

    def test_bit_error_validation(self):
        with pytest.raises(ValueError):
            security.bit_error(0.2, 0)

    def test_secondary_noise_values(self):
        assert security.secondary_noise(0.0) == 0.0
        assert security.secondary_noise(0.3) == pytest.approx(0.077364, abs=1e-6)
        assert security.secondary_noise(2 / 3) == pytest.approx(3 / 7, abs=1e-12)

    def test_recursion_consistency(self):
        # applying the formula at n+1 equals one recursion step then n
        for eps in (0.05, 0.2, 0.45, 0.6):
            for n in (1, 2, 3):
                direct = security.bit_error(eps, n + 1)
                stepped = security.bit_error(security.secondary_noise(eps), n)
                assert abs(direct - stepped) < 1e-12


class TestMessageAttack:
    def test_iteration_conditioned_state_has_rank_nine(self):
        state = security.announcement_conditioned_state(0.25, "iteration")
        lam = np.sort(np.linalg.eigvalsh(state))[::-1]
        assert lam[8] > 1e-6
        assert lam[9] < 1e-9

    def test_ensembles_are_normalized_states(self):
        for kind in ("iteration", "finalPairing", "renesL1"):
            priors, states = security.message_attack_ensemble(0.3, kind)
            assert priors.sum() == pytest.approx(1.0, abs=1e-12)
            for state in states:
                q.validate_density(state, atol=1e-10)

    def test_thresholds_match_published_values(self):
        table = security.table_one_reference()
        targets = {
            "iteration": table[("message", "n1", "it")],
            "finalPairing": table[("message", "n1", "FP")],
            "renesL1": table[("message", "L1", "FP")],
        }
        for kind, target in targets.items():
            report = security.message_attack_threshold(kind)
            assert report.threshold == pytest.approx(target, abs=0.01)

    def test_holevo_vanishes_with_noise(self):
        for kind in ("iteration", "finalPairing", "renesL1"):
            assert security.message_attack_holevo(1e-5, kind) < 1e-3

    def test_first_round_wrapper(self):
        chi, report = security.first_round_message_attack(0.2, "iteration")
        assert 0 < chi < 1
        assert report.reference == 0.2182

    def test_invalid_inputs(self):
        with pytest.raises(ValueError):
            security.message_attack_ensemble(0.0, "iteration")
        with pytest.raises(ValueError):
            security.message_attack_ensemble(0.3, "bogus")


class TestThresholdSolver:
    def test_linear_function(self):
        report = security.solve_threshold(lambda e: e - 0.5, (0.0, 1.0), name="linear")
        assert report.threshold == pytest.approx(0.5, abs=1e-9)
        assert report.bracket == (0.0, 1.0)

    def test_same_sign_bracket_raises(self):
        with pytest.raises(ValueError, match="sign change"):
            security.solve_threshold(lambda e: e + 1.0, (0.0, 1.0))

    def test_report_delta(self):
        report = security.solve_threshold(
            lambda e: e - 0.5, (0.0, 1.0), reference=0.49
        )
        assert report.delta == pytest.approx(0.01, abs=1e-9)


class TestReferenceTable:
    def test_spot_values(self):
        table = security.table_one_reference()
        assert table[("raw-data", "n1", "it")] == 0.3324
        assert table[("collective", "n2", "FP")] == 0.3405
        assert table[("message", "inf", "FP")] == 0.3893
        assert table[("message", "L1", "FP")] == 0.1920

    def test_complete_and_copied(self):
        table = security.table_one_reference()
        assert len(table) == 27
        table[("raw-data", "n1", "it")] = 0.0
        assert security.table_one_reference()[("raw-data", "n1", "it")] == 0.3324


class TestCurveGrid:
    def test_crossings(self):
        grid = np.linspace(1e-4, 0.3, 600)
        cols = security.curve_grid(grid)
        gap_ck = cols["i_ab_tetra"] - cols["i_ae_tetra"]
        flips = np.where(np.diff(np.sign(gap_ck)) != 0)[0]
        assert len(flips) == 1
        assert abs(grid[flips[0]] - 0.2363) < 5e-4
        gap_holevo = cols["i_ab_tetra"] - cols["holevo_bound"]
        flips = np.where(np.diff(np.sign(gap_holevo)) != 0)[0]
        assert abs(grid[flips[0]] - 0.1265) < 5e-4

    def test_grid_validation(self):
        with pytest.raises(ValueError):
            security.curve_grid(np.array([0.0, 0.8]))
        with pytest.raises(ValueError):
            security.curve_grid(np.array([0.2, 0.1]))
