import math

import numpy as np
import pytest

from harvestsched import Schedule, kkt_check_2x2, optimal_2x2, score

from conftest import grid_search_2x2, make_instance


def random_2x2(rng):
    harvests = rng.uniform(0.2, 80, size=2)
    losses = rng.uniform(1, 35, size=2)
    inst = make_instance(harvests, list(losses))
    # any positive powers inside the cumulative budget
    p1 = rng.uniform(0.01, harvests[0] / inst.slot_length_t)
    p2 = rng.uniform(0.01, (harvests.sum() - p1 * inst.slot_length_t) / inst.slot_length_t)
    return inst, np.array([p1, max(p2, 0.01)])


class TestOptimal2x2:
    def test_reference_row_low_then_high(self, row1_instance):
        case = optimal_2x2(row1_instance, [0.05, 5.0])
        assert case.power_relation == "p1<p2"
        assert case.branch.endswith("gamma1<gamma2")
        assert case.gamma[0] == pytest.approx(8.517, abs=1e-3)
        assert case.gamma[1] == pytest.approx(12.703, abs=2e-3)
        np.testing.assert_allclose(
            case.tau_star, [[10.0, 4.4129], [0.0, 5.5871]], atol=1e-4
        )
        assert case.utility_star == pytest.approx(29.8094, abs=1e-3)
        # closed form agrees with direct scoring of its own split
        rep = score(row1_instance, Schedule([0.05, 5.0], case.tau_star))
        assert rep.utility_u == pytest.approx(case.utility_star, rel=1e-12)

    def test_reference_row_high_then_low(self):
        inst = make_instance([50.0, 0.5], [19.0, 22.0])
        case = optimal_2x2(inst, [2.2993, 2.7507])
        np.testing.assert_allclose(
            case.tau_star, [[10.0, 0.2431], [0.0, 9.7569]], atol=1e-4
        )
        assert case.utility_star == pytest.approx(30.9401, abs=1e-3)

    def test_equal_powers_opposite_corners(self):
        inst = make_instance([20.0, 20.0], [19.0, 22.0])
        case = optimal_2x2(inst, [2.0, 2.0])
        assert case.power_relation == "p1=p2"
        assert case.gamma[0] == pytest.approx(1.0)
        assert case.gamma[1] == pytest.approx(1.0)
        np.testing.assert_allclose(case.tau_star, [[10.0, 0.0], [0.0, 10.0]])
        assert len(case.alternates) == 1
        np.testing.assert_allclose(case.alternates[0], [[0.0, 10.0], [10.0, 0.0]])
        T = inst.slot_length_t
        from harvestsched import rate_matrix

        r = rate_matrix(inst, [2.0, 2.0]).rates_r
        assert case.utility_star == pytest.approx(
            math.log2(r[0, 0] * r[1, 1]) + 2 * math.log2(T)
        )

    def test_rejects_zero_power_and_bad_shape(self, row1_instance):
        with pytest.raises(ValueError):
            optimal_2x2(row1_instance, [0.0, 5.0])
        inst3 = make_instance([1.0, 1.0], [19.0, 22.0, 25.0])
        with pytest.raises(ValueError):
            optimal_2x2(inst3, [1.0, 1.0])

    def test_weak_slot_owner_and_strong_slot_split(self):
        # weak slot wholly owned; strong slot shared with the excluded user
        # favored beyond half when powers and ratios differ
        rng = np.random.default_rng(101)
        for _ in range(300):
            inst, p = random_2x2(rng)
            if abs(p[0] - p[1]) < 1e-9:
                continue
            case = optimal_2x2(inst, p)
            tau = case.tau_star
            weak, strong = (0, 1) if p[0] < p[1] else (1, 0)
            weak_col = tau[:, weak]
            assert (weak_col > 0).sum() == 1
            owner = int(np.argmax(weak_col))
            excluded = 1 - owner
            g = case.gamma
            if abs(g[0] - g[1]) > 1e-9 * max(g):
                assert np.all(tau[:, strong] > 0)
                # weak slot before strong goes to the smaller ratio, after to the larger
                if weak < strong:
                    assert owner == int(np.argmin(g))
                else:
                    assert owner == int(np.argmax(g))
                assert tau[excluded, strong] > inst.slot_length_t / 2

    def test_matches_grid_search(self):
        rng = np.random.default_rng(103)
        for _ in range(40):
            inst, p = random_2x2(rng)
            case = optimal_2x2(inst, p)
            assert case.utility_star >= grid_search_2x2(inst, p) - 1e-3

    def test_gamma_regime_tracks_power_order(self):
        rng = np.random.default_rng(109)
        for _ in range(200):
            inst, p = random_2x2(rng)
            case = optimal_2x2(inst, p)
            g = np.array(case.gamma)
            if case.power_relation == "p1<p2":
                assert np.all(g > 1.0)
            elif case.power_relation == "p1>p2":
                assert np.all(g < 1.0)
            else:
                np.testing.assert_allclose(g, 1.0)

    def test_branch_continuity_at_equal_ratios(self):
        # ratios coincide exactly when gains do; approaching equal gains from
        # both sides, branch utilities meet the equal-ratio value
        inst_eq = make_instance([30.0, 30.0], [19.0, 19.0])
        p = [1.0, 2.5]
        case_eq = optimal_2x2(inst_eq, p)
        for delta in (1e-9, -1e-9):
            inst_near = make_instance([30.0, 30.0], [19.0, 19.0 + delta])
            case_near = optimal_2x2(inst_near, p)
            assert case_near.utility_star == pytest.approx(case_eq.utility_star, abs=1e-6)
        # both listed optima of the equal branch score identically
        rep_a = score(inst_eq, Schedule(p, case_eq.tau_star))
        rep_b = score(inst_eq, Schedule(p, case_eq.alternates[0]))
        assert rep_a.utility_u == pytest.approx(rep_b.utility_u, abs=1e-9)
        assert rep_a.utility_u == pytest.approx(case_eq.utility_star, abs=1e-9)


class TestKktCheck2x2:
    def test_oracle_outputs_certify(self):
        rng = np.random.default_rng(107)
        for _ in range(200):
            inst, p = random_2x2(rng)
            case = optimal_2x2(inst, p)
            ok, detail = kkt_check_2x2(inst, p, case.tau_star, tol=1e-6)
            assert ok, detail
            for alt in case.alternates:
                ok_alt, _ = kkt_check_2x2(inst, p, alt, tol=1e-6)
                assert ok_alt

    def test_even_split_fails(self, row1_instance):
        ok, detail = kkt_check_2x2(
            row1_instance, [0.05, 5.0], [[5.0, 5.0], [5.0, 5.0]], tol=1e-6
        )
        assert not ok
        assert detail["comp_share"] > 1e-6
        assert detail["reduced_balance"] > 1e-6

    def test_reference_iterate_certifies_loosely(self):
        inst = make_instance([50.0, 0.5], [19.0, 22.0])
        ok, detail = kkt_check_2x2(
            inst, [2.2993, 2.7507], [[10.0, 0.2428], [0.0, 9.7572]], tol=1e-3
        )
        assert ok, detail

    def test_infeasible_shares_rejected(self, row1_instance):
        with pytest.raises(ValueError):
            kkt_check_2x2(row1_instance, [0.05, 5.0], [[10.0, 10.0], [5.0, 5.0]])
