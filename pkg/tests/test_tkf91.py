import collections
import math

import numpy as np
import pytest

from rootrec.ctmc import CtmcError, total_variation, Distribution
from rootrec.tkf91 import (ALPHABET, Tkf91Params, Tkf91Process, mc_rows,
                           stationary_length_pmf, stationary_pmf,
                           stationary_sample, tkf91_evolve,
                           tkf91_root_experiment, top_states,
                           write_experiment_csv)
from rootrec.tree import generate_family
from rootrec.treechain import simulate

STD = Tkf91Params(nu=1.0, lam=1.0, mu=2.0)


class TestParams:
    def test_lambda_below_mu_required(self):
        with pytest.raises(CtmcError):
            Tkf91Params(nu=1.0, lam=2.0, mu=2.0)

    def test_positive_rates_required(self):
        with pytest.raises(CtmcError):
            Tkf91Params(nu=0.0, lam=1.0, mu=2.0)

    def test_frequencies_must_sum_to_one(self):
        with pytest.raises(CtmcError):
            Tkf91Params(nu=1.0, lam=1.0, mu=2.0, pi_A=0.5, pi_T=0.5,
                        pi_C=0.5, pi_G=0.5)


class TestEvolve:
    def test_zero_time_unchanged(self):
        rng = np.random.default_rng(0)
        assert tkf91_evolve(STD, "ATCG", 0.0, rng) == "ATCG"

    def test_near_zero_insertion_keeps_empty(self):
        p = Tkf91Params(nu=1.0, lam=1e-12, mu=1.0)
        rng = np.random.default_rng(1)
        assert all(tkf91_evolve(p, "", 5.0, rng) == "" for _ in range(50))

    def test_alphabet_preserved(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            out = tkf91_evolve(STD, "ATCG", 0.5, rng)
            assert set(out) <= set(ALPHABET)

    def test_stationarity_of_length_law(self):
        rng = np.random.default_rng(3)
        n = 20000
        counts = collections.Counter()
        for _ in range(n):
            seq = stationary_sample(STD, rng)
            counts[len(tkf91_evolve(STD, seq, 1.0, rng))] += 1
        tv = 0.5 * sum(abs(counts.get(m, 0) / n
                           - stationary_length_pmf(STD, m))
                       for m in range(31))
        assert tv < 0.02

    def test_letter_frequencies_at_stationarity(self):
        p = Tkf91Params(nu=1.0, lam=1.0, mu=2.0, pi_A=0.4, pi_T=0.3,
                        pi_C=0.2, pi_G=0.1)
        rng = np.random.default_rng(4)
        letters = collections.Counter()
        for _ in range(20000):
            letters.update(stationary_sample(p, rng))
        total = sum(letters.values())
        for ch, f in zip(ALPHABET, p.freqs):
            assert abs(letters[ch] / total - f) < 4 * math.sqrt(
                f * (1 - f) / total)


class TestStationaryLaw:
    def test_empty_probability(self):
        assert stationary_pmf(STD, "") == pytest.approx(0.5)

    def test_single_letter(self):
        assert stationary_pmf(STD, "A") == pytest.approx(0.0625)

    def test_length_law_matches_geometric(self):
        rng = np.random.default_rng(5)
        n = 30000
        counts = collections.Counter(len(stationary_sample(STD, rng))
                                     for _ in range(n))
        for m in range(6):
            p = stationary_length_pmf(STD, m)
            assert abs(counts[m] / n - p) < 4 * math.sqrt(p * (1 - p) / n)

    def test_ratio_to_zero_always_empty(self):
        p = Tkf91Params(nu=1.0, lam=1e-9, mu=1.0)
        rng = np.random.default_rng(6)
        assert all(stationary_sample(p, rng) == "" for _ in range(100))


class TestTopStates:
    def test_uniform_pi_order(self):
        assert top_states(STD, 0.3) == ("", "A", "C", "G", "T")

    def test_tail_mass_below_epsilon(self):
        for eps in (0.3, 0.1, 0.05):
            lam = top_states(STD, eps)
            tail = 1.0 - sum(stationary_pmf(STD, s) for s in lam)
            assert tail < eps
            # dropping the last element puts the tail back at or above eps
            tail_short = tail + stationary_pmf(STD, lam[-1])
            assert tail_short >= eps

    def test_known_count_at_005(self):
        assert len(top_states(STD, 0.05)) == 188

    def test_masses_nonincreasing(self):
        lam = top_states(STD, 0.02)
        masses = [stationary_pmf(STD, s) for s in lam]
        assert all(masses[i] >= masses[i + 1] - 1e-15
                   for i in range(len(masses) - 1))

    def test_nonuniform_pi_best_first(self):
        p = Tkf91Params(nu=1.0, lam=1.0, mu=2.0, pi_A=0.7, pi_T=0.1,
                        pi_C=0.1, pi_G=0.1)
        lam = top_states(p, 0.2)
        # "A" (mass 0.175) outranks every other single letter (0.025)
        assert lam[0] == ""
        assert lam[1] == "A"
        assert "AA" in lam  # 0.06125 beats "T" at 0.025
        assert lam.index("AA") < lam.index("T")


class TestProcessInterface:
    def test_row_is_unavailable(self):
        assert Tkf91Process(STD).row("", 1.0) is None

    def test_plugs_into_tree_simulation(self):
        t = generate_family("pinched_star", {"m": 4, "s": 0.1, "h": 0.5})[3]
        rng = np.random.default_rng(7)
        obs = simulate(t, Tkf91Process(STD), "AT", rng)
        assert set(obs) == set(t.leaves)
        assert all(isinstance(v, str) for v in obs.values())

    def test_mc_rows_are_distributions(self):
        rng = np.random.default_rng(8)
        rows = mc_rows(STD, ["", "A"], 0.3, 500, rng)
        assert set(rows) == {"", "A"}
        for d in rows.values():
            assert isinstance(d, Distribution)
            assert abs(sum(p for _, p in d.items()) - 1.0) < 1e-9

    def test_mc_rows_concentrate_at_small_t(self):
        rng = np.random.default_rng(9)
        rows = mc_rows(STD, ["AT"], 0.01, 2000, rng)
        assert rows["AT"].mass("AT") > 0.9


class TestRootExperiment:
    def test_near_zero_rates_error_within_candidate_tail(self):
        # leaves copy the root, so the only losses are roots outside the
        # epsilon candidate set (stationary tail mass 0.25 here)
        p = Tkf91Params(nu=1e-4, lam=1e-4, mu=2e-4)
        fam = generate_family("star", {"k": 9, "h": 1.0})
        res = tkf91_root_experiment(fam, p, s=0.5, h_star=1.0, trials=100,
                                    master_seed=11, epsilon=0.3,
                                    row_samples=300, ks=[9])
        tail = 1.0 - sum(stationary_pmf(p, s) for s in top_states(p, 0.3))
        assert res[0]["rate"] <= tail + 3 * math.sqrt(
            tail * (1 - tail) / 100) + 0.01

    def test_near_zero_rates_recover_candidate_roots(self):
        from rootrec.estimators import frequency_estimate
        p = Tkf91Params(nu=1e-4, lam=1e-4, mu=2e-4)
        t = generate_family("star", {"k": 9, "h": 1.0})[8]
        lam = top_states(p, 0.3)
        rng = np.random.default_rng(12)
        rows = mc_rows(p, lam, 1.0, 300, rng)
        proc = Tkf91Process(p)
        for truth in lam:
            obs = simulate(t, proc, truth, rng)
            rep = frequency_estimate(t, proc, obs, 0.5, 1.0, lam, rows, rng)
            assert rep.state == truth

    def test_csv_shape(self, tmp_path):
        rows = [{"k": 10, "trials": 5, "errors": 1, "rate": 0.2,
                 "ci_low": 0.0, "ci_high": 0.9}]
        out = tmp_path / "r.csv"
        with open(out, "w") as fh:
            write_experiment_csv(rows, fh)
        lines = out.read_text().splitlines()
        assert lines[0] == "k,trials,errors,rate,ci_low,ci_high"
        assert lines[1].startswith("10,5,1,0.2,")
