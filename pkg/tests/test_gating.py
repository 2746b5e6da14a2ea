import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from expertgate.errors import (
    DegenerateErrorBase,
    EmptyEnsembleError,
    ParameterError,
    StatsRegimeError,
)
from expertgate.gating import (
    BASE_PRIOR,
    GateEnsemble,
    TransferMethod,
    gate_probabilities,
    relatedness_asymmetry_probe,
    route,
    select_most_related,
    task_relatedness,
)
from expertgate.gate import train_gate
from expertgate.nn_core import SgdConfig
from expertgate.preprocess import compute_reference_stats
from expertgate.synth import SyntheticTaskSpec, generate_synthetic_task


class TestGateProbabilities:
    def test_equal_errors_uniform(self):
        np.testing.assert_allclose(gate_probabilities([3.0, 3.0, 3.0]), np.ones(3) / 3)

    def test_hand_softmax(self):
        p = gate_probabilities([0.0, 2.0], temperature=2.0)
        np.testing.assert_allclose(p, [0.7310586, 0.2689414], atol=1e-6)

    def test_high_temperature_flattens(self):
        p = gate_probabilities([0.0, 2.0], temperature=1e9)
        np.testing.assert_allclose(p, [0.5, 0.5], atol=1e-6)

    def test_empty_errors(self):
        with pytest.raises(EmptyEnsembleError):
            gate_probabilities([])

    def test_bad_temperature(self):
        with pytest.raises(ParameterError):
            gate_probabilities([1.0], temperature=0.0)

    @given(st.lists(st.floats(0, 50), min_size=1, max_size=8),
           st.floats(0.1, 10))
    @settings(max_examples=100, deadline=None)
    def test_sums_to_one(self, er, t):
        p = gate_probabilities(er, t)
        assert abs(p.sum() - 1.0) < 1e-6
        assert np.all(p > 0) and np.all(p <= 1)

    @given(st.lists(st.floats(0, 10), min_size=2, max_size=6),
           st.floats(-5, 5))
    @settings(max_examples=100, deadline=None)
    def test_shift_invariant(self, er, c):
        base = gate_probabilities(er, 2.0)
        shifted = gate_probabilities(np.asarray(er) + c, 2.0)
        np.testing.assert_allclose(base, shifted, atol=1e-9)

    def test_order_reversing(self):
        er = np.array([0.1, 0.5, 0.3])
        p = gate_probabilities(er, 2.0)
        assert np.all(np.argsort(p) == np.argsort(-er))


class TestRoute:
    def test_single_gate(self, two_tasks, shared_stats, trained_gates):
        ens = GateEnsemble([trained_gates[0]], shared_stats)
        d = route(ens, two_tasks[0].features[:1])
        np.testing.assert_allclose(d.probabilities, [1.0])
        assert d.selected == 0

    def test_selects_own_task(self, two_tasks, shared_stats, trained_gates):
        ens = GateEnsemble(trained_gates, shared_stats)
        hits = sum(route(ens, two_tasks[0].features[i:i + 1]).selected == 0
                   for i in range(100))
        assert hits >= 95

    def test_activation_threshold(self, shared_stats, trained_gates):
        # er [0, 0.1, 8], t=2 -> p ~ [0.512, 0.487, 0.009]
        p = gate_probabilities([0.0, 0.1, 8.0], 2.0)
        activated = tuple(np.flatnonzero(p >= 0.1))
        assert activated == (0, 1)

    def test_selected_invariant_to_temperature(self, two_tasks, shared_stats, trained_gates):
        x = two_tasks[1].features[:1]
        selections = {route(GateEnsemble(trained_gates, shared_stats, t), x).selected
                      for t in (0.1, 1.0, 2.0, 100.0)}
        assert len(selections) == 1

    def test_empty_ensemble(self, shared_stats):
        with pytest.raises(EmptyEnsembleError):
            route(GateEnsemble([], shared_stats), np.zeros((1, 32)))

    def test_mixed_stats_rejected(self, two_tasks, trained_gates):
        other = compute_reference_stats(two_tasks[1].features, "other")
        with pytest.raises(StatsRegimeError):
            GateEnsemble(trained_gates, other)


class TestTaskRelatedness:
    def test_equal_errors_give_one(self):
        assert task_relatedness(0.3, 0.3) == 1.0

    def test_hand_values(self):
        assert task_relatedness(0.5, 1.0) == pytest.approx(0.0, abs=1e-12)
        assert task_relatedness(0.5, 0.6) == pytest.approx(0.8, abs=1e-12)

    def test_degenerate_base(self):
        with pytest.raises(DegenerateErrorBase):
            task_relatedness(0.0, 0.5)

    @given(st.floats(0.01, 10), st.floats(0.0, 10), st.floats(0.001, 1))
    @settings(max_examples=100, deadline=None)
    def test_strictly_decreasing_in_prior_error(self, er_k, er_a, delta):
        assert task_relatedness(er_k, er_a + delta) < task_relatedness(er_k, er_a)

    @given(st.floats(0.01, 10), st.floats(0.0, 10))
    @settings(max_examples=100, deadline=None)
    def test_below_one_iff_prior_worse(self, er_k, er_a):
        assert (task_relatedness(er_k, er_a) < 1.0) == (er_a > er_k)


class TestSelectMostRelated:
    def test_empty_ensemble_fallback(self, shared_stats, trained_gates, two_tasks):
        ens = GateEnsemble([], shared_stats)
        rep = select_most_related(ens, trained_gates[0], two_tasks[0].features[:50])
        assert rep.chosen_prior == BASE_PRIOR
        assert rep.method == TransferMethod.FINE_TUNE
        assert rep.entries == []

    def test_same_distribution_prior_chosen(self, two_tasks, shared_stats):
        # two gates trained on the same distribution: rel ~ 1, LwF chosen
        cfg_a = SgdConfig(epochs=50, seed=1)
        cfg_b = SgdConfig(epochs=50, seed=2)
        g_prior, _ = train_gate(two_tasks[0].features[:300], shared_stats, 8, cfg_a, "prior")
        g_new, _ = train_gate(two_tasks[0].features[300:], shared_stats, 8, cfg_b, "new")
        ens = GateEnsemble([g_prior], shared_stats)
        rep = select_most_related(ens, g_new, two_tasks[0].features[550:])
        assert rep.chosen_prior == "prior"
        assert rep.entries[0].rel > 0.85
        assert rep.method == TransferMethod.LWF

    def test_disjoint_prior_means_finetune(self, two_tasks, shared_stats, trained_gates):
        ens = GateEnsemble([trained_gates[1]], shared_stats)
        rep = select_most_related(ens, trained_gates[0], two_tasks[0].features[:100])
        assert rep.entries[0].rel < 0.85
        assert rep.method == TransferMethod.FINE_TUNE

    def test_permutation_stable(self, two_tasks, shared_stats, trained_gates):
        cfg = SgdConfig(epochs=30, seed=9)
        g_new, _ = train_gate(two_tasks[0].features, shared_stats, 8, cfg, "new")
        val = two_tasks[0].features[:80]
        fwd = select_most_related(GateEnsemble(trained_gates, shared_stats), g_new, val)
        rev = select_most_related(GateEnsemble(trained_gates[::-1], shared_stats), g_new, val)
        assert fwd.chosen_prior == rev.chosen_prior
        assert {e.prior_task: e.rel for e in fwd.entries} == \
               {e.prior_task: e.rel for e in rev.entries}


class TestAsymmetryProbe:
    def test_nested_manifolds_asymmetric(self):
        # task A's manifold is a strict subspace of task B's
        spec_a = SyntheticTaskSpec("a", "nested", 2, 24, 3, 800, 0.05, seed=3, basis_seed=99)
        spec_b = SyntheticTaskSpec("b", "nested", 6, 24, 3, 800, 0.05, seed=4, basis_seed=99)
        data_a = generate_synthetic_task(spec_a)
        data_b = generate_synthetic_task(spec_b)
        stats = compute_reference_stats(
            np.vstack([data_a.features, data_b.features]), "nested")
        cfg = SgdConfig(learning_rate=0.05, epochs=100, seed=0)
        gate_a, _ = train_gate(data_a.features[:600], stats, 8, cfg, "a")
        gate_b, _ = train_gate(data_b.features[:600], stats, 8, cfg, "b")
        rel_ab, rel_ba = relatedness_asymmetry_probe(
            gate_a, gate_b, data_a.features[600:], data_b.features[600:], stats)
        # B's gate spans A's subspace, so it reconstructs A well; not vice versa
        assert rel_ab > rel_ba
        assert abs(rel_ab - rel_ba) > 0.05

    def test_identical_tasks_symmetric(self, two_tasks, shared_stats):
        cfg = SgdConfig(epochs=50, seed=5)
        x = two_tasks[0].features
        g1, _ = train_gate(x[:300], shared_stats, 8, cfg, "g1")
        g2, _ = train_gate(x[300:], shared_stats, 8, SgdConfig(epochs=50, seed=6), "g2")
        rel_ab, rel_ba = relatedness_asymmetry_probe(
            g1, g2, x[:100], x[500:], shared_stats)
        assert rel_ab == pytest.approx(1.0, abs=0.3)
        assert rel_ba == pytest.approx(1.0, abs=0.3)

    def test_disjoint_tasks_unrelated(self, two_tasks, shared_stats, trained_gates):
        rel_ab, rel_ba = relatedness_asymmetry_probe(
            trained_gates[0], trained_gates[1],
            two_tasks[0].features[:100], two_tasks[1].features[:100], shared_stats)
        assert rel_ab < 0.85 and rel_ba < 0.85
