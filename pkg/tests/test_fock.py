"""Fock-engine unit tests: states, circuits, loss channels, distributions."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import binom, unitary_group

from starphase.fock import (
    FockError,
    LinearCircuit,
    SparseAmplitudeState,
    apply_circuit,
    apply_creation,
    apply_loss,
    beamsplitter_50_50,
    dft_circuit,
    identity_circuit,
    make_split_state,
    pnr_distribution,
    tensor_states,
    thin_distribution,
    vacuum_state,
)

SQ2 = math.sqrt(2.0)


class TestSplitState:
    def test_vacuum_case(self):
        state = make_split_state(0)
        assert state.terms == {(0, 0): 1.0 + 0.0j}

    def test_single_photon(self):
        state = make_split_state(1)
        assert state.amplitude((1, 0)) == pytest.approx(1 / SQ2)
        assert state.amplitude((0, 1)) == pytest.approx(1 / SQ2)

    def test_two_photons(self):
        # expand (a+b)^2 |vac> = sqrt(2)|20> + 2|11> + sqrt(2)|02>, then normalize
        state = make_split_state(2)
        assert state.amplitude((2, 0)) == pytest.approx(0.5)
        assert state.amplitude((1, 1)) == pytest.approx(1 / SQ2)
        assert state.amplitude((0, 2)) == pytest.approx(0.5)

    @pytest.mark.parametrize("m", [0, 1, 2, 5, 12])
    def test_normalized(self, m):
        assert make_split_state(m).norm_sq() == pytest.approx(1.0, abs=1e-12)

    def test_rejects_negative(self):
        with pytest.raises(FockError):
            make_split_state(-1)

    def test_mode_pair_placement(self):
        state = make_split_state(1, mode_count=4, modes=(1, 3))
        assert state.amplitude((0, 1, 0, 0)) == pytest.approx(1 / SQ2)
        assert state.amplitude((0, 0, 0, 1)) == pytest.approx(1 / SQ2)


class TestCircuits:
    def test_single_photon_through_balanced_splitter(self):
        state = SparseAmplitudeState({(1, 0): 1.0}, 2)
        out = apply_circuit(state, beamsplitter_50_50())
        assert abs(out.amplitude((1, 0))) ** 2 == pytest.approx(0.5)
        assert abs(out.amplitude((0, 1))) ** 2 == pytest.approx(0.5)

    def test_two_photon_bunching(self):
        # |1,1> through a balanced splitter: the (1,1) outcome interferes away
        state = SparseAmplitudeState({(1, 1): 1.0}, 2)
        out = apply_circuit(state, beamsplitter_50_50())
        assert abs(out.amplitude((1, 1))) ** 2 == pytest.approx(0.0, abs=1e-12)
        assert abs(out.amplitude((2, 0))) ** 2 == pytest.approx(0.5)

    def test_identity_unchanged(self):
        state = make_split_state(3)
        out = apply_circuit(state, identity_circuit(2))
        for occ, amp in state.terms.items():
            assert out.amplitude(occ) == pytest.approx(amp)

    def test_photon_number_conserved(self):
        state = tensor_states(make_split_state(2), make_split_state(1))
        out = apply_circuit(state, dft_circuit(4))
        assert out.total_photons() == {3}

    @pytest.mark.parametrize("seed", [0, 1, 2])
    @pytest.mark.parametrize("n_modes", [2, 3])
    def test_norm_preserved_random_unitary(self, seed, n_modes):
        u = unitary_group.rvs(n_modes, random_state=seed)
        state = make_split_state(3, mode_count=n_modes, modes=(0, 1))
        out = apply_circuit(state, LinearCircuit(u))
        assert out.norm_sq() == pytest.approx(1.0, abs=1e-10)

    def test_subset_of_modes(self):
        state = SparseAmplitudeState({(1, 0, 1): 1.0}, 3)
        out = apply_circuit(state, beamsplitter_50_50(), modes=(0, 1))
        assert abs(out.amplitude((1, 0, 1))) ** 2 == pytest.approx(0.5)
        assert abs(out.amplitude((0, 1, 1))) ** 2 == pytest.approx(0.5)

    def test_dimension_mismatch(self):
        with pytest.raises(FockError):
            apply_circuit(make_split_state(1), dft_circuit(3))

    def test_rejects_non_unitary(self):
        with pytest.raises(FockError):
            LinearCircuit(np.array([[1.0, 0.0], [1.0, 1.0]]))


class TestDft:
    def test_one_mode(self):
        assert dft_circuit(1).matrix == pytest.approx(np.array([[1.0]]))

    def test_two_modes_is_balanced_splitter(self):
        expected = np.array([[1, 1], [1, -1]]) / SQ2
        assert dft_circuit(2).matrix == pytest.approx(expected, abs=1e-15)

    @pytest.mark.parametrize("n", [1, 2, 3, 4, 7, 16])
    def test_unitarity(self, n):
        u = dft_circuit(n).matrix
        assert np.max(np.abs(u @ u.conj().T - np.eye(n))) < 1e-12

    def test_rejects_zero_modes(self):
        with pytest.raises(FockError):
            dft_circuit(0)


class TestLoss:
    def test_full_transmission_is_identity(self):
        state = make_split_state(2)
        ensemble = apply_loss(state, 1.0)
        assert len(ensemble) == 1
        weight, out = ensemble[0]
        assert weight == pytest.approx(1.0)
        for occ, amp in state.terms.items():
            assert out.amplitude(occ) == pytest.approx(amp)

    def test_zero_transmission_gives_vacuum(self):
        dist = pnr_distribution(apply_loss(make_split_state(3), 0.0))
        assert dist.probability((0, 0)) == pytest.approx(1.0)

    def test_two_photon_binomial_thinning(self):
        eta = 0.3
        dist = pnr_distribution(
            apply_loss(SparseAmplitudeState({(2,): 1.0}, 1), eta)
        )
        for k in range(3):
            assert dist.probability((k,)) == pytest.approx(binom.pmf(k, 2, eta))

    def test_weights_sum_to_one(self):
        ensemble = apply_loss(make_split_state(4), [0.3, 0.8])
        assert sum(w for w, _ in ensemble) == pytest.approx(1.0, abs=1e-12)

    @settings(max_examples=25, deadline=None)
    @given(
        eta1=st.floats(0.0, 1.0),
        eta2=st.floats(0.0, 1.0),
    )
    def test_loss_composition(self, eta1, eta2):
        dist = pnr_distribution(make_split_state(3))
        two_step = thin_distribution(thin_distribution(dist, eta1), eta2)
        one_step = thin_distribution(dist, eta1 * eta2)
        for occ in set(two_step.probabilities) | set(one_step.probabilities):
            assert two_step.probability(occ) == pytest.approx(
                one_step.probability(occ), abs=1e-10
            )

    def test_rejects_bad_transmittance(self):
        with pytest.raises(FockError):
            apply_loss(make_split_state(1), 1.5)


class TestPnrDistribution:
    def test_balanced_single_photon(self):
        dist = pnr_distribution(make_split_state(1))
        assert dist.probability((1, 0)) == pytest.approx(0.5)
        assert dist.probability((0, 1)) == pytest.approx(0.5)

    def test_single_aux_photon_spreads_over_four_detectors(self):
        # one split photon entering the open port of each telescope's splitter
        state = make_split_state(1, mode_count=4, modes=(1, 3))
        state = apply_circuit(state, beamsplitter_50_50(), modes=(0, 1))
        state = apply_circuit(state, beamsplitter_50_50(), modes=(2, 3))
        dist = pnr_distribution(state)
        for mode in range(4):
            occ = tuple(1 if j == mode else 0 for j in range(4))
            assert dist.probability(occ) == pytest.approx(0.25)

    def test_equal_mixture(self):
        ensemble = [(0.5, make_split_state(0)), (0.5, make_split_state(1))]
        dist = pnr_distribution(ensemble)
        assert dist.probability((0, 0)) == pytest.approx(0.5)
        assert dist.probability((1, 0)) == pytest.approx(0.25)
        assert dist.probability((0, 1)) == pytest.approx(0.25)

    def test_rejects_unnormalized_ensemble(self):
        with pytest.raises(FockError):
            pnr_distribution([(0.4, make_split_state(0))])


class TestStateInvariants:
    def test_rejects_wrong_mode_count(self):
        with pytest.raises(FockError):
            SparseAmplitudeState({(1, 0, 0): 1.0}, 2)

    def test_rejects_negative_occupation(self):
        with pytest.raises(FockError):
            SparseAmplitudeState({(-1, 0): 1.0}, 2)

    def test_apply_creation_raises_sqrt_factors(self):
        state = apply_creation(vacuum_state(1), {0: 1.0})
        state = apply_creation(state, {0: 1.0})
        # a†a†|0> = sqrt(2)|2>
        assert state.amplitude((2,)) == pytest.approx(SQ2)
